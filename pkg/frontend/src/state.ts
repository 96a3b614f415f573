// UI selection state and the rules for which choices are available.
// Pure data + pure functions; the DOM layer subscribes to changes.

import type { ArtifactSummary } from "./types.js";
import { composeRecipe } from "./recipe.js";

export interface Selection {
  task: string;
  card: string;
  template: string;
  systemPrompt: string;
  format: string;
  numDemos: number;
  maxInstances: number;
  split: string;
  augmentors: string[];
}

export const EMPTY_SELECTION: Selection = {
  task: "",
  card: "",
  template: "",
  systemPrompt: "",
  format: "",
  numDemos: 0,
  maxInstances: 5,
  split: "test",
  augmentors: [],
};

export interface Catalog {
  tasks: ArtifactSummary[];
  cards: ArtifactSummary[];
  templates: ArtifactSummary[];
  systemPrompts: ArtifactSummary[];
  formats: ArtifactSummary[];
  augmentors: ArtifactSummary[];
  recipes: ArtifactSummary[];
}

export function groupArtifacts(items: ArtifactSummary[]): Catalog {
  const by = (kind: string): ArtifactSummary[] =>
    items.filter((a) => a.kind === kind);
  return {
    tasks: by("task"),
    cards: by("card"),
    templates: by("template"),
    systemPrompts: by("system_prompt"),
    formats: by("format"),
    augmentors: by("augmentor"),
    recipes: by("recipe"),
  };
}

export function cardsForTask(catalog: Catalog, task: string): ArtifactSummary[] {
  if (!task) return catalog.cards;
  return catalog.cards.filter((c) => c.task === task);
}

/** Templates a card declares, in the card's order; the card is authoritative. */
export function templatesForCard(
  catalog: Catalog,
  cardId: string,
): ArtifactSummary[] {
  const card = catalog.cards.find((c) => c.id === cardId);
  if (!card || !card.templates) return [];
  const byId = new Map(catalog.templates.map((t) => [t.id, t]));
  const out: ArtifactSummary[] = [];
  for (const id of card.templates) {
    const found = byId.get(id);
    out.push(found ?? { id, kind: "template", description: "" });
  }
  return out;
}

export function canGenerate(sel: Selection): boolean {
  return sel.card !== "" && sel.template !== "" && sel.format !== "";
}

export function recipeFromSelection(sel: Selection): string {
  return composeRecipe({
    card: sel.card,
    template: sel.template,
    systemPrompt: sel.systemPrompt || undefined,
    format: sel.format,
    numDemos: sel.numDemos,
    augmentors: sel.augmentors,
  });
}

/** Parse a pasted predictions file: JSONL rows {"prediction": ...} or raw lines. */
export function parsePredictionsText(text: string): string[] {
  const out: string[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    if (trimmed.startsWith("{")) {
      try {
        const row = JSON.parse(trimmed) as Record<string, unknown>;
        if (typeof row["prediction"] === "string") {
          out.push(row["prediction"]);
          continue;
        }
        if (row["prediction"] !== undefined) {
          out.push(String(row["prediction"]));
          continue;
        }
      } catch {
        // fall through: treat the line as a bare prediction
      }
    }
    out.push(trimmed);
  }
  return out;
}
