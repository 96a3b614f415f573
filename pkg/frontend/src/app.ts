// Wires the static page to the service: dropdowns from /artifacts, the
// Generate button to /prepare, the code tab to /recipes/parse, and the
// evaluation panel to /evaluate.

import {
  evaluate,
  getHealth,
  listArtifacts,
  parseRecipe,
  prepare,
} from "./api.js";
import {
  canGenerate,
  cardsForTask,
  groupArtifacts,
  parsePredictionsText,
  recipeFromSelection,
  templatesForCard,
  type Catalog,
  type Selection,
  EMPTY_SELECTION,
} from "./state.js";
import {
  renderCodeTab,
  renderError,
  renderEvaluation,
  renderPrompts,
  escapeHtml,
} from "./panels.js";
import { cliSnippets } from "./recipe.js";
import type { ArtifactSummary } from "./types.js";

function byId<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) throw new Error(`page is missing #${id}`);
  return el as T;
}

function fillSelect(
  select: HTMLSelectElement,
  items: ArtifactSummary[],
  opts: { empty?: string; keep?: string } = {},
): void {
  const prior = opts.keep ?? select.value;
  const head = opts.empty !== undefined ? `<option value="">${escapeHtml(opts.empty)}</option>` : "";
  select.innerHTML =
    head +
    items
      .map((a) => `<option value="${escapeHtml(a.id)}">${escapeHtml(a.id)}</option>`)
      .join("");
  if (prior && items.some((a) => a.id === prior)) select.value = prior;
}

export interface App {
  state: Selection;
  refresh(): void;
  ready: Promise<void>;
}

export function wireApp(doc: Document, base: string): App {
  const taskSel = byId<HTMLSelectElement>(doc, "task-select");
  const cardSel = byId<HTMLSelectElement>(doc, "card-select");
  const templateSel = byId<HTMLSelectElement>(doc, "template-select");
  const sysSel = byId<HTMLSelectElement>(doc, "sys-select");
  const formatSel = byId<HTMLSelectElement>(doc, "format-select");
  const demosInput = byId<HTMLInputElement>(doc, "num-demos");
  const maxInput = byId<HTMLInputElement>(doc, "max-instances");
  const splitSel = byId<HTMLSelectElement>(doc, "split-select");
  const generateBtn = byId<HTMLButtonElement>(doc, "generate-btn");
  const promptsPanel = byId<HTMLElement>(doc, "prompts-panel");
  const codePanel = byId<HTMLElement>(doc, "code-panel");
  const evalBtn = byId<HTMLButtonElement>(doc, "evaluate-btn");
  const predsInput = byId<HTMLTextAreaElement>(doc, "predictions-input");
  const evalPanel = byId<HTMLElement>(doc, "eval-panel");
  const statusLine = byId<HTMLElement>(doc, "status-line");

  const state: Selection = { ...EMPTY_SELECTION };
  let catalog: Catalog = groupArtifacts([]);
  let inflight: AbortController | null = null;

  function cancelInflight(): void {
    if (inflight) inflight.abort();
    inflight = null;
  }

  function refresh(): void {
    fillSelect(cardSel, cardsForTask(catalog, state.task), { keep: state.card });
    state.card = cardSel.value;
    fillSelect(templateSel, templatesForCard(catalog, state.card), {
      keep: state.template,
    });
    state.template = templateSel.value;
    generateBtn.disabled = !canGenerate(state);
    evalBtn.disabled = !canGenerate(state);
  }

  function readControls(): void {
    state.task = taskSel.value;
    state.card = cardSel.value;
    state.template = templateSel.value;
    state.systemPrompt = sysSel.value;
    state.format = formatSel.value;
    state.numDemos = Math.max(0, Number(demosInput.value) || 0);
    state.maxInstances = Math.max(1, Number(maxInput.value) || 5);
    state.split = splitSel.value;
  }

  async function generate(): Promise<void> {
    readControls();
    if (!canGenerate(state)) return;
    cancelInflight();
    const ctrl = new AbortController();
    inflight = ctrl;
    const recipe = recipeFromSelection(state);
    promptsPanel.innerHTML = `<p class="hint">Preparing…</p>`;
    try {
      const [body, parsed] = await Promise.all([
        prepare(
          base,
          {
            recipe,
            split: state.split,
            max_instances: state.maxInstances,
          },
          ctrl.signal,
        ),
        parseRecipe(base, recipe, ctrl.signal),
      ]);
      promptsPanel.innerHTML = renderPrompts(body);
      codePanel.innerHTML = renderCodeTab(
        recipe,
        parsed.canonical_recipe,
        cliSnippets(recipe, state.split, state.maxInstances),
      );
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      promptsPanel.innerHTML = renderError(err);
    } finally {
      if (inflight === ctrl) inflight = null;
    }
  }

  async function runEvaluation(): Promise<void> {
    readControls();
    if (!canGenerate(state)) return;
    cancelInflight();
    const ctrl = new AbortController();
    inflight = ctrl;
    const recipe = recipeFromSelection(state);
    const predictions = parsePredictionsText(predsInput.value);
    evalPanel.innerHTML = `<p class="hint">Scoring…</p>`;
    try {
      const body = await evaluate(
        base,
        {
          recipe,
          split: state.split,
          max_instances: state.maxInstances,
          ...(predictions.length > 0 ? { predictions } : { echo_target: true }),
        },
        ctrl.signal,
      );
      evalPanel.innerHTML = renderEvaluation(body.report);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") return;
      evalPanel.innerHTML = renderError(err);
    } finally {
      if (inflight === ctrl) inflight = null;
    }
  }

  taskSel.addEventListener("change", () => {
    readControls();
    state.card = "";
    state.template = "";
    refresh();
  });
  cardSel.addEventListener("change", () => {
    readControls();
    state.template = "";
    refresh();
  });
  for (const el of [templateSel, sysSel, formatSel, demosInput, maxInput, splitSel]) {
    el.addEventListener("change", () => {
      readControls();
      refresh();
    });
  }
  generateBtn.addEventListener("click", () => void generate());
  evalBtn.addEventListener("click", () => void runEvaluation());

  const ready = (async () => {
    try {
      const [health, listing] = await Promise.all([
        getHealth(base),
        listArtifacts(base),
      ]);
      catalog = groupArtifacts(listing.artifacts);
      fillSelect(taskSel, catalog.tasks, { empty: "(any task)" });
      fillSelect(sysSel, catalog.systemPrompts, { empty: "(none)" });
      fillSelect(formatSel, catalog.formats);
      statusLine.textContent = `connected · ${health.artifact_count} artifacts · v${health.version}`;
      readControls();
      refresh();
    } catch (err) {
      statusLine.textContent = "service unreachable";
      promptsPanel.innerHTML = renderError(err);
    }
  })();

  return { state, refresh, ready };
}
