// Builds recipe strings in the server's canonical key order so that the
// code tab emits text the service parses and renders back unchanged.

export interface RecipeParts {
  card: string;
  template?: string;
  templateCardIndex?: number;
  systemPrompt?: string;
  format: string;
  numDemos?: number;
  demosPoolSize?: number;
  seed?: number;
  maxInstances?: number;
  augmentors?: string[];
}

export const DEFAULT_DEMOS_POOL_SIZE = 100;
export const DEFAULT_SEED = 42;

export function composeRecipe(parts: RecipeParts): string {
  const pairs: string[] = [`card=${parts.card}`];
  if (parts.template) pairs.push(`template=${parts.template}`);
  if (parts.template === undefined && parts.templateCardIndex !== undefined) {
    pairs.push(`template_card_index=${parts.templateCardIndex}`);
  }
  if (parts.systemPrompt) pairs.push(`sys_prompt=${parts.systemPrompt}`);
  pairs.push(`format=${parts.format}`);
  if (parts.numDemos !== undefined && parts.numDemos !== 0) {
    pairs.push(`num_demos=${parts.numDemos}`);
  }
  if (
    parts.demosPoolSize !== undefined &&
    parts.demosPoolSize !== DEFAULT_DEMOS_POOL_SIZE
  ) {
    pairs.push(`demos_pool_size=${parts.demosPoolSize}`);
  }
  if (parts.seed !== undefined && parts.seed !== DEFAULT_SEED) {
    pairs.push(`seed=${parts.seed}`);
  }
  if (parts.maxInstances !== undefined) {
    pairs.push(`max_instances=${parts.maxInstances}`);
  }
  if (parts.augmentors && parts.augmentors.length > 0) {
    pairs.push(`augmentors=${parts.augmentors.join("+")}`);
  }
  return pairs.join(",");
}

/** Shell one-liners for reproducing the current recipe outside the UI. */
export function cliSnippets(recipe: string, split: string, maxInstances: number): string {
  const quoted = `'${recipe}'`;
  return [
    `promptforge prepare ${quoted} --split ${split} --max-instances ${maxInstances}`,
    `promptforge evaluate ${quoted} --split ${split} --max-instances ${maxInstances} --predictions preds.jsonl`,
  ].join("\n");
}
