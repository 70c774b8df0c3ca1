// Tiny DOM helpers shared by the views; no framework, just elements.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

/** Clause path like [["1","General"],["1.2","Scope"]] -> "1 > 1.2 Scope". */
export function clauseLabel(path: [string, string][]): string {
  if (path.length === 0) return "-";
  const labels = path.map(([label]) => label).join(" > ");
  const heading = path[path.length - 1][1];
  return heading ? `${labels} ${heading}` : labels;
}

/** Render a payload number exactly as received; null means not applicable. */
export function rawScore(value: number | null | undefined): string {
  return value === null || value === undefined ? "--" : String(value);
}
