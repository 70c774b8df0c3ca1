// Query console: answer pane with clause-numbered citations and a distinct
// abstention banner. Citation markers like [2] navigate to (and highlight)
// the quoted chunk text below the answer.

import { clauseLabel, el } from "./dom.js";
import type { QueryResponse } from "./types.js";

const MARKER_RE = /\[(\d+)\]/g;

export function chunkAnchorId(chunkId: string): string {
  return `chunk-${chunkId.replace(/[^A-Za-z0-9_-]/g, "_")}`;
}

function highlightChunk(root: HTMLElement, chunkId: string): void {
  for (const node of root.querySelectorAll(".citation-chunk.highlighted")) {
    node.classList.remove("highlighted");
  }
  const target = root.querySelector<HTMLElement>(`#${chunkAnchorId(chunkId)}`);
  if (target) {
    target.classList.add("highlighted");
    target.scrollIntoView?.({ block: "nearest" });
  }
}

function renderAnswerText(response: QueryResponse, root: HTMLElement): HTMLElement {
  const pane = el("div", "answer-text");
  let last = 0;
  for (const match of response.answer.matchAll(MARKER_RE)) {
    const index = Number(match[1]);
    pane.append(response.answer.slice(last, match.index));
    last = (match.index ?? 0) + match[0].length;
    const citation = response.citations[index - 1];
    if (citation === undefined) {
      pane.append(match[0]);
      continue;
    }
    const link = el("a", "citation-marker", match[0]);
    link.href = `#${chunkAnchorId(citation.chunk_id)}`;
    link.dataset.chunkId = citation.chunk_id;
    link.addEventListener("click", (event) => {
      event.preventDefault();
      highlightChunk(root, citation.chunk_id);
    });
    pane.append(link);
  }
  pane.append(response.answer.slice(last));
  return pane;
}

export function renderAnswerPane(response: QueryResponse): HTMLElement {
  const root = el("section", "answer-pane");
  if (response.abstained) {
    const banner = el("div", "abstention-banner", response.answer);
    banner.setAttribute("role", "alert");
    root.append(banner);
    return root; // no citation list for refusals
  }

  root.append(renderAnswerText(response, root));

  const list = el("ol", "citation-list");
  response.citations.forEach((citation, i) => {
    const item = el("li", "citation-chunk");
    item.id = chunkAnchorId(citation.chunk_id);
    item.dataset.chunkId = citation.chunk_id;
    item.append(
      el("span", "citation-index", `[${i + 1}]`),
      el("span", "citation-clause", clauseLabel(citation.clause_path)),
      el("blockquote", "citation-quote", citation.quote),
    );
    list.append(item);
  });
  root.append(list);
  return root;
}
