// Page wiring: a query console (region + mode + question) on top, with the
// trace inspector and report browser reachable from each answer. All state
// changes go through the HTTP API; the session only remembers what it asked.

import { ApiError, GridCodexClient } from "./api.js";
import { renderAnswerPane } from "./console.js";
import { el } from "./dom.js";
import { renderReportBrowser } from "./reports.js";
import { renderTraceInspector } from "./trace.js";
import type { Mode, QueryResponse } from "./types.js";

export interface SessionEntry {
  question: string;
  region: string;
  mode: Mode;
  traceId: string;
}

export class QuerySession {
  readonly history: readonly SessionEntry[] = [];

  record(entry: SessionEntry): void {
    (this.history as SessionEntry[]).push(entry); // append-only
  }
}

function errorView(error: unknown): HTMLElement {
  if (error instanceof ApiError) {
    return el("div", "api-error", `${error.code}: ${error.message}`);
  }
  return el("div", "api-error", String(error));
}

export async function bootstrap(root: HTMLElement, client: GridCodexClient): Promise<void> {
  const session = new QuerySession();

  const regionSelect = el("select", "region-select");
  const modeSelect = el("select", "mode-select");
  for (const mode of ["gridcodex", "vanilla_rag", "plain_llm"] as const) {
    modeSelect.append(new Option(mode, mode));
  }
  const questionBox = el("input", "question-box");
  questionBox.placeholder = "Ask about a grid code requirement…";
  const askButton = el("button", "ask-button", "Ask");
  const answerSlot = el("div", "answer-slot");
  const traceSlot = el("div", "trace-slot");

  const form = el("form", "query-console");
  form.append(regionSelect, modeSelect, questionBox, askButton);
  root.append(form, answerSlot, traceSlot);

  const { kbs } = await client.listKbs();
  const regions = [...new Set(kbs.filter((kb) => kb.kind === "factual").map((kb) => kb.region))];
  for (const region of regions) regionSelect.append(new Option(region, region));

  async function ask(): Promise<void> {
    answerSlot.replaceChildren();
    traceSlot.replaceChildren();
    const mode = modeSelect.value as Mode;
    let response: QueryResponse;
    try {
      response = await client.query(questionBox.value, regionSelect.value, mode);
    } catch (error) {
      answerSlot.append(errorView(error));
      return;
    }
    session.record({
      question: questionBox.value,
      region: regionSelect.value,
      mode,
      traceId: response.trace_id,
    });
    answerSlot.append(renderAnswerPane(response));
    try {
      traceSlot.append(renderTraceInspector(await client.trace(response.trace_id)));
    } catch (error) {
      traceSlot.append(errorView(error));
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void ask();
  });
}

export async function showReport(
  root: HTMLElement, client: GridCodexClient, jobId: string,
): Promise<void> {
  try {
    root.append(renderReportBrowser(await client.report(jobId)));
  } catch (error) {
    root.append(errorView(error));
  }
}
