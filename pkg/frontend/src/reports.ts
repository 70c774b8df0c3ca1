// Report browser: one aggregate grid per report (region x system with the
// three metric columns) and a per-item drill-down under each row. Metric
// cells print the payload values verbatim; "--" marks metrics that do not
// apply (the plain-LLM baseline has no retrieval metrics).

import { el, rawScore } from "./dom.js";
import type { Report, ReportItem, ReportRow } from "./types.js";

function itemTable(items: ReportItem[]): HTMLElement {
  const table = el("table", "item-table");
  const head = el("tr", "item-table-head");
  for (const column of ["Item", "Quality", "Faithfulness", "Recall", "Strict", "Status"]) {
    head.append(el("th", "", column));
  }
  table.append(head);
  for (const item of items) {
    const row = el("tr", "item-row");
    row.dataset.itemId = item.item_id;
    row.append(
      el("td", "", item.item_id),
      el("td", "", rawScore(item.answer_quality)),
      el("td", "", rawScore(item.faithfulness)),
      el("td", "", rawScore(item.recall_fraction)),
      el("td", "", item.recall_strict === null ? "--" : String(item.recall_strict)),
      el("td", "", item.failed ? (item.error ?? "failed") : item.abstained ? "abstained" : "ok"),
    );
    table.append(row);
  }
  return table;
}

function aggregateRow(report: Report, row: ReportRow): HTMLElement[] {
  const tr = el("tr", "report-row");
  tr.dataset.region = row.region;
  tr.dataset.mode = row.mode;
  tr.append(
    el("td", "", row.region),
    el("td", "", row.system),
    el("td", "", rawScore(row.answer_quality)),
    el("td", "", rawScore(row.faithfulness)),
    el("td", "", rawScore(row.recall_strict)),
  );

  const detail = el("tr", "report-detail hidden");
  const cell = el("td", "");
  cell.colSpan = 5;
  cell.append(itemTable(report.items.filter(
    (item) => item.region === row.region && item.mode === row.mode,
  )));
  detail.append(cell);

  tr.addEventListener("click", () => detail.classList.toggle("hidden"));
  return [tr, detail];
}

export function renderReportBrowser(report: Report): HTMLElement {
  const root = el("section", "report-browser");
  const table = el("table", "report-grid");
  const head = el("tr", "report-head");
  for (const column of ["Region", "Model", "Answer Quality", "Faithfulness", `Recall@${report.k}`]) {
    head.append(el("th", "", column));
  }
  table.append(head);
  for (const row of report.rows) {
    table.append(...aggregateRow(report, row));
  }
  root.append(table);
  root.append(el("p", "report-formula", `composite: ${report.composite_formula}`));
  return root;
}
