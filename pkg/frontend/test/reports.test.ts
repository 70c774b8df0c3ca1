// Report browser contract: the aggregate grid mirrors the report payload
// ("--" for inapplicable plain-LLM metrics) and each row drills down to its
// per-item results.

import { beforeAll, describe, expect, it } from "vitest";
import { renderReportBrowser } from "../src/reports.js";
import type { Report } from "../src/types.js";
import { benchItems, client } from "./helpers.js";

let report: Report;

beforeAll(async () => {
  const api = client();
  const items = benchItems().filter((i) => i.region === "NL").slice(0, 2);
  const { job_id } = await api.startEval(items, ["plain_llm", "gridcodex"]);
  const job = await api.waitForJob(job_id);
  expect(job.state).toBe("done");
  report = await api.report(job_id);
});

describe("report browser", () => {
  it("renders one aggregate row per (region, system) with payload scores", () => {
    const view = renderReportBrowser(report);
    const rows = view.querySelectorAll(".report-row");
    expect(rows).toHaveLength(report.rows.length);
    expect(view.querySelector(".report-head")!.textContent).toContain(`Recall@${report.k}`);

    for (const [i, row] of report.rows.entries()) {
      const cells = [...rows[i].querySelectorAll("td")].map((c) => c.textContent);
      expect(cells[0]).toBe(row.region);
      expect(cells[1]).toBe(row.system);
      expect(cells[2]).toBe(row.answer_quality === null ? "--" : String(row.answer_quality));
    }
  });

  it("shows -- for the plain baseline's retrieval metrics", () => {
    const view = renderReportBrowser(report);
    const plain = view.querySelector<HTMLElement>('.report-row[data-mode="plain_llm"]');
    expect(plain).not.toBeNull();
    const cells = [...plain!.querySelectorAll("td")].map((c) => c.textContent);
    expect(cells.slice(3)).toEqual(["--", "--"]);
  });

  it("drills down to per-item rows on click", () => {
    const view = renderReportBrowser(report);
    const grid = view.querySelector(".report-grid")!;
    const row = grid.querySelector<HTMLElement>('.report-row[data-mode="gridcodex"]')!;
    const detail = row.nextElementSibling as HTMLElement;
    expect(detail.classList.contains("hidden")).toBe(true);

    row.click();
    expect(detail.classList.contains("hidden")).toBe(false);
    const expected = report.items.filter(
      (i) => i.mode === "gridcodex" && i.region === row.dataset.region,
    );
    expect(detail.querySelectorAll(".item-row")).toHaveLength(expected.length);
  });
});
