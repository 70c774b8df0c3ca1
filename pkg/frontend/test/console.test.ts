// Answer pane contract: citations navigate to the quoted chunk, abstentions
// get a distinct banner with no citation list.

import { describe, expect, it } from "vitest";
import { chunkAnchorId, renderAnswerPane } from "../src/console.js";
import { client, nlQuestion } from "./helpers.js";

describe("query console", () => {
  it("clicking a citation marker highlights the cited chunk", async () => {
    const api = client();
    const response = await api.query(nlQuestion(), "NL", "gridcodex");
    expect(response.abstained).toBe(false);
    expect(response.citations.length).toBeGreaterThan(0);

    const view = renderAnswerPane(response);
    const marker = view.querySelector<HTMLAnchorElement>(".citation-marker");
    expect(marker).not.toBeNull();
    expect(marker!.textContent).toBe("[1]");

    marker!.click();
    const target = view.querySelector(`#${chunkAnchorId(response.citations[0].chunk_id)}`);
    expect(target).not.toBeNull();
    expect(target!.classList.contains("highlighted")).toBe(true);
    expect(view.querySelectorAll(".citation-chunk.highlighted")).toHaveLength(1);
  });

  it("renders the quoted chunk text verbatim from the payload", async () => {
    const api = client();
    const response = await api.query(nlQuestion(), "NL", "gridcodex");
    const view = renderAnswerPane(response);
    const quotes = [...view.querySelectorAll(".citation-quote")].map((n) => n.textContent);
    expect(quotes).toEqual(response.citations.map((c) => c.quote));
  });

  it("shows an abstention banner and no citations for refusals", async () => {
    const api = client();
    const response = await api.query("!!!", "NL", "vanilla_rag");
    expect(response.abstained).toBe(true);

    const view = renderAnswerPane(response);
    expect(view.querySelector(".abstention-banner")).not.toBeNull();
    expect(view.querySelector(".citation-list")).toBeNull();
    expect(view.querySelector(".citation-marker")).toBeNull();
  });

  it("surfaces API errors with code and message", async () => {
    const api = client();
    await expect(api.query("q", "XX", "gridcodex")).rejects.toMatchObject({
      status: 400,
      code: "unknown_region",
    });
  });
});
