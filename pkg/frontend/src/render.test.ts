import { describe, expect, it } from "vitest";

import type { JobManifest, SearchResponse, SearchResult } from "./api.js";
import {
  escapeHtml,
  highlight,
  renderGenerationBadge,
  renderJobsTable,
  renderResults,
  renderWarning,
  tokenizeQuery,
} from "./render.js";

function result(overrides: Partial<SearchResult> = {}): SearchResult {
  return {
    ticket_id: "T1",
    score: 0.5,
    snippet: "a snippet",
    title: "",
    department: "hpc",
    last_updated: "2025-03-01T12:00:00Z",
    source_type: "ticket",
    link: "https://rt.example.org/Ticket/Display.html?id=T1",
    ...overrides,
  };
}

function response(results: SearchResult[], warning?: string): SearchResponse {
  return { results, generation: 1, timings: {}, warning };
}

describe("highlight", () => {
  it("marks query tokens case-insensitively", () => {
    const html = highlight("GPU memory on the gpu node", ["gpu"]);
    expect(html).toBe("<mark>GPU</mark> memory on the <mark>gpu</mark> node");
  });

  it("escapes HTML in both marked and unmarked text", () => {
    const html = highlight("<b>gpu</b> & co", ["gpu"]);
    expect(html).toBe("&lt;b&gt;<mark>gpu</mark>&lt;/b&gt; &amp; co");
  });

  it("handles accented tokens", () => {
    expect(highlight("instalación fallida", ["instalación"])).toContain(
      "<mark>instalación</mark>",
    );
  });

  it("leaves text alone without tokens", () => {
    expect(highlight("plain", [])).toBe("plain");
  });
});

describe("tokenizeQuery", () => {
  it("splits on punctuation and lowercases", () => {
    expect(tokenizeQuery("¿Cuota de disco?")).toEqual(["cuota", "de", "disco"]);
  });
});

describe("renderResults", () => {
  it("preserves the API response order", () => {
    const html = renderResults(
      response([result({ ticket_id: "T9" }), result({ ticket_id: "T2" }), result({ ticket_id: "T5" })]),
      "snippet",
    );
    const order = [...html.matchAll(/data-ticket="([^"]+)"/g)].map((m) => m[1]);
    expect(order).toEqual(["T9", "T2", "T5"]);
  });

  it("links to the ticket and falls back to the id when there is no title", () => {
    const html = renderResults(response([result()]), "q");
    expect(html).toContain('href="https://rt.example.org/Ticket/Display.html?id=T1"');
    expect(html).toContain(">T1</a>");
  });

  it("highlights query tokens inside snippets", () => {
    const html = renderResults(
      response([result({ snippet: "the gpu node crashed" })]),
      "gpu crash",
    );
    expect(html).toContain("<mark>gpu</mark>");
    expect(html).not.toContain("<mark>crashed</mark>");
  });

  it("renders an empty state", () => {
    expect(renderResults(response([]), "q")).toContain("No results");
  });
});

describe("renderWarning", () => {
  it("is empty without a warning and visible with one", () => {
    expect(renderWarning(undefined)).toBe("");
    expect(renderWarning("reranker unavailable; results use fused order")).toContain(
      "reranker unavailable",
    );
  });
});

describe("renderGenerationBadge", () => {
  it("exposes the generation and updates when it changes", () => {
    const before = renderGenerationBadge(3, 100);
    const after = renderGenerationBadge(4, 120);
    expect(before).toContain('data-generation="3"');
    expect(after).toContain('data-generation="4"');
    expect(before).not.toBe(after);
  });
});

describe("renderJobsTable", () => {
  function job(overrides: Partial<JobManifest>): JobManifest {
    return {
      job_id: "j1",
      kind: "web",
      state: "queued",
      current_stage: "",
      progress: 0,
      created_at: "",
      updated_at: "",
      error: null,
      ...overrides,
    };
  }

  it("renders one badge class per state", () => {
    const html = renderJobsTable([
      job({ job_id: "a", state: "queued" }),
      job({ job_id: "b", state: "running", current_stage: "mutate", progress: 0.5 }),
      job({ job_id: "c", state: "succeeded", progress: 1 }),
      job({ job_id: "d", state: "failed", error: "boom" }),
    ]);
    for (const state of ["queued", "running", "succeeded", "failed"]) {
      expect(html).toContain(`state-${state}">${state}</span>`);
    }
    expect(html).toContain('value="50"');
    expect(html).toContain('title="boom"');
  });

  it("re-rendering after a manifest transition changes the row", () => {
    const queued = renderJobsTable([job({ job_id: "j" })]);
    const done = renderJobsTable([job({ job_id: "j", state: "succeeded", progress: 1 })]);
    expect(queued).toContain("state-queued");
    expect(done).toContain("state-succeeded");
    expect(done).toContain('value="100"');
  });

  it("renders an empty state", () => {
    expect(renderJobsTable([])).toContain("No jobs yet");
  });
});
