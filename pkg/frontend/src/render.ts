// Pure HTML string renderers, kept DOM-free so they are testable in node.

import type { JobManifest, SearchResponse } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function tokenizeQuery(query: string): string[] {
  return (query.toLowerCase().match(/[\p{L}\p{N}]+/gu) ?? []).filter((t) => t.length > 0);
}

/** Wrap query-token occurrences in <mark>, HTML-escaping everything else. */
export function highlight(text: string, queryTokens: string[]): string {
  if (queryTokens.length === 0) return escapeHtml(text);
  const wanted = new Set(queryTokens.map((t) => t.toLowerCase()));
  const parts = text.split(/([\p{L}\p{N}]+)/u);
  return parts
    .map((part, i) => {
      const escaped = escapeHtml(part);
      if (i % 2 === 1 && wanted.has(part.toLowerCase())) {
        return `<mark>${escaped}</mark>`;
      }
      return escaped;
    })
    .join("");
}

export function renderResults(response: SearchResponse, query: string): string {
  const tokens = tokenizeQuery(query);
  if (response.results.length === 0) {
    return '<p class="empty">No results.</p>';
  }
  const items = response.results.map((r) => {
    const title = r.title ? escapeHtml(r.title) : escapeHtml(r.ticket_id);
    return [
      `<li class="result" data-ticket="${escapeHtml(r.ticket_id)}">`,
      `<a href="${escapeHtml(r.link)}">${title}</a>`,
      `<span class="meta">${escapeHtml(r.department)} · ${escapeHtml(r.source_type)}` +
        ` · ${escapeHtml(r.last_updated)} · score ${r.score.toFixed(4)}</span>`,
      `<p class="snippet">${highlight(r.snippet, tokens)}</p>`,
      "</li>",
    ].join("");
  });
  return `<ol class="results">${items.join("")}</ol>`;
}

export function renderWarning(warning: string | undefined): string {
  if (!warning) return "";
  return `<p class="warning">${escapeHtml(warning)}</p>`;
}

export function renderError(message: string): string {
  return `<p class="error">${escapeHtml(message)}</p>`;
}

export function renderGenerationBadge(generation: number, documents: number): string {
  return `<span class="badge generation" data-generation="${generation}">` +
    `gen ${generation} · ${documents} chunks</span>`;
}

export function renderJobsTable(jobs: JobManifest[]): string {
  if (jobs.length === 0) {
    return '<p class="empty">No jobs yet.</p>';
  }
  const rows = jobs.map((job) => {
    const pct = Math.round(job.progress * 100);
    const error = job.error ? ` title="${escapeHtml(job.error)}"` : "";
    return [
      `<tr data-job="${escapeHtml(job.job_id)}"${error}>`,
      `<td>${escapeHtml(job.job_id)}</td>`,
      `<td>${escapeHtml(job.kind)}</td>`,
      `<td><span class="badge state-${job.state}">${job.state}</span></td>`,
      `<td>${escapeHtml(job.current_stage)}</td>`,
      `<td><progress max="100" value="${pct}"></progress> ${pct}%</td>`,
      "</tr>",
    ].join("");
  });
  return (
    "<table class=\"jobs\"><thead><tr>" +
    "<th>job</th><th>kind</th><th>state</th><th>stage</th><th>progress</th>" +
    `</tr></thead><tbody>${rows.join("")}</tbody></table>`
  );
}
