// Page wiring: search form, jobs polling, generation badge.

import { ApiClient, ApiError, SearchParams } from "./api.js";
import {
  renderError,
  renderGenerationBadge,
  renderJobsTable,
  renderResults,
  renderWarning,
} from "./render.js";

const POLL_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(client = new ApiClient()): void {
  const form = el<HTMLFormElement>("search-form");
  const queryInput = el<HTMLInputElement>("query");
  const departmentSelect = el<HTMLSelectElement>("department");
  const dateFrom = el<HTMLInputElement>("date-from");
  const dateTo = el<HTMLInputElement>("date-to");
  const resultsPane = el<HTMLElement>("results");
  const noticePane = el<HTMLElement>("notice");
  const jobsPane = el<HTMLElement>("jobs");
  const badgePane = el<HTMLElement>("generation-badge");

  // Last-write-wins: stale responses from slow requests are dropped.
  let searchSeq = 0;

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const seq = ++searchSeq;
    const query = queryInput.value;
    const params: SearchParams = { query };
    if (departmentSelect.value) params.department = departmentSelect.value;
    if (dateFrom.value) params.date_from = dateFrom.value;
    if (dateTo.value) params.date_to = dateTo.value;
    try {
      const response = await client.search(params);
      if (seq !== searchSeq) return;
      noticePane.innerHTML = renderWarning(response.warning);
      resultsPane.innerHTML = renderResults(response, query);
    } catch (err) {
      if (seq !== searchSeq) return;
      const message = err instanceof ApiError ? err.message : "search request failed";
      noticePane.innerHTML = renderError(message);
    }
  });

  async function refresh(): Promise<void> {
    try {
      const [health, jobs] = await Promise.all([client.health(), client.listJobs()]);
      badgePane.innerHTML = renderGenerationBadge(health.generation, health.documents);
      jobsPane.innerHTML = renderJobsTable(jobs);
    } catch {
      // transient; keep the previous rendering and retry on the next tick
    }
  }

  void refresh();
  setInterval(() => void refresh(), POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("search-form")) {
  startApp();
}
