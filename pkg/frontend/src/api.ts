// Typed client for the ticket search JSON API.

export interface SearchResult {
  ticket_id: string;
  score: number;
  snippet: string;
  title: string;
  department: string;
  last_updated: string;
  source_type: string;
  link: string;
}

export interface SearchResponse {
  results: SearchResult[];
  generation: number;
  timings: Record<string, number>;
  warning?: string;
}

export interface SearchParams {
  query: string;
  final_k?: number;
  department?: string;
  date_from?: string;
  date_to?: string;
  source_types?: string[];
}

export interface Health {
  status: string;
  generation: number;
  documents: number;
  embedder_id: string;
  reranker_id: string;
}

export type JobState = "queued" | "running" | "succeeded" | "failed";

export interface JobManifest {
  job_id: string;
  kind: string;
  state: JobState;
  current_stage: string;
  progress: number;
  created_at: string;
  updated_at: string;
  error: string | null;
}

export interface ApiErrorBody {
  error: { code: string; message: string; field?: string };
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public field?: string,
    message?: string,
  ) {
    super(message ?? code);
  }
}

async function parse<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let body: ApiErrorBody | null = null;
    try {
      body = await res.json();
    } catch {
      // non-JSON error body; fall through to the generic error
    }
    if (body?.error) {
      throw new ApiError(res.status, body.error.code, body.error.field, body.error.message);
    }
    throw new ApiError(res.status, "http_error", undefined, `HTTP ${res.status}`);
  }
  return res.json();
}

export class ApiClient {
  constructor(private baseUrl = "") {}

  async search(params: SearchParams): Promise<SearchResponse> {
    return parse(
      await fetchFn()(`${this.baseUrl}/search`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(params),
      }),
    );
  }

  async health(): Promise<Health> {
    return parse(await fetchFn()(`${this.baseUrl}/health`));
  }

  async listJobs(): Promise<JobManifest[]> {
    const body = await parse<{ jobs: JobManifest[] }>(await fetchFn()(`${this.baseUrl}/jobs`));
    return body.jobs;
  }

  async getJob(jobId: string): Promise<JobManifest> {
    return parse(await fetchFn()(`${this.baseUrl}/jobs/${encodeURIComponent(jobId)}`));
  }

  async ingest(kind: "rt-weekly" | "web" | "pdf" | "repo-docs", payload: unknown): Promise<string> {
    const body = await parse<{ job_id: string }>(
      await fetchFn()(`${this.baseUrl}/ingest/${kind}`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      }),
    );
    return body.job_id;
  }
}

// Indirection so tests can stub fetch without touching globals at import time.
function fetchFn(): typeof fetch {
  return globalThis.fetch;
}
