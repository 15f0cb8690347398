/** Typed client for the session service. Every mutation in the UI goes
 *  through here; nothing talks to the server directly. */

export interface PlanView {
  text: string;
  origin: string;
}

export interface ContentView {
  text: string;
  timestep: number;
}

export interface SessionSummary {
  id: string;
  mode: string;
  step: number;
  short_term: string;
  pending_plans: PlanView[];
  last_content: ContentView;
}

export interface SessionView extends SessionSummary {
  meta: {
    title: string;
    genre: string;
    background: string;
    mode: string;
    perspective: string;
  };
  transcript: ContentView[];
  current_plan: PlanView | null;
  memory_size: number;
}

export interface MemoryHit {
  timestep: number;
  text: string;
  similarity: number;
}

export interface AutorunResult {
  id: string;
  start_step: number;
  end_step: number;
  requested: number;
  completed: number;
  failed_step: number | null;
  error: string | null;
}

export interface CreateSessionBody {
  title: string;
  genre: string;
  background: string;
  mode?: string;
  perspective?: string;
  seed?: number;
  initial_short_term?: string;
  initial_plan?: string;
  overrides?: Record<string, number>;
}

export type PlanSelection = { plan_index: number } | { plan_text: string };

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
    public code: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }

  /** 409 means a step is already running; the UI shows it, not a crash. */
  get stepInProgress(): boolean {
    return this.status === 409;
  }
}

export class ScribeApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      let code = "HttpError";
      try {
        const body = await response.json();
        detail = body.detail ?? detail;
        code = body.error ?? code;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail, code);
    }
    return response.json() as Promise<T>;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(body: CreateSessionBody): Promise<SessionSummary> {
    return this.post("/sessions", body);
  }

  getSession(id: string): Promise<SessionView> {
    return this.request(`/sessions/${id}`);
  }

  step(id: string, selection: PlanSelection): Promise<SessionSummary> {
    return this.post(`/sessions/${id}/step`, selection);
  }

  autorun(id: string, nSteps: number): Promise<AutorunResult> {
    return this.post(`/sessions/${id}/autorun`, { n_steps: nSteps });
  }

  private patch(id: string, body: unknown): Promise<SessionView> {
    return this.request(`/sessions/${id}`, {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  editShortTerm(id: string, text: string): Promise<SessionView> {
    return this.patch(id, { kind: "replace_short_term", text });
  }

  editPlan(id: string, index: number, text: string): Promise<SessionView> {
    return this.patch(id, { kind: "replace_plan", index, text });
  }

  editLastContent(id: string, text: string): Promise<SessionView> {
    return this.patch(id, { kind: "replace_last_content", text });
  }

  async getMemory(id: string, query: string, k = 3): Promise<MemoryHit[]> {
    const params = new URLSearchParams({ query, k: String(k) });
    const body = await this.request<{ entries: MemoryHit[] }>(
      `/sessions/${id}/memory?${params}`,
    );
    return body.entries;
  }

  async exportTranscript(
    id: string,
    format: "plain" | "markdown" = "plain",
  ): Promise<string> {
    const response = await this.fetchFn(
      `${this.baseUrl}/sessions/${id}/export?format=${format}`,
    );
    if (!response.ok) {
      throw new ApiError(response.status, response.statusText, "HttpError");
    }
    return response.text();
  }
}
