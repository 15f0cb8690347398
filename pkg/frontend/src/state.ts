/** Client-side session state: a cache of the latest server response plus the
 *  in-flight bookkeeping the panels need (busy flag, retry banner, optimistic
 *  edits). All recurrence logic lives on the server; this file only mirrors
 *  it and rolls mirrors back when the server says no. */

import {
  ApiError,
  CreateSessionBody,
  MemoryHit,
  ScribeApi,
  SessionView,
} from "./api.js";

export interface StoreSnapshot {
  view: SessionView | null;
  busy: boolean;
  offline: boolean;
  notice: string | null;
}

type Listener = (snapshot: StoreSnapshot) => void;

export class SessionStore {
  view: SessionView | null = null;
  /** True while a step or autorun holds the session's mutation slot. */
  busy = false;
  /** True when polling has lost the server; panels show a retry banner. */
  offline = false;
  notice: string | null = null;

  private listeners: Listener[] = [];
  private pollHandle: ReturnType<typeof setInterval> | null = null;
  private autorunInFlight = false;

  constructor(
    private api: ScribeApi,
    private pollMs = 1000,
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    const snapshot: StoreSnapshot = {
      view: this.view,
      busy: this.busy,
      offline: this.offline,
      notice: this.notice,
    };
    for (const listener of this.listeners) listener(snapshot);
  }

  private fail(err: unknown): void {
    this.notice = err instanceof Error ? err.message : String(err);
    this.emit();
  }

  async create(body: CreateSessionBody): Promise<SessionView> {
    const summary = await this.api.createSession(body);
    this.view = await this.api.getSession(summary.id);
    this.notice = null;
    this.emit();
    return this.view;
  }

  async load(id: string): Promise<SessionView> {
    this.view = await this.api.getSession(id);
    this.emit();
    return this.view;
  }

  async refresh(): Promise<void> {
    if (!this.view) return;
    try {
      this.view = await this.api.getSession(this.view.id);
      this.offline = false;
    } catch {
      // a read that fails mid-run is a connectivity problem, not a state
      // change; keep showing the last good view with a retry banner
      this.offline = true;
    }
    this.emit();
  }

  /** Runs a mutation with the busy flag raised and live polling so the
   *  transcript keeps up with server-side progress. */
  private async mutate(action: () => Promise<void>): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.notice = null;
    this.emit();
    this.startPolling();
    try {
      await action();
    } catch (err) {
      if (err instanceof ApiError && err.stepInProgress) {
        this.notice = "step in progress";
        this.emit();
      } else {
        this.fail(err);
      }
    } finally {
      this.stopPolling();
      this.busy = false;
      await this.refresh();
    }
  }

  selectPlan(index: number): Promise<void> {
    return this.mutate(async () => {
      await this.api.step(this.requireId(), { plan_index: index });
    });
  }

  submitPlanText(text: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.step(this.requireId(), { plan_text: text });
    });
  }

  /** Rewrite one candidate plan, then immediately step with it. */
  editAndUsePlan(index: number, text: string): Promise<void> {
    return this.mutate(async () => {
      await this.api.editPlan(this.requireId(), index, text);
      await this.api.step(this.requireId(), { plan_index: index });
    });
  }

  /** Optimistic: the textarea's text shows as saved at once; a rejected
   *  PATCH puts the previous memory back. */
  async saveShortTerm(text: string): Promise<boolean> {
    if (!this.view) return false;
    const previous = this.view.short_term;
    this.view = { ...this.view, short_term: text };
    this.emit();
    try {
      this.view = await this.api.editShortTerm(this.view.id, text);
      this.emit();
      return true;
    } catch (err) {
      this.view = { ...this.view, short_term: previous };
      this.fail(err);
      return false;
    }
  }

  async rewriteLastContent(text: string): Promise<boolean> {
    if (!this.view) return false;
    try {
      this.view = await this.api.editLastContent(this.view.id, text);
      this.emit();
      return true;
    } catch (err) {
      this.fail(err);
      return false;
    }
  }

  queryMemory(query: string, k = 3): Promise<MemoryHit[]> {
    return this.api.getMemory(this.requireId(), query, k);
  }

  /** Debounced: while one autorun is pending, further clicks are dropped
   *  instead of issuing duplicate POSTs. */
  async runAuto(nSteps: number): Promise<boolean> {
    if (this.autorunInFlight) return false;
    this.autorunInFlight = true;
    try {
      await this.mutate(async () => {
        const result = await this.api.autorun(this.requireId(), nSteps);
        if (result.error !== null) {
          this.notice = `stopped at step ${result.failed_step}: ${result.error}`;
        }
      });
    } finally {
      this.autorunInFlight = false;
    }
    return true;
  }

  dispose(): void {
    this.stopPolling();
    this.listeners = [];
  }

  private requireId(): string {
    if (!this.view) throw new Error("no session loaded");
    return this.view.id;
  }

  private startPolling(): void {
    if (this.pollHandle !== null) return;
    this.pollHandle = setInterval(() => {
      void this.refresh();
    }, this.pollMs);
  }

  private stopPolling(): void {
    if (this.pollHandle !== null) {
      clearInterval(this.pollHandle);
      this.pollHandle = null;
    }
  }
}
