/** Page wiring: one session per page, three persistent panels, autorun bar.
 *  The mode (writer vs fiction) is chosen on the create form and fixed for
 *  the session's lifetime. */

import { MemoryHit, ScribeApi } from "./api.js";
import {
  renderAutorun,
  renderMemoryPanel,
  renderPlans,
  renderTranscript,
} from "./panels.js";
import { SessionStore, StoreSnapshot } from "./state.js";

function must(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in the page`);
  return node;
}

export function mountApp(baseUrl: string): SessionStore {
  const api = new ScribeApi(baseUrl);
  const store = new SessionStore(api);
  let memoryHits: MemoryHit[] | null = null;

  const transcript = must("transcript");
  const plans = must("plans");
  const memory = must("memory");
  const autorun = must("autorun");
  const form = must("create-form") as HTMLFormElement;

  const planHandlers = {
    onSelect: (index: number) => void store.selectPlan(index),
    onEditAndUse: (index: number, text: string) =>
      void store.editAndUsePlan(index, text),
    onFreeText: (text: string) => void store.submitPlanText(text),
  };
  const memoryHandlers = {
    onSaveShortTerm: (text: string) => void store.saveShortTerm(text),
    onQuery: (query: string) => {
      void store.queryMemory(query, 3).then((hits) => {
        memoryHits = hits;
        render(snapshotOf(store));
      });
    },
  };
  const autorunHandlers = {
    onRun: (n: number) => void store.runAuto(n),
  };

  function render(snapshot: StoreSnapshot): void {
    if (!snapshot.view) return;
    form.hidden = true;
    renderTranscript(transcript, snapshot.view);
    renderPlans(plans, snapshot.view, planHandlers, snapshot.busy);
    renderMemoryPanel(memory, snapshot.view, memoryHits, memoryHandlers);
    renderAutorun(autorun, autorunHandlers, snapshot.busy, snapshot.offline,
                  snapshot.notice);
  }

  store.subscribe(render);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(form);
    void store.create({
      title: String(data.get("title") ?? ""),
      genre: String(data.get("genre") ?? ""),
      background: String(data.get("background") ?? ""),
      mode: String(data.get("mode") ?? "writer"),
    });
  });

  return store;
}

function snapshotOf(store: SessionStore): StoreSnapshot {
  return {
    view: store.view,
    busy: store.busy,
    offline: store.offline,
    notice: store.notice,
  };
}

declare global {
  interface Window {
    SCRIBE_API_BASE?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("create-form")) {
  mountApp(window.SCRIBE_API_BASE ?? "http://127.0.0.1:8000");
}
