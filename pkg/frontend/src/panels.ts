/** DOM rendering for the three persistent panels plus the autorun controls.
 *  Pure functions of (container, state, handlers): no fetches, no globals,
 *  so tests can drive them with plain objects. */

import { MemoryHit, SessionView } from "./api.js";

export interface PlanHandlers {
  onSelect(index: number): void;
  onEditAndUse(index: number, text: string): void;
  onFreeText(text: string): void;
}

export interface MemoryHandlers {
  onSaveShortTerm(text: string): void;
  onQuery(query: string): void;
}

export interface AutorunHandlers {
  onRun(nSteps: number): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTranscript(root: HTMLElement, view: SessionView): void {
  root.replaceChildren();
  root.appendChild(el("h2", "panel-title", view.meta.title));
  for (const content of view.transcript) {
    const paragraph = el("article", "content", content.text);
    paragraph.dataset.timestep = String(content.timestep);
    if (content.timestep === view.step) {
      paragraph.classList.add("latest"); // the newly written paragraph
    }
    root.appendChild(paragraph);
  }
}

export function renderPlans(
  root: HTMLElement,
  view: SessionView,
  handlers: PlanHandlers,
  busy: boolean,
): void {
  root.replaceChildren();
  const fiction = view.mode === "fiction";
  root.appendChild(
    el("h2", "panel-title", fiction ? "What do you do?" : "Candidate plans"),
  );

  view.pending_plans.forEach((plan, index) => {
    const row = el("div", "plan");
    row.appendChild(el("span", "plan-text", plan.text));

    const select = el("button", "plan-select", fiction ? "Do it" : "Use this plan");
    select.disabled = busy;
    select.addEventListener("click", () => handlers.onSelect(index));
    row.appendChild(select);

    const editBox = el("textarea", "plan-edit-text");
    editBox.value = plan.text;
    const edit = el("button", "plan-edit", "Edit & use");
    edit.disabled = busy;
    edit.addEventListener("click", () =>
      handlers.onEditAndUse(index, editBox.value),
    );
    row.appendChild(editBox);
    row.appendChild(edit);
    root.appendChild(row);
  });

  const free = el("div", "plan-free");
  const box = el("textarea", "plan-free-text");
  box.placeholder = fiction
    ? "…or write your own action, in first person"
    : "…or write the next plan yourself";
  const go = el("button", "plan-free-submit", fiction ? "Act" : "Use my plan");
  go.disabled = busy;
  go.addEventListener("click", () => {
    if (box.value.trim()) handlers.onFreeText(box.value);
  });
  free.appendChild(box);
  free.appendChild(go);
  root.appendChild(free);

  if (busy) {
    root.appendChild(el("p", "busy-note", "step in progress…"));
  }
}

export function renderMemoryPanel(
  root: HTMLElement,
  view: SessionView,
  hits: MemoryHit[] | null, // null: no query issued yet
  handlers: MemoryHandlers,
): void {
  root.replaceChildren();
  root.appendChild(el("h2", "panel-title", "Memory"));

  const shortTerm = el("div", "short-term");
  shortTerm.appendChild(el("h3", undefined, "Short-term (editable)"));
  const editor = el("textarea", "short-term-text");
  editor.value = view.short_term;
  const save = el("button", "short-term-save", "Save");
  save.addEventListener("click", () => handlers.onSaveShortTerm(editor.value));
  shortTerm.appendChild(editor);
  shortTerm.appendChild(save);
  root.appendChild(shortTerm);

  const longTerm = el("div", "long-term");
  longTerm.appendChild(
    el("h3", undefined, `Long-term (${view.memory_size} entries)`),
  );
  const query = el("input", "memory-query");
  query.type = "search";
  query.placeholder = "search everything written so far";
  const search = el("button", "memory-search", "Search");
  search.addEventListener("click", () => {
    if (query.value.trim()) handlers.onQuery(query.value);
  });
  longTerm.appendChild(query);
  longTerm.appendChild(search);

  const results = el("ul", "memory-results");
  if (hits !== null) {
    if (hits.length === 0) {
      results.appendChild(el("li", "memory-empty", "no matching memories"));
    }
    for (const hit of hits) {
      const item = el("li", "memory-hit");
      item.dataset.timestep = String(hit.timestep);
      item.appendChild(
        el("span", "memory-score",
           `t${hit.timestep} · ${hit.similarity.toFixed(3)}`),
      );
      item.appendChild(el("span", "memory-text", hit.text));
      results.appendChild(item);
    }
  }
  longTerm.appendChild(results);
  root.appendChild(longTerm);
}

export function renderAutorun(
  root: HTMLElement,
  handlers: AutorunHandlers,
  busy: boolean,
  offline: boolean,
  notice: string | null,
): void {
  root.replaceChildren();
  const steps = el("input", "autorun-steps");
  steps.type = "number";
  steps.min = "1";
  steps.value = "5";
  const run = el("button", "autorun-go", "Run autonomously");
  run.disabled = busy;
  run.addEventListener("click", () => {
    const n = parseInt(steps.value, 10);
    if (Number.isFinite(n) && n > 0) handlers.onRun(n);
  });
  root.appendChild(steps);
  root.appendChild(run);

  if (offline) {
    root.appendChild(
      el("p", "retry-banner", "connection lost — retrying…"),
    );
  }
  if (notice) {
    root.appendChild(el("p", "notice", notice));
  }
}
