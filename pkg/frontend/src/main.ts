/** Browser bootstrap: wires the state machine and renderers to the DOM.
 * Keyboard: a = accept suggestion, r = reject, j/k = navigate. */
import { HttpApiClient } from "./api.js";
import { renderDetail, renderQueue } from "./render.js";
import { Workbench } from "./state.js";

const api = new HttpApiClient("");
const workbench = new Workbench(api);
let labelNames: string[] = [];

function redraw(): void {
  const queueEl = document.getElementById("queue")!;
  const detailEl = document.getElementById("detail")!;
  queueEl.innerHTML = renderQueue(workbench.state);
  detailEl.innerHTML = renderDetail(workbench.state, labelNames);
}

async function act(action: string): Promise<void> {
  if (action === "accept") await workbench.decide("accept-suggestion");
  else if (action === "reject") await workbench.decide("reject");
  else if (action === "relabel") {
    const picker = document.querySelector<HTMLSelectElement>(
      '[data-role="label-picker"]'
    );
    if (picker) await workbench.decide("relabel", Number(picker.value));
  } else if (action === "recompute") await workbench.recomputeNow();
  else if (action === "retry") await workbench.loadQueue(workbench.state.offset);
  else if (action === "export") {
    const out = await api.exportData();
    alert(`exported ${out.changes} changed labels to ${out.datastore}`);
    return;
  }
  redraw();
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset.action;
  if (action) {
    event.preventDefault();
    void act(action);
    return;
  }
  const row = target.closest("tr[data-id]") as HTMLElement | null;
  if (row?.dataset.id) {
    void workbench.select(row.dataset.id).then(redraw);
  }
});

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key === "a") void act("accept");
  else if (event.key === "r") void act("reject");
  else if (event.key === "j") void workbench.navigate(1).then(redraw);
  else if (event.key === "k") void workbench.navigate(-1).then(redraw);
});

async function start(): Promise<void> {
  await workbench.loadQueue(0);
  if (workbench.state.items.length) {
    const first = await api.getItem(workbench.state.items[0].id);
    labelNames = first.probs.map((_, i) => `label ${i}`);
    // replace placeholders with real names from the first item's neighbours
    const names = new Map<number, string>();
    names.set(first.observed_label, first.observed_name);
    names.set(first.suggested_label, first.suggested_name);
    for (const n of first.neighbors) names.set(n.label, n.label_name);
    for (const [idx, name] of names) labelNames[idx] = name;
    workbench.state.selected = first;
  }
  redraw();
}

void start();
