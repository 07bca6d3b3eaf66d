/** HTML-string renderers; pure functions over state so they unit-test
 * without a DOM. Every figure shown is traceable to a service payload. */
import { ItemDetail, ItemSummary, Neighbor } from "./api.js";
import { WorkbenchState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function psiBadge(psi: number): string {
  const cls = psi < 0.2 ? "psi-low" : psi < 0.6 ? "psi-mid" : "psi-high";
  return `<span class="badge ${cls}">${psi.toFixed(3)}</span>`;
}

export function renderQueue(state: WorkbenchState): string {
  if (state.error && state.retry) {
    return `<div class="banner error">${escapeHtml(state.error)} <button data-action="retry">retry</button></div>`;
  }
  if (state.done && state.statusFilter === "pending") {
    return `<div class="done">Queue clear - all items reviewed. <a href="#" data-action="export">Export corrected datastore</a></div>`;
  }
  const rows = state.items
    .map((item, i) => renderQueueRow(item, item.id === state.selected?.id))
    .join("");
  return `<table class="queue"><thead><tr>` +
    `<th>id</th><th>observed</th><th>suggested</th><th>&psi;</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`;
}

export function renderQueueRow(item: ItemSummary, selected: boolean): string {
  return `<tr data-id="${escapeHtml(item.id)}"${selected ? ' class="selected"' : ""}>` +
    `<td>${escapeHtml(item.id)}</td>` +
    `<td>${escapeHtml(item.observed_name)}</td>` +
    `<td>${escapeHtml(item.suggested_name)}</td>` +
    `<td>${psiBadge(item.psi)}</td></tr>`;
}

export function renderContext(item: ItemDetail): string {
  if (item.context === null) {
    return `<p class="placeholder">no context metadata for this example</p>`;
  }
  const ctx = item.context;
  const spans = [
    { span: item.head_span, cls: "head" },
    { span: item.tail_span, cls: "tail" },
  ]
    .filter((s): s is { span: [number, number]; cls: string } => s.span !== null)
    .sort((a, b) => a.span[0] - b.span[0]);
  let out = "";
  let pos = 0;
  for (const { span, cls } of spans) {
    out += escapeHtml(ctx.slice(pos, span[0]));
    out += `<mark class="${cls}">${escapeHtml(ctx.slice(span[0], span[1]))}</mark>`;
    pos = span[1];
  }
  out += escapeHtml(ctx.slice(pos));
  return `<p class="context">${out}</p>`;
}

export function renderNeighbors(neighbors: Neighbor[]): string {
  const rows = neighbors
    .map(
      (n) =>
        `<tr><td>${escapeHtml(n.id)}</td><td>${escapeHtml(n.label_name)}</td>` +
        `<td>${n.distance.toFixed(4)}</td></tr>`
    )
    .join("");
  return `<table class="neighbors"><thead><tr><th>id</th><th>label</th>` +
    `<th>distance</th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderScatter(item: ItemDetail, width = 320, height = 240): string {
  const points = [
    { xy: item.xy, cls: "item" },
    ...item.neighbors.map((n) => ({ xy: n.xy, cls: "neighbor" })),
  ];
  const xs = points.map((p) => p.xy[0]);
  const ys = points.map((p) => p.xy[1]);
  const pad = 10;
  const xmin = Math.min(...xs), xmax = Math.max(...xs);
  const ymin = Math.min(...ys), ymax = Math.max(...ys);
  const sx = (x: number) =>
    pad + ((x - xmin) / (xmax - xmin || 1)) * (width - 2 * pad);
  const sy = (y: number) =>
    height - pad - ((y - ymin) / (ymax - ymin || 1)) * (height - 2 * pad);
  const circles = points
    .map(
      (p) =>
        `<circle cx="${sx(p.xy[0]).toFixed(1)}" cy="${sy(p.xy[1]).toFixed(1)}"` +
        ` r="${p.cls === "item" ? 6 : 3}" class="${p.cls}"/>`
    )
    .join("");
  return `<svg class="scatter" viewBox="0 0 ${width} ${height}">${circles}</svg>`;
}

export function renderDetail(state: WorkbenchState, labelNames: string[]): string {
  const item = state.selected;
  if (!item) return `<div class="detail empty">select an item</div>`;
  const prob = item.probs.length
    ? ` <span class="prob">p=${(item.probs[item.suggested_label] ?? 0).toFixed(3)}</span>`
    : "";
  const actions = item.confirm
    ? `<button data-action="accept" class="primary">confirm label (a)</button>`
    : `<button data-action="accept" class="primary">accept ${escapeHtml(item.suggested_name)} (a)</button>`;
  const labelOptions = labelNames
    .map((n, i) => `<option value="${i}">${escapeHtml(n)}</option>`)
    .join("");
  const banner = state.error
    ? `<div class="banner error">${escapeHtml(state.error)}</div>`
    : "";
  const recompute = state.suggestRecompute
    ? `<div class="banner info">` +
      `<button data-action="recompute">recompute credibility now</button></div>`
    : "";
  return (
    banner + recompute +
    `<div class="detail" data-id="${escapeHtml(item.id)}">` +
    `<h2>${escapeHtml(item.id)} ${psiBadge(item.psi)} <em>${item.status}</em></h2>` +
    renderContext(item) +
    `<p>observed <strong>${escapeHtml(item.observed_name)}</strong>, ` +
    `suggested <strong>${escapeHtml(item.suggested_name)}</strong>${prob}</p>` +
    `<div class="actions">${actions}` +
    `<button data-action="reject">reject (r)</button>` +
    `<select data-role="label-picker">${labelOptions}</select>` +
    `<button data-action="relabel">relabel</button></div>` +
    renderNeighbors(item.neighbors) +
    renderScatter(item) +
    `</div>`
  );
}
