/** Console wiring: DOM, polling, event stream, canvas drawing.
 *
 * All state lives in Store and is rebuilt from the API on reload; this file
 * only moves data between the network and the page.
 */

import { ApiClient, ApiError, NetworkError } from "./api.js";
import type { ScenarioInfo, TaskRequest, TaskRow } from "./api.js";
import { EventFeed } from "./events.js";
import type { FeedState } from "./events.js";
import { parseEventLine, Store } from "./store.js";
import type { FeedItem } from "./store.js";
import { parseMapText, pixelToWorld, rasterize, worldToPixel } from "./mapview.js";
import type { Grid } from "./mapview.js";
import { applyMapClick, emptyForm, validateForm } from "./forms.js";
import type { FormState } from "./forms.js";

export const POLL_MS = 150; // 6.7 Hz pose refresh at real-time factor 1
const TASKS_POLL_MS = 2000;

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

const api = new ApiClient("");
const store = new Store();

let grid: Grid | null = null;
let scale = 8;
let scenario: ScenarioInfo | null = null;
let form: FormState = emptyForm();
let lastFailedRequest: TaskRequest | null = null;
let pendingRows = 0;

// ------------------------------------------------------------------ canvas

function fitScale(g: Grid): number {
  return Math.max(4, Math.min(24, Math.floor(640 / Math.max(g.width, g.height))));
}

function drawBase(): void {
  if (!grid) return;
  const canvas = $<HTMLCanvasElement>("map-canvas");
  const overlay = $<HTMLCanvasElement>("overlay-canvas");
  canvas.width = overlay.width = grid.width * scale;
  canvas.height = overlay.height = grid.height * scale;
  const ctx = canvas.getContext("2d")!;
  const raster = rasterize(grid, scale);
  ctx.putImageData(new ImageData(raster, canvas.width, canvas.height), 0, 0);
  if (!scenario) return;
  for (const [x, y] of scenario.candidates) {
    const [px, py] = worldToPixel(grid, scale, x, y);
    ctx.strokeStyle = "#748ffc";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.stroke();
  }
  for (const m of scenario.markers) {
    const [px, py] = worldToPixel(grid, scale, m.pose[0], m.pose[1]);
    drawDiamond(ctx, px, py, 5, "#e8590c");
  }
  for (const st of scenario.stations) {
    const [px, py] = worldToPixel(grid, scale, st.dock_pose[0], st.dock_pose[1]);
    drawStar(ctx, px, py, 7, "#f08c00");
  }
}

function drawStar(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  r: number,
  color: string,
): void {
  ctx.fillStyle = color;
  ctx.beginPath();
  for (let i = 0; i < 10; i++) {
    const rad = i % 2 === 0 ? r : r * 0.45;
    const a = (Math.PI / 5) * i - Math.PI / 2;
    const px = x + rad * Math.cos(a);
    const py = y + rad * Math.sin(a);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  }
  ctx.closePath();
  ctx.fill();
}

function drawDiamond(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  r: number,
  color: string,
): void {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.moveTo(x, y - r);
  ctx.lineTo(x + r, y);
  ctx.lineTo(x, y + r);
  ctx.lineTo(x - r, y);
  ctx.closePath();
  ctx.fill();
}

function drawOverlay(): void {
  if (!grid) return;
  const canvas = $<HTMLCanvasElement>("overlay-canvas");
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);

  // pickup/dropoff glyphs for live delivery tasks
  ctx.font = "bold 11px sans-serif";
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  for (const task of store.sortedTasks()) {
    if (task.kind !== "delivery") continue;
    if (task.status !== "Queued" && task.status !== "Active") continue;
    const pickup = task.params["pickup"] as [number, number] | undefined;
    const dropoff = task.params["dropoff"] as [number, number] | undefined;
    if (pickup) drawLabel(ctx, pickup, "P", "#2f9e44");
    if (dropoff) drawLabel(ctx, dropoff, "D", "#e03131");
  }

  if (store.trail.length > 1) {
    ctx.strokeStyle = "rgba(25, 113, 194, 0.45)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    store.trail.forEach(([x, y], i) => {
      const [px, py] = worldToPixel(grid!, scale, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }

  const status = store.status;
  if (status) {
    if (status.ground_truth) {
      drawRobot(ctx, status.ground_truth, "rgba(134, 142, 150, 0.6)");
    }
    drawRobot(ctx, status.pose_estimate, "#1971c2");
  }
}

function drawLabel(
  ctx: CanvasRenderingContext2D,
  world: [number, number],
  text: string,
  color: string,
): void {
  const [px, py] = worldToPixel(grid!, scale, world[0], world[1]);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(px, py, 8, 0, 2 * Math.PI);
  ctx.fill();
  ctx.fillStyle = "#fff";
  ctx.fillText(text, px, py);
}

function drawRobot(
  ctx: CanvasRenderingContext2D,
  pose: [number, number, number],
  color: string,
): void {
  const [px, py] = worldToPixel(grid!, scale, pose[0], pose[1]);
  const theta = -pose[2]; // canvas y points down
  const r = Math.max(6, scale * 0.6);
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.moveTo(px + r * Math.cos(theta), py + r * Math.sin(theta));
  ctx.lineTo(px + r * Math.cos(theta + 2.5), py + r * Math.sin(theta + 2.5));
  ctx.lineTo(px + r * Math.cos(theta - 2.5), py + r * Math.sin(theta - 2.5));
  ctx.closePath();
  ctx.fill();
}

// ------------------------------------------------------------------- panes

function renderStatus(): void {
  const s = store.status;
  $("status-line").textContent = s
    ? `t=${s.clock.toFixed(1)}s  ${s.exec_state}` +
      (s.active_task !== null ? `  task #${s.active_task}` : "") +
      `  pose (${s.pose_estimate[0].toFixed(2)}, ${s.pose_estimate[1].toFixed(2)})`
    : "waiting for server";
  const frac = s?.battery_fraction ?? 0;
  const bar = $("battery-bar");
  bar.style.width = `${Math.round(frac * 100)}%`;
  bar.className = frac < 0.2 ? "low" : store.isCharging() ? "charging" : "";
  $("battery-label").textContent = store.batteryLabel();
}

function renderConfirm(): void {
  const action = store.confirmAction();
  const bar = $("confirm-bar");
  if (!action) {
    bar.hidden = true;
    return;
  }
  bar.hidden = false;
  $("confirm-text").textContent =
    action === "loaded" ? "please load the object" : "please unload the object";
  $("confirm-btn").textContent = action === "loaded" ? "Loaded" : "Unloaded";
}

function renderTasks(): void {
  const body = $("task-rows");
  body.textContent = "";
  for (const task of store.sortedTasks()) {
    body.appendChild(taskRowEl(task));
  }
  for (let i = 0; i < pendingRows; i++) {
    const tr = document.createElement("tr");
    tr.className = "pending";
    tr.innerHTML = `<td>…</td><td colspan="3">sending…</td><td></td>`;
    body.appendChild(tr);
  }
}

function taskRowEl(task: TaskRow): HTMLTableRowElement {
  const tr = document.createElement("tr");
  const params = summarizeParams(task);
  const outcome =
    task.status === "Failed" && task.reason
      ? `failed: ${task.reason}`
      : task.status === "Succeeded" && task.result != null
        ? `ok: ${JSON.stringify(task.result)}`
        : task.status.toLowerCase();
  tr.innerHTML =
    `<td>${task.id}</td><td>${task.kind}</td>` +
    `<td class="params">${params}</td><td class="st-${task.status}">${outcome}</td>`;
  const actions = document.createElement("td");
  if (task.status === "Queued") {
    const btn = document.createElement("button");
    btn.textContent = "cancel";
    btn.addEventListener("click", () => {
      void api.cancelTask(task.id).then(refreshTasks, showError);
    });
    actions.appendChild(btn);
  }
  tr.appendChild(actions);
  return tr;
}

function summarizeParams(task: TaskRow): string {
  const p = task.params;
  if (task.kind === "delivery") {
    return `${fmtPoint(p["pickup"])} → ${fmtPoint(p["dropoff"])}`;
  }
  const locs = p["locations"];
  const n = Array.isArray(locs) ? ` @${locs.length} spots` : "";
  return `marker ${p["marker"]}${n}`;
}

function fmtPoint(v: unknown): string {
  if (Array.isArray(v) && v.length === 2) {
    return `(${Number(v[0]).toFixed(1)}, ${Number(v[1]).toFixed(1)})`;
  }
  return "?";
}

function renderFeed(): void {
  const el = $("feed");
  el.textContent = "";
  for (const item of store.feed.slice(-200)) {
    el.appendChild(feedItemEl(item));
  }
  el.scrollTop = el.scrollHeight;
}

function feedItemEl(item: FeedItem): HTMLElement {
  const div = document.createElement("div");
  if (item.kind === "gap") {
    div.className = "feed-gap";
    div.textContent = `— missed ${item.missed} event${item.missed === 1 ? "" : "s"} —`;
    return div;
  }
  const ev = item.event!;
  div.className = `feed-line kind-${ev.kind}`;
  const text =
    ev.kind === "Utterance" && typeof ev.payload["text"] === "string"
      ? `“${ev.payload["text"]}”`
      : ev.kind === "Utterance" && typeof ev.payload["heard"] === "string"
        ? `heard “${ev.payload["heard"]}”`
        : JSON.stringify(ev.payload);
  div.textContent = `${ev.clock.toFixed(2)}  ${ev.kind}  ${text}`;
  return div;
}

function renderForm(): void {
  $<HTMLInputElement>("pickup").value = form.pickup;
  $<HTMLInputElement>("dropoff").value = form.dropoff;
  $<HTMLInputElement>("marker").value = form.marker;
  $<HTMLInputElement>("locations").value = form.locations;
  $<HTMLInputElement>("reply-to").value = form.reply_to;
  const delivery = form.kind === "delivery";
  $("field-pickup").hidden = !delivery;
  $("field-dropoff").hidden = !delivery;
  $("field-marker").hidden = delivery;
  $("field-locations").hidden = delivery;
}

function renderFormErrors(errors: Record<string, string>): void {
  for (const field of ["pickup", "dropoff", "marker", "locations"]) {
    $(`err-${field}`).textContent = errors[field] ?? "";
  }
}

function showError(err: unknown): void {
  const box = $("form-error");
  const retry = $<HTMLButtonElement>("retry-btn");
  if (err instanceof NetworkError) {
    box.textContent = "network failure — request not sent";
    retry.hidden = lastFailedRequest === null;
  } else if (err instanceof ApiError) {
    box.textContent = err.message; // server reason, verbatim
    retry.hidden = true;
  } else {
    box.textContent = String(err);
    retry.hidden = true;
  }
}

function clearError(): void {
  $("form-error").textContent = "";
  $<HTMLButtonElement>("retry-btn").hidden = true;
}

// ------------------------------------------------------------------ net io

async function refreshTasks(): Promise<void> {
  try {
    store.setTasks(await api.tasks());
    renderTasks();
    drawOverlay();
  } catch {
    /* next poll retries */
  }
}

async function submitRequest(req: TaskRequest): Promise<void> {
  pendingRows += 1;
  renderTasks();
  try {
    await api.createTask(req);
    lastFailedRequest = null;
    clearError();
    form = emptyForm(form.kind);
    renderForm();
    renderFormErrors({});
    await refreshTasks();
  } catch (err) {
    if (err instanceof NetworkError) lastFailedRequest = req;
    showError(err);
  } finally {
    pendingRows = Math.max(0, pendingRows - 1);
    renderTasks();
  }
}

function onSubmit(ev: Event): void {
  ev.preventDefault();
  syncFormFromInputs();
  const { errors, request } = validateForm(form);
  renderFormErrors(errors as Record<string, string>);
  if (!request) return; // invalid: no request leaves the page
  clearError();
  void submitRequest(request);
}

function syncFormFromInputs(): void {
  form = {
    kind: $<HTMLSelectElement>("kind").value as FormState["kind"],
    pickup: $<HTMLInputElement>("pickup").value,
    dropoff: $<HTMLInputElement>("dropoff").value,
    marker: $<HTMLInputElement>("marker").value,
    locations: $<HTMLInputElement>("locations").value,
    reply_to: $<HTMLInputElement>("reply-to").value,
  };
}

function onMapClick(ev: MouseEvent): void {
  if (!grid) return;
  syncFormFromInputs();
  const [x, y] = pixelToWorld(grid, scale, ev.offsetX, ev.offsetY);
  form = applyMapClick(form, x, y);
  renderForm();
}

function setFeedState(state: FeedState): void {
  const badge = $("conn");
  badge.textContent = state;
  badge.className = `badge ${state}`;
}

// ------------------------------------------------------------------- start

async function start(): Promise<void> {
  $("task-form").addEventListener("submit", onSubmit);
  $<HTMLSelectElement>("kind").addEventListener("change", () => {
    syncFormFromInputs();
    renderForm();
    renderFormErrors({});
  });
  $("overlay-canvas").addEventListener("click", onMapClick);
  $("confirm-btn").addEventListener("click", () => {
    const action = store.confirmAction();
    if (!action) return;
    $("confirm-bar").hidden = true; // optimistic; status poll re-opens if needed
    void api.confirm(action).catch(showError);
  });
  $("retry-btn").addEventListener("click", () => {
    if (!lastFailedRequest) return;
    clearError();
    void submitRequest(lastFailedRequest);
  });
  $("say-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = $<HTMLInputElement>("say-text");
    const text = input.value.trim();
    if (!text) return;
    input.value = "";
    void api.say(text).catch(showError);
  });

  renderForm();

  const [mapText, info] = await Promise.all([
    api.mapText(),
    api.scenario().catch((): ScenarioInfo | null => null),
  ]);
  grid = parseMapText(mapText);
  scale = fitScale(grid);
  scenario = info;
  drawBase();

  const feed = new EventFeed({
    url: "/api/events",
    onEvent: (seq, line) => {
      const ev = parseEventLine(seq, line);
      if (!ev) return;
      store.applyEvent(ev);
      renderFeed();
      renderConfirm();
      renderStatus();
      if (store.tasksStale) void refreshTasks();
    },
    onGap: (missed) => {
      store.applyGap(missed);
      renderFeed();
      void refreshTasks(); // resync after losing events
    },
    onState: setFeedState,
  });
  void feed.run();

  await refreshTasks();
  const poll = async (): Promise<void> => {
    try {
      store.applyStatus(await api.status());
      renderStatus();
      renderConfirm();
      drawOverlay();
    } catch {
      /* transient; keep polling */
    }
    setTimeout(poll, POLL_MS);
  };
  void poll();
  setInterval(() => void refreshTasks(), TASKS_POLL_MS);
}

if (typeof document !== "undefined") {
  void start();
}
