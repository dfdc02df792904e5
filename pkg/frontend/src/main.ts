import { TunerClient, SocketLike } from "./client.js";
import { ParamSender } from "./controls.js";
import {
  NumericKey,
  Series,
  metricSeries,
  polylinePath,
  valueRange,
  xRange,
} from "./charts.js";
import { MetricTick, View, pngDimensions } from "./protocol.js";
import { overlayDots } from "./preview.js";
import { SessionState } from "./state.js";

const state = new SessionState(600);
const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const client = new TunerClient(
  wsUrl,
  state,
  (url) => new WebSocket(url) as unknown as SocketLike,
);
const sender = new ParamSender((text) => client.send(text), state);

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const statusBadge = $("status");
const banner = $("banner");
const fields = $<HTMLFieldSetElement>("control-fields");
const crf = $<HTMLInputElement>("crf");
const crfValue = $("crf-value");
const crfPending = $("crf-pending");
const dtRef = $<HTMLInputElement>("dt-ref");
const dtMax = $<HTMLInputElement>("dt-max");
const mIn = $<HTMLInputElement>("m");
const mMaxIn = $<HTMLInputElement>("m-max");
const paramError = $("param-error");
const viewSel = $<HTMLSelectElement>("view");
const featuresBox = $<HTMLInputElement>("features");
const pauseBtn = $<HTMLButtonElement>("pause");
const seekIn = $<HTMLInputElement>("seek-adu");
const noteLine = $("note-line");
const previewImg = $<HTMLImageElement>("preview");
const overlay = $("overlay");
const qualitySvg = $("chart-quality");
const rateSvg = $("chart-rate");

const QUALITY_COLORS: Record<string, string> = {
  mse: "#ff8b6b",
  psnr: "#7cb5ff",
  ssim: "#7bd88f",
};
const RATE_COLORS: Record<string, string> = {
  source_bps: "#9a86ff",
  adder_bps: "#ffd166",
};

// ---------------------------------------------------------------------------
// control wiring

crf.addEventListener("input", () => {
  crfValue.textContent = crf.value;
  sender.setCrf(Number(crf.value));
});

$("apply-params").addEventListener("click", () => {
  const params: Record<string, number> = {};
  if (dtRef.value !== "") params.dt_ref = Number(dtRef.value);
  if (dtMax.value !== "") params.dt_max = Number(dtMax.value);
  if (mIn.value !== "") params.m = Number(mIn.value);
  if (mMaxIn.value !== "") params.m_max = Number(mMaxIn.value);
  const problems = sender.setParams(params);
  paramError.textContent = problems.join("; ");
});

viewSel.addEventListener("change", () => {
  sender.setView(viewSel.value as View);
});

featuresBox.addEventListener("change", () => {
  sender.toggleFeatures(featuresBox.checked);
});

pauseBtn.addEventListener("click", () => {
  const paused = Boolean(state.effective().paused);
  sender.pause(!paused);
});

seekIn.addEventListener("change", () => {
  if (seekIn.value !== "") sender.seek(Math.max(0, Number(seekIn.value)));
});

for (const key of ["mse", "psnr", "ssim"]) {
  $<HTMLInputElement>(`show-${key}`).addEventListener("change", renderCharts);
}

window.addEventListener("beforeunload", () => sender.flush());

// ---------------------------------------------------------------------------
// rendering

function renderSvg(
  svg: HTMLElement,
  series: Series[],
  colors: Record<string, string>,
): void {
  const w = svg.clientWidth || 480;
  const h = svg.clientHeight || 160;
  svg.setAttribute("viewBox", `0 0 ${w} ${h}`);
  const populated = series.filter((s) => s.points.length > 0);
  const xr = xRange(populated);
  const yr = valueRange(populated);
  let body = "";
  for (const s of populated) {
    const d = polylinePath(s, w, h, xr, yr, 2);
    body += `<path d="${d}" fill="none" stroke="${colors[s.label] ?? "#ccc"}" stroke-width="1.5"/>`;
  }
  if (populated.length > 0) {
    body += `<text x="4" y="12" class="axis">${yr.max.toPrecision(4)}</text>`;
    body += `<text x="4" y="${h - 4}" class="axis">${yr.min.toPrecision(4)}</text>`;
  }
  svg.innerHTML = body;
}

function renderCharts(): void {
  const ticks = state.ticks.toArray();
  const qualityKeys = (["mse", "psnr", "ssim"] as NumericKey[]).filter(
    (k) => $<HTMLInputElement>(`show-${k}`).checked,
  );
  renderSvg(qualitySvg, metricSeries(ticks, qualityKeys), QUALITY_COLORS);
  renderSvg(
    rateSvg,
    metricSeries(ticks, ["source_bps", "adder_bps"]),
    RATE_COLORS,
  );
}

let previewUrl: string | null = null;
let lastFeatureTick: MetricTick | null = null;

function renderPreview(): void {
  const png = state.takePreview();
  if (png) {
    const old = previewUrl;
    previewUrl = URL.createObjectURL(new Blob([png.slice()], { type: "image/png" }));
    previewImg.src = previewUrl;
    if (old) URL.revokeObjectURL(old);
  }
  const last = state.ticks.last();
  if (last && last.features) lastFeatureTick = last;
  const eff = state.effective();
  overlay.innerHTML = "";
  if (eff.features && lastFeatureTick?.features && previewImg.naturalWidth) {
    const dims =
      png && pngDimensions(png)
        ? pngDimensions(png)
        : { width: previewImg.naturalWidth, height: previewImg.naturalHeight };
    const rect = previewImg.getBoundingClientRect();
    for (const dot of overlayDots(
      lastFeatureTick.features,
      dims!.width,
      dims!.height,
      rect.width,
      rect.height,
    )) {
      const el = document.createElement("div");
      el.className = "dot";
      el.style.left = `${dot.left}px`;
      el.style.top = `${dot.top}px`;
      overlay.appendChild(el);
    }
  }
}

function renderControls(): void {
  const open = state.status === "open";
  statusBadge.textContent = state.status;
  statusBadge.className = `badge ${state.status}`;
  banner.style.display = open ? "none" : "flex";
  fields.disabled = !open;

  const eff = state.effective();
  if (document.activeElement !== crf && eff.crf !== undefined) {
    crf.value = String(eff.crf);
    crfValue.textContent = String(eff.crf);
  }
  crfPending.style.display = state.pending.has("set_crf") ? "inline" : "none";
  if (document.activeElement !== viewSel && eff.view) viewSel.value = eff.view;
  if (eff.features !== undefined) featuresBox.checked = Boolean(eff.features);
  pauseBtn.textContent = eff.paused ? "resume" : "pause";
  if (dtRef.placeholder === "" && eff.dt_ref !== undefined) {
    dtRef.placeholder = String(eff.dt_ref);
    dtMax.placeholder = String(eff.dt_max ?? "");
  }

  const bits: string[] = [];
  if (state.acked) bits.push(`unit ${state.acked.unit}/${state.acked.units}`);
  if (state.lastAppliesAt !== null) bits.push(`applies at unit ${state.lastAppliesAt}`);
  if (state.pending.size > 0) bits.push(`${state.pending.size} pending`);
  if (state.previewsDropped > 0) bits.push(`${state.previewsDropped} frames dropped`);
  if (state.badFrames > 0) bits.push(`${state.badFrames} bad frames`);
  if (state.lastError) bits.push(`error: ${state.lastError}`);
  noteLine.textContent = bits.join(" · ");
}

let lastChartRender = 0;

function frame(now: number): void {
  renderPreview();
  renderControls();
  if (now - lastChartRender > 100) {
    renderCharts();
    lastChartRender = now;
  }
  requestAnimationFrame(frame);
}

client.connect();
requestAnimationFrame(frame);
