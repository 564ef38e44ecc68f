import init, { simulate, energy_balance, convergence } from "./pkg/phdae_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function params() {
  return [$("scenario").value, num("stages"), num("h"), num("tfinal"), num("power"), num("alpha")];
}

function report(id, text, isError = false) {
  $(id).textContent = text;
  $(id).className = isError ? "err" : "";
}

// Line plot of several series over a shared x axis; `logY` plots log10|y|.
function plot(canvas, xs, series, { logY = false, logX = false, points = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = { l: 60, r: 140, t: 10, b: 24 };
  ctx.clearRect(0, 0, w, h);
  const fx = logX ? (v) => Math.log10(v) : (v) => v;
  const fy = logY ? (v) => Math.log10(Math.max(Math.abs(v), 1e-300)) : (v) => v;
  const X = xs.map(fx);
  const all = series.flatMap((s) => s.values.map(fy)).filter(Number.isFinite);
  if (!all.length) return;
  let [x0, x1] = [Math.min(...X), Math.max(...X)];
  let [y0, y1] = [Math.min(...all), Math.max(...all)];
  if (x0 === x1) x1 = x0 + 1;
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const sx = (v) => pad.l + ((v - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const sy = (v) => h - pad.b - ((v - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  const fmt = (v, log) => (log ? "1e" + v.toFixed(1) : v.toPrecision(3));
  ctx.fillText(fmt(y1, logY), 2, pad.t + 10);
  ctx.fillText(fmt(y0, logY), 2, h - pad.b);
  ctx.fillText(fmt(x0, logX), pad.l, h - 6);
  ctx.fillText(fmt(x1, logX), w - pad.r - 40, h - 6);

  series.forEach((s, k) => {
    ctx.strokeStyle = ctx.fillStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.values.forEach((v, i) => {
      const [px, py] = [sx(X[i]), sy(fy(v))];
      if (i === 0) ctx.moveTo(px, py); else ctx.lineTo(px, py);
      if (points) ctx.fillRect(px - 2, py - 2, 4, 4);
    });
    ctx.stroke();
    ctx.fillText(s.name, w - pad.r + 8, pad.t + 14 * (k + 1));
  });
}

function runSimulation() {
  try {
    const out = JSON.parse(simulate(...params()));
    const t = out.rows.map((r) => r[0]);
    const col = (name) => out.header.indexOf(name);
    const energyCols = ["H", "Htilde"].filter((c) => col(c) >= 0);
    const first = out.header.indexOf("u") >= 0 ? out.header.indexOf("u") : out.header.indexOf("u0");
    const stateNames = out.header.slice(1, first > 0 ? first : 6).slice(0, 8);
    plot($("states"), t, stateNames.map((n) => ({ name: n, values: out.rows.map((r) => r[col(n)]) })));
    plot($("energy"), t, energyCols.map((n) => ({ name: n, values: out.rows.map((r) => r[col(n)]) })), { logY: true });
    const last = out.rows[out.rows.length - 1];
    report("sim-msg", out.error
      ? `stopped early: ${out.error}`
      : `${out.rows.length - 1} steps, final H = ${last[col("H")].toExponential(4)}`, Boolean(out.error));
  } catch (e) {
    report("sim-msg", String(e.message ?? e), true);
  }
}

function runBalance() {
  try {
    const out = JSON.parse(energy_balance(...params()));
    plot($("balance"), out.t, [{ name: "|residual|", values: out.residual }, { name: "|dH|", values: out.delta_h }], { logY: true });
    report("balance-msg", `max |dH - dissipation - port| over ${out.t.length} steps: ${out.max_residual.toExponential(3)}`);
  } catch (e) {
    report("balance-msg", String(e.message ?? e), true);
  }
}

function runConvergence() {
  try {
    const out = JSON.parse(convergence($("scenario").value, num("stages"), $("hlist").value, num("conv-t")));
    plot($("conv"), out.h, [{ name: "error", values: out.error }], { logX: true, logY: true, points: true });
    const rows = out.h.map((h, i) => `${h.toExponential(3)}  ${out.error[i].toExponential(4)}`).join("\n");
    report("conv-msg", `h           error\n${rows}\nfitted order ${out.order.toFixed(4)}${out.monotone ? "" : " (errors not monotone)"}`);
  } catch (e) {
    report("conv-msg", String(e.message ?? e), true);
  }
}

await init();
$("run-sim").onclick = runSimulation;
$("run-balance").onclick = runBalance;
$("run-conv").onclick = runConvergence;
runSimulation();
