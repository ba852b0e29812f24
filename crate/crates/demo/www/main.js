import init, { kernel_profile, steady_states, fall_trajectory, version } from "./pkg/slenderfall_demo.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// Line plot of several series sharing one x axis.
function plot(canvas, x, series, labels, legend) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 48;
  ctx.clearRect(0, 0, w, h);
  let lo = Infinity, hi = -Infinity;
  for (const s of series) for (const v of s) if (Number.isFinite(v)) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
  if (!(hi > lo)) { hi = lo + 1; lo -= 1; }
  const span = hi - lo;
  lo -= 0.05 * span; hi += 0.05 * span;
  const x0 = x[0], x1 = x[x.length - 1];
  const px = (v) => pad + (w - 2 * pad) * (v - x0) / (x1 - x0);
  const py = (v) => h - pad + (2 * pad - h) * (v - lo) / (hi - lo);

  ctx.strokeStyle = "#999"; ctx.fillStyle = "#444"; ctx.font = "11px sans-serif";
  ctx.strokeRect(pad, pad / 2, w - 2 * pad, h - 1.5 * pad);
  for (let i = 0; i <= 4; i++) {
    const v = lo + (hi - lo) * i / 4;
    ctx.fillText(v.toPrecision(3), 2, py(v) + 4);
    const t = x0 + (x1 - x0) * i / 4;
    ctx.fillText(t.toPrecision(3), px(t) - 10, h - pad / 2);
  }
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    let pen = false;
    s.forEach((v, i) => {
      if (!Number.isFinite(v) || v > hi || v < lo) { pen = false; return; }
      pen ? ctx.lineTo(px(x[i]), py(v)) : ctx.moveTo(px(x[i]), py(v));
      pen = true;
    });
    ctx.stroke();
  });
  legend.innerHTML = labels.map((l, k) => `<span style="color:${COLORS[k % COLORS.length]}">■ ${l}</span>`).join("");
}

function guard(errId, fn) {
  $(errId).textContent = "";
  try { fn(); } catch (e) { $(errId).textContent = e.message ?? String(e); }
}

function runKernel() {
  guard("k-err", () => {
    const ell = num("k-ell");
    const p = JSON.parse(kernel_profile(ell, 1.0, num("k-rmax"), 400));
    // the Stokeslet diverges at the origin; clip it to the plotted range
    const cap = 1.5 * p.a[0];
    const st = p.stokeslet.map((v) => (v === null || v > cap ? NaN : v));
    plot($("k-plot"), p.r, [p.a, p.b, st], ["A(r)", "B(r)", "Stokeslet 1/(8πr)"], $("k-legend"));
  });
}

function config(withDynamics) {
  const shape = $("s-shape").value;
  const size = num("s-size");
  const body =
    shape === "helix" ? { kind: "helix", radius: size, pitch: num("s-pitch"), turns: num("s-turns") }
    : shape === "ring" ? { kind: "ring", radius: size }
    : { kind: "rod", length: size };
  const end = num("s-rho");
  body.density = end === 1 ? { uniform: 1 } : { linear: { start: 1, end } };
  const cfg = {
    body,
    fluid: { nondimensional: { ell: num("s-ell"), reynolds: withDynamics ? num("f-re") : 0 } },
    masses: { complementary: num("s-mc") },
    discretization: { panels: Math.round(num("s-panels")), order: 4 },
  };
  if (withDynamics) {
    const g = $("f-g").value.split(",").map(Number);
    const tEnd = num("f-tend");
    const dt = num("f-dt");
    cfg.dynamics = {
      dt, t_end: tEnd, steady_tol: 1e-6,
      output_stride: Math.max(1, Math.round(tEnd / dt / 400)),
      gravity_direction: g,
    };
  }
  return JSON.stringify(cfg);
}

const fmt = (v) => (Math.abs(v) < 1e-300 ? "0" : v.toExponential(4));
const vec = (v) => v.map(fmt).join(", ");

function runSteady() {
  guard("s-err", () => {
    const r = JSON.parse(steady_states(config(false)));
    const rows = r.steady_states.map((s) =>
      `<tr><td>${fmt(s.lambda)}</td><td>${s.multiplicity}</td><td>${vec(s.g)}</td><td>${vec(s.xi)}</td><td>${fmt(s.momentum_residual)}</td></tr>`
    ).join("");
    const d = r.diagnostics;
    $("s-out").innerHTML =
      `<table><tr><th>λ</th><th>mult.</th><th>g</th><th>ξ</th><th>residual</th></tr>${rows}</table>` +
      `<p>${d.nodes} nodes, arc length ${r.resistance.meta.length.toFixed(4)}, ` +
      `condition ≈ ${r.resistance.meta.condition_estimate.toExponential(2)}` +
      (d.warnings.length ? `; ${d.warnings.join("; ")}` : "") + `</p>`;
  });
}

function runFall() {
  guard("f-err", () => {
    const out = JSON.parse(fall_trajectory(config(true)));
    const lines = out.trajectory.trim().split("\n");
    const cols = lines[0].split(",");
    const data = lines.slice(1).map((l) => l.split(",").map(Number));
    const col = (name) => data.map((row) => row[cols.indexOf(name)]);
    const names = ["xi1", "xi2", "xi3", "G1", "G2", "G3"];
    plot($("f-plot"), col("t"), names.map(col), ["ξ₁", "ξ₂", "ξ₃", "G₁", "G₂", "G₃"], $("f-legend"));
    const dyn = out.report.dynamics;
    const det = dyn.detection;
    $("f-out").innerHTML =
      `<p>${dyn.steps} steps to t = ${dyn.final_time.toFixed(3)}; ` +
      (det.converged
        ? `settled on steady state ${det.nearest} (distance ${fmt(det.distance)}).`
        : `no steady state reached (distance ${fmt(det.distance)}, balance residual ${fmt(det.balance_residual)}).`) +
      `</p>`;
  });
}

await init();
$("version").textContent = `v${version()}`;
$("k-run").onclick = runKernel;
$("s-run").onclick = runSteady;
$("f-run").onclick = runFall;
runKernel();
runSteady();
