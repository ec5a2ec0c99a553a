// Glue for index.html. Expects the wasm-bindgen web bundle in ./pkg.
import init, { density_curve, gamma_curve, simulate_filter } from "./pkg/wonham_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function model() {
  return [num("r12"), num("r21"), num("h1"), num("h2"), num("sigma")];
}

// Draws each series as a polyline; non-finite points break the line.
function plot(canvas, x, series, { logX = false } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const fx = logX ? Math.log : (v) => v;
  const xs = x.map(fx);
  const ys = series.flatMap((s) => Array.from(s.y)).filter(Number.isFinite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (y0 === y1) [y0, y1] = [y0 - 1, y1 + 1];
  const px = (v) => pad + ((fx(v) - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (v) => h - pad - ((v - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "12px sans-serif";
  ctx.fillText(y1.toPrecision(4), 2, pad + 4);
  ctx.fillText(y0.toPrecision(4), 2, h - pad);
  ctx.fillText(x[0].toPrecision(3), pad, h - pad + 16);
  ctx.fillText(x[x.length - 1].toPrecision(3), w - pad - 30, h - pad + 16);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    let open = false;
    for (let i = 0; i < x.length; i++) {
      const v = s.y[i];
      if (!Number.isFinite(v)) { open = false; continue; }
      open ? ctx.lineTo(px(x[i]), py(v)) : ctx.moveTo(px(x[i]), py(v));
      open = true;
    }
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 150, pad + 16 + 14 * k);
  });
}

function guard(out, f) {
  try {
    out.classList.remove("err");
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function runDensity() {
  const out = $("density-out");
  guard(out, () => {
    const c = density_curve(...model(), 400);
    plot($("density-plot"), c.x, [{ y: c.pdf, color: "#1f77b4", label: "density of π(1)" }]);
    out.textContent =
      `gamma        ${c.gamma.toPrecision(10)}\n` +
      `lambda1      ${c.lambda1.toPrecision(10)}\n` +
      `lambda1+2    ${c.lambda_sum.toPrecision(10)}`;
  });
}

function runGamma() {
  const out = $("gamma-out");
  guard(out, () => {
    const [r12, r21, h1, h2] = model();
    const c = gamma_curve(r12, r21, h1, h2, num("smin"), num("smax"), 60);
    const flat = (v) => c.sigma.map(() => v);
    plot($("gamma-plot"), c.sigma, [
      { y: c.gamma, color: "#1f77b4", label: "γ (quadrature)" },
      { y: c.low_snr, color: "#2ca02c", label: "large-σ expansion" },
      { y: c.high_snr, color: "#d62728", label: "small-σ expansion" },
      { y: flat(c.spectral), color: "#999", label: "spectral gap" },
    ], { logX: true });
    const last = c.gamma.length - 1;
    out.textContent =
      `gamma(${c.sigma[0].toPrecision(3)}) = ${c.gamma[0].toPrecision(8)}\n` +
      `gamma(${c.sigma[last].toPrecision(3)}) = ${c.gamma[last].toPrecision(8)}\n` +
      `az bound ${c.az.toPrecision(6)}, spectral gap ${c.spectral.toPrecision(6)}`;
  });
}

function runFilter() {
  const out = $("filter-out");
  guard(out, () => {
    const s = simulate_filter(...model(), num("horizon"), num("dt"), num("burn"), num("seed") >>> 0);
    plot($("filter-plot"), s.t, [
      { y: s.state.map((v) => 2 - v), color: "#bbb", label: "1 when X = state 1" },
      { y: s.pi1, color: "#1f77b4", label: "π(1) from state 1" },
      { y: s.pibar1, color: "#ff7f0e", label: "π(1) from state 2" },
    ]);
    plot($("dist-plot"), s.t, [{ y: s.log_dist, color: "#9467bd", label: "log |π − π̄|" }]);
    out.textContent = Number.isFinite(s.slope)
      ? `distance slope ${s.slope.toPrecision(6)} ± ${s.slope_error.toPrecision(3)}; quadrature γ ${s.gamma.toPrecision(6)}`
      : "window after burn-in is shorter than 10 time units; no slope";
  });
}

await init();
$("run-density").onclick = runDensity;
$("run-gamma").onclick = runGamma;
$("run-filter").onclick = runFilter;
runDensity();
