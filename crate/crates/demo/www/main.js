// Glue produced by `wasm-bindgen --target web` (or `wasm-pack build --target web`) into ./pkg.
import init, { baseline_forecasts, quantile_explorer, train_small_qcnn } from "./pkg/qcnn_demo.js";

const COLORS = { true: "#222", constant: "#d08c00", garch: "#1f6fc0", qr: "#2a9d52", qcnn: "#c0392b" };
const $ = (id) => document.getElementById(id);

function call(fn, ...args) {
  try {
    return JSON.parse(fn(...args));
  } catch (e) {
    alert(String(e));
    return null;
  }
}

function frame(canvas, ymin, ymax) {
  const ctx = canvas.getContext("2d");
  const pad = 50;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "22px system-ui";
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(pad, pad, w, h);
  const y = (v) => pad + h * (1 - (v - ymin) / (ymax - ymin || 1));
  ctx.fillStyle = "#666";
  ctx.fillText(ymax.toPrecision(3), 2, pad + 8);
  ctx.fillText(ymin.toPrecision(3), 2, pad + h);
  return { ctx, pad, w, h, y };
}

function line(f, xs, ys, color, width = 2) {
  const { ctx, pad, w, y } = f;
  const x0 = xs[0];
  const span = xs[xs.length - 1] - x0 || 1;
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  ys.forEach((v, i) => {
    const px = pad + (w * (xs[i] - x0)) / span;
    i ? ctx.lineTo(px, y(v)) : ctx.moveTo(px, y(v));
  });
  ctx.stroke();
}

// Returns as bars, each method's VaR as a threshold line at -VaR, exceedances as dots.
function drawForecasts(canvas, legend, table, out) {
  const r = out.returns;
  const xs = r.map((_, i) => i);
  const all = [...r, ...out.true_var.map((v) => -v), ...out.methods.flatMap((m) => m.var.map((v) => -v))];
  const f = frame(canvas, Math.min(...all), Math.max(...all));
  f.ctx.fillStyle = "#bbb";
  r.forEach((v, i) => {
    const px = f.pad + (f.w * i) / (r.length - 1);
    f.ctx.fillRect(px, Math.min(f.y(0), f.y(v)), 2, Math.abs(f.y(v) - f.y(0)));
  });
  line(f, xs, out.true_var.map((v) => -v), COLORS.true, 1);
  for (const m of out.methods) {
    line(f, xs, m.var.map((v) => -v), COLORS[m.method]);
    f.ctx.fillStyle = COLORS[m.method];
    m.var.forEach((v, i) => {
      if (r[i] < -v) f.ctx.fillRect(f.pad + (f.w * i) / (r.length - 1) - 4, f.y(r[i]) - 4, 8, 8);
    });
  }
  legend.innerHTML = [["true", "true VaR"], ...out.methods.map((m) => [m.method, m.label])]
    .map(([k, label]) => `<span style="color:${COLORS[k]}">■ ${label}</span>`)
    .join("");
  const rows = [["true VaR", out.true_backtest], ...out.methods.map((m) => [m.label, m.backtest])];
  table.innerHTML =
    "<tr><th>forecast</th><th>exceedance rate</th><th>target</th><th>DQ stat</th><th>p-value</th><th>mean VaR</th></tr>" +
    rows
      .map(([name, b]) =>
        `<tr><td>${name}</td><td>${b.exceedance_rate.toFixed(4)}</td><td>${out.theta}</td>` +
        `<td>${b.dq_statistic.toFixed(2)}</td><td>${b.p_value.toFixed(3)}</td><td>${b.mean_var.toFixed(4)}</td></tr>`)
      .join("");
}

function runBaselines() {
  const out = call(baseline_forecasts, $("b-process").value === "garch", +$("b-n").value, +$("b-seed").value, +$("b-theta").value);
  if (out) drawForecasts($("b-canvas"), $("b-legend"), $("b-table"), out);
}

function runExplorer() {
  const theta = +$("e-theta").value;
  $("e-theta-v").textContent = theta.toFixed(2);
  const out = call(quantile_explorer, +$("e-n").value, +$("e-seed").value, theta);
  if (!out) return;
  const f = frame($("e-canvas"), Math.min(...out.loss), Math.max(...out.loss));
  line(f, out.grid, out.loss, COLORS.garch);
  const lo = out.grid[0];
  const span = out.grid[out.grid.length - 1] - lo;
  const px = f.pad + (f.w * (out.quantile - lo)) / span;
  f.ctx.strokeStyle = COLORS.qcnn;
  f.ctx.beginPath();
  f.ctx.moveTo(px, f.pad);
  f.ctx.lineTo(px, f.pad + f.h);
  f.ctx.stroke();
  f.ctx.fillStyle = "rgba(0,0,0,.35)";
  for (const s of out.sample) f.ctx.fillRect(f.pad + (f.w * (s - lo)) / span - 1, f.pad + f.h - 14, 2, 12);
  $("e-info").textContent =
    `sample quantile ${out.quantile.toFixed(4)} (red), grid minimizer of the pinball loss ${out.grid_argmin.toFixed(4)}`;
}

function runNetwork() {
  $("n-run").disabled = true;
  $("n-run").textContent = "Training…";
  // let the button repaint before the synchronous training call
  setTimeout(() => {
    const out = call(train_small_qcnn, +$("n-n").value, +$("n-seed").value, +$("n-theta").value, +$("n-epochs").value);
    if (out) drawForecasts($("n-canvas"), $("n-legend"), $("n-table"), out);
    $("n-run").disabled = false;
    $("n-run").textContent = "Train";
  }, 20);
}

await init();
$("b-run").onclick = runBaselines;
$("n-run").onclick = runNetwork;
for (const id of ["e-n", "e-seed", "e-theta"]) $(id).oninput = runExplorer;
runBaselines();
runExplorer();
