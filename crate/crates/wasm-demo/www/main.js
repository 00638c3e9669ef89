import init, { fit_curve, shadow_density, PrecisionFit } from "./pkg/mvsmooth_wasm.js";

const $ = (id) => document.getElementById(id);

function axes(ctx, xs, ys, pad = 30) {
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const w = ctx.canvas.width, h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad / 2, w - 1.5 * pad, h - 1.5 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(x0.toFixed(2), pad, h - 4);
  ctx.fillText(x1.toFixed(2), w - pad - 10, h - 4);
  ctx.fillText(y1.toFixed(2), 2, pad / 2 + 8);
  ctx.fillText(y0.toFixed(2), 2, h - pad);
  return {
    x: (v) => pad + ((v - x0) / (x1 - x0 || 1)) * (w - 1.5 * pad),
    y: (v) => h - pad - ((v - y0) / (y1 - y0 || 1)) * (h - 1.5 * pad),
  };
}

function line(ctx, s, xs, ys, color, width = 1.5) {
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(s.x(x), s.y(ys[i])) : ctx.moveTo(s.x(x), s.y(ys[i]))));
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.stroke();
  ctx.lineWidth = 1;
}

function drawCurve() {
  const info = $("fitinfo");
  info.textContent = "running...";
  info.className = "";
  // let the status text paint before the chain blocks the thread
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const f = JSON.parse(fit_curve(+$("n").value, +$("noise").value, +$("sweeps").value, BigInt($("seed").value)));
      const ctx = $("curve").getContext("2d");
      const s = axes(ctx, f.x, [...f.y, ...f.lower, ...f.upper]);
      ctx.fillStyle = "rgba(70,130,180,0.25)";
      ctx.beginPath();
      f.grid.forEach((g, i) => (i ? ctx.lineTo(s.x(g), s.y(f.upper[i])) : ctx.moveTo(s.x(g), s.y(f.upper[i]))));
      for (let i = f.grid.length - 1; i >= 0; i--) ctx.lineTo(s.x(f.grid[i]), s.y(f.lower[i]));
      ctx.fill();
      ctx.fillStyle = "#333";
      f.x.forEach((x, i) => ctx.fillRect(s.x(x) - 1.5, s.y(f.y[i]) - 1.5, 3, 3));
      line(ctx, s, f.grid, f.truth, "#c33", 1);
      line(ctx, s, f.grid, f.median, "steelblue", 2);
      info.textContent = `${(performance.now() - t0).toFixed(0)} ms, P(term included) = ${f.inclusion.toFixed(3)}`;
    } catch (e) {
      info.textContent = e;
      info.className = "err";
    }
  }, 10);
}

function drawShadow() {
  const theta = +$("theta").value, tau2 = Math.pow(10, +$("tau2").value);
  $("thetav").textContent = `${theta.toFixed(2)} (tanh = ${Math.tanh(theta).toFixed(3)})`;
  $("tau2v").textContent = tau2.toPrecision(3);
  const d = JSON.parse(shadow_density(theta, tau2, 400));
  const ctx = $("shadow").getContext("2d");
  const s = axes(ctx, d.r, [0, ...d.density]);
  line(ctx, s, d.r, d.density, "darkgreen", 2);
}

let pfit = null;

function drawTable() {
  const a = +$("thr").value;
  $("thrv").textContent = a.toFixed(2);
  const tab = $("ptab");
  if (!pfit) {
    tab.innerHTML = "";
    return;
  }
  const p = pfit.probs(a);
  const r = pfit.mean_corr();
  let html = "<tr><td></td><td>y1</td><td>y2</td><td>y3</td></tr>";
  for (let k = 0; k < 3; k++) {
    html += `<tr><td>y${k + 1}</td>`;
    for (let l = 0; l < 3; l++) {
      const v = p[3 * k + l];
      const bg = k === l ? "#eee" : `rgba(200,80,40,${v})`;
      const title = `mean correlation ${r[3 * k + l].toFixed(3)}`;
      html += `<td style="background:${bg}" title="${title}">${k === l ? "" : v.toFixed(3)}</td>`;
    }
    html += "</tr>";
  }
  tab.innerHTML = html;
}

function fitPrecision() {
  $("ptab").innerHTML = "<tr><td>running...</td></tr>";
  setTimeout(() => {
    try {
      if (pfit) pfit.free();
      pfit = new PrecisionFit(+$("pn").value, 3000, 11n);
      drawTable();
    } catch (e) {
      $("ptab").innerHTML = `<tr><td class="err">${e}</td></tr>`;
    }
  }, 10);
}

await init();
$("status").textContent = "";
$("fit").onclick = drawCurve;
$("theta").oninput = drawShadow;
$("tau2").oninput = drawShadow;
$("pfit").onclick = fitPrecision;
$("thr").oninput = drawTable;
drawShadow();
drawCurve();
fitPrecision();
