import init, { GibbsCloud, ParticleSim, SpikeView } from "./pkg/contrastive_geometry_demo.js";

const $ = (id) => document.getElementById(id);

function tauFromSlider() {
  return Math.pow(10, parseFloat($("g-tau").value));
}

function drawSphere(canvas, xyz, angle, color) {
  const ctx = canvas.getContext("2d");
  const r = canvas.width / 2 - 10;
  const cx = canvas.width / 2;
  const cy = canvas.height / 2;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.stroke();
  const c = Math.cos(angle);
  const s = Math.sin(angle);
  const pts = [];
  for (let i = 0; i < xyz.length; i += 3) {
    const x = c * xyz[i] + s * xyz[i + 1];
    const depth = -s * xyz[i] + c * xyz[i + 1];
    pts.push([x, xyz[i + 2], depth]);
  }
  pts.sort((a, b) => a[2] - b[2]);
  for (const [x, z, depth] of pts) {
    ctx.globalAlpha = depth > 0 ? 0.9 : 0.25;
    ctx.fillStyle = color;
    ctx.fillRect(cx + r * x - 1.5, cy - r * z - 1.5, 3, 3);
  }
  ctx.globalAlpha = 1;
}

let cloud = null;
function refreshGibbs() {
  const tau = tauFromSlider();
  $("g-tau-out").textContent = tau.toPrecision(3);
  if (cloud) cloud.free();
  cloud = new GibbsCloud(tau, 24000, 2400, 1n);
  $("g-cap").textContent = cloud.cap_mass().toFixed(3);
  drawSphere($("g-canvas"), cloud.xyz(), parseFloat($("g-rot").value), "#1f77b4");
}

let sim = null;
let running = false;
function resetSim() {
  if (sim) sim.free();
  sim = new ParticleSim(parseInt($("p-m").value, 10), tauFromSlider(), 1n);
  showSim();
}

function showSim() {
  $("p-step").textContent = sim.steps();
  $("p-obj").textContent = sim.objective().toFixed(4);
  $("p-cap").textContent = sim.cap_mass().toFixed(3);
  drawSphere($("p-canvas"), sim.xyz(), parseFloat($("g-rot").value), "#ff7f0e");
}

function tick() {
  if (!running) return;
  sim.advance(10);
  showSim();
  requestAnimationFrame(tick);
}

function drawSpike() {
  const frac = parseFloat($("s-sigma").value);
  $("s-sigma-out").textContent = frac.toFixed(3);
  const view = new SpikeView(360, 0.5, frac, parseFloat($("s-mis").value));
  const canvas = $("s-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const a = view.angles();
  const series = [
    [view.potential(), "#2ca02c"],
    [view.rho2(), "#1f77b4"],
    [view.spike(), "#d62728"],
  ];
  for (const [ys, color] of series) {
    const lo = Math.min(...ys);
    const hi = Math.max(...ys);
    const span = hi > lo ? hi - lo : 1;
    ctx.strokeStyle = color;
    ctx.beginPath();
    ys.forEach((y, i) => {
      const px = ((a[i] + Math.PI) / (2 * Math.PI)) * canvas.width;
      const py = canvas.height - 10 - ((y - lo) / span) * (canvas.height - 20);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  $("s-gap").textContent = view.gap().toExponential(3);
  $("s-bound").textContent = view.bound().toExponential(3);
  view.free();
}

await init();
$("g-tau").addEventListener("input", () => { refreshGibbs(); resetSim(); });
$("g-rot").addEventListener("input", () => { refreshGibbs(); showSim(); });
$("p-reset").addEventListener("click", resetSim);
$("p-run").addEventListener("click", () => {
  running = !running;
  $("p-run").textContent = running ? "pause" : "run";
  if (running) requestAnimationFrame(tick);
});
$("s-sigma").addEventListener("input", drawSpike);
$("s-mis").addEventListener("input", drawSpike);
refreshGibbs();
resetSim();
drawSpike();
