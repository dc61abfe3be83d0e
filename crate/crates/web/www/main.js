import init, { augment_preview, balance_preview, threshold_sweep } from "./pkg/sentiment_web.js";

const $ = (id) => document.getElementById(id);

function guard(errId, fn) {
  try {
    $(errId).textContent = "";
    fn();
  } catch (e) {
    $(errId).textContent = String(e.message ?? e);
  }
}

// Augmentation

function drawSample(ctx, w, h) {
  const g = ctx.createLinearGradient(0, 0, w, h);
  g.addColorStop(0, "#2b6cb0");
  g.addColorStop(1, "#f6ad55");
  ctx.fillStyle = g;
  ctx.fillRect(0, 0, w, h);
  ctx.fillStyle = "#fff";
  ctx.font = "bold 64px sans-serif";
  ctx.fillText("R", w * 0.12, h * 0.45);
  ctx.fillStyle = "#22543d";
  ctx.fillRect(w * 0.55, h * 0.55, w * 0.3, h * 0.3);
}

function renderAugment() {
  guard("aug-err", () => {
    const src = $("aug-src");
    const { width, height } = src;
    const pixels = src.getContext("2d").getImageData(0, 0, width, height).data;
    $("aug-crop-v").textContent = $("aug-crop").value;
    $("aug-rot-v").textContent = $("aug-rot").value;
    const out = augment_preview(
      width,
      height,
      new Uint8Array(pixels.buffer),
      Number($("aug-crop").value),
      Number($("aug-ox").value),
      Number($("aug-oy").value),
      Number($("aug-rot").value),
      $("aug-flip").checked,
    );
    const img = new ImageData(new Uint8ClampedArray(out), width, height);
    $("aug-out").getContext("2d").putImageData(img, 0, 0);
  });
}

function loadFile(file) {
  const img = new Image();
  img.onload = () => {
    const src = $("aug-src");
    const ctx = src.getContext("2d");
    ctx.clearRect(0, 0, src.width, src.height);
    ctx.drawImage(img, 0, 0, src.width, src.height);
    URL.revokeObjectURL(img.src);
    renderAugment();
  };
  img.src = URL.createObjectURL(file);
}

// Balancing

const SAMPLES = {
  task1: "image_path,labels\n" +
    ["negative", "negative", "negative", "negative", "negative", "positive", "positive", "positive", "neutral", "neutral"]
      .map((l, i) => `img${i}.jpg,${l}`).join("\n"),
  task2: "image_path,labels\na.jpg,sadness;fear\nb.jpg,sadness\nc.jpg,sadness;neutral\nd.jpg,fear\ne.jpg,joy\nf.jpg,sadness;anger\ng.jpg,neutral",
  task3: "image_path,labels\na.jpg,sadness;fear\nb.jpg,joy\nc.jpg,horror;sadness\nd.jpg,anger\ne.jpg,sadness;empathetic_pain\nf.jpg,relief",
};

function renderBalance() {
  guard("bal-err", () => {
    const r = JSON.parse(balance_preview(
      $("bal-task").value,
      $("bal-csv").value,
      Number($("bal-cap").value),
      BigInt($("bal-seed").value || 0),
    ));
    const rows = r.labels
      .map((l, i) => `<tr><td>${l}</td><td>${r.before[i]}</td><td>${r.after[i]}</td></tr>`)
      .join("");
    $("bal-out").innerHTML =
      `<table><tr><th>label</th><th>before</th><th>after</th></tr>${rows}` +
      `<tr><th>records</th><th>${r.records_before}</th><th>${r.records_after}</th></tr></table>`;
  });
}

// Threshold sweep

function renderSweep() {
  guard("sw-err", () => {
    $("sw-noise-v").textContent = $("sw-noise").value;
    const r = JSON.parse(threshold_sweep(
      $("sw-task").value,
      Number($("sw-n").value),
      Number($("sw-noise").value),
      0.02,
      BigInt($("sw-seed").value || 0),
    ));
    const c = $("sw-plot");
    const ctx = c.getContext("2d");
    const pad = 32;
    const x = (t) => pad + t * (c.width - 2 * pad);
    const y = (f) => c.height - pad - f * (c.height - 2 * pad);
    ctx.clearRect(0, 0, c.width, c.height);
    ctx.strokeStyle = "#999";
    ctx.beginPath();
    ctx.moveTo(x(0), y(1));
    ctx.lineTo(x(0), y(0));
    ctx.lineTo(x(1), y(0));
    ctx.stroke();
    ctx.fillStyle = "#555";
    ctx.font = "11px sans-serif";
    for (const t of [0, 0.25, 0.5, 0.75, 1]) {
      ctx.fillText(t.toFixed(2), x(t) - 10, c.height - pad + 14);
      ctx.fillText(t.toFixed(2), 2, y(t) + 4);
    }
    ctx.strokeStyle = "#2b6cb0";
    ctx.lineWidth = 2;
    ctx.beginPath();
    r.points.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, x(p.threshold), y(p.weighted_f1)));
    ctx.stroke();
    ctx.fillStyle = "#c53030";
    ctx.beginPath();
    ctx.arc(x(r.best_threshold), y(r.best_weighted_f1), 4, 0, 2 * Math.PI);
    ctx.fill();
    $("sw-best").textContent =
      `best threshold ${r.best_threshold.toFixed(2)} with weighted F1 ${r.best_weighted_f1.toFixed(3)}`;
  });
}

await init();

drawSample($("aug-src").getContext("2d"), 192, 192);
for (const id of ["aug-crop", "aug-ox", "aug-oy", "aug-rot", "aug-flip"]) $(id).addEventListener("input", renderAugment);
$("aug-file").addEventListener("change", (e) => e.target.files[0] && loadFile(e.target.files[0]));
renderAugment();

$("bal-csv").value = SAMPLES.task1;
$("bal-task").addEventListener("change", () => {
  $("bal-csv").value = SAMPLES[$("bal-task").value];
  renderBalance();
});
$("bal-run").addEventListener("click", renderBalance);
renderBalance();

for (const id of ["sw-task", "sw-n", "sw-noise", "sw-seed"]) $(id).addEventListener("input", renderSweep);
renderSweep();
