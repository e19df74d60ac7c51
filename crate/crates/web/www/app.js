import init, { shuffle_histogram, route, simulate } from "./pkg/unitychain_web.js";

const $ = (id) => document.getElementById(id);

function fail(el, err) {
  el.className = "error";
  el.textContent = String(err);
}

function showShuffle() {
  const table = $("sh-table");
  try {
    const n = Number($("sh-n").value);
    const v = JSON.parse(shuffle_histogram(n, Number($("sh-samples").value), BigInt($("sh-seed").value)));
    const expected = v.samples / v.n;
    $("sh-last").className = "";
    $("sh-last").textContent = `last order: ${v.last.join(" ")} (expected ${expected.toFixed(0)} per cell)`;
    let html = "<tr><th>node \\ slot</th>" + v.counts.map((_, j) => `<th>${j}</th>`).join("") + "</tr>";
    v.counts.forEach((row, i) => {
      html += `<tr><th>${i}</th>`;
      for (const c of row) {
        const dev = Math.max(-1, Math.min(1, (c - expected) / (0.1 * expected)));
        const hue = dev > 0 ? 0 : 220;
        html += `<td title="${c}" style="background:hsl(${hue},70%,${100 - 40 * Math.abs(dev)}%)">${c}</td>`;
      }
      html += "</tr>";
    });
    table.innerHTML = html;
  } catch (e) {
    table.innerHTML = "";
    fail($("sh-last"), e);
  }
}

function showRoute() {
  const out = $("rt-out");
  try {
    const v = JSON.parse(route($("rt-key").value, $("rt-boundary").value));
    out.className = "";
    out.textContent = `key ${v.key}: parity split -> strand ${v.parity}, range split -> strand ${v.ranges}`;
  } catch (e) {
    fail(out, e);
  }
}

function drawTimeline(v) {
  const c = $("timeline");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const rows = v.rows;
  const w = c.width / Math.max(1, rows.length);
  const maxPending = Math.max(1, ...rows.map((r) => r.pending));
  rows.forEach((r, i) => {
    const h = (r.pending / maxPending) * 120;
    ctx.fillStyle = r.down ? "#c33" : "#8ab";
    ctx.fillRect(i * w, 140 - h, Math.max(1, w - 1), h);
  });
  for (const b of v.blocks) {
    ctx.fillStyle = b.strand === "+" ? "#2a7" : "#72a";
    ctx.fillRect(b.cycle * w, b.strand === "+" ? 150 : 170, Math.max(1, w - 1), 14);
  }
  ctx.fillStyle = "#000";
  for (const e of v.epochs) ctx.fillRect(e * w, 190, 2, 14);
  ctx.fillStyle = "#e90";
  for (const g of v.geneses) ctx.fillRect(g * w, 205, 2, 14);
}

function showSimulation() {
  const out = $("sim-summary");
  try {
    const v = JSON.parse(simulate($("sim-scenario").value, BigInt($("sim-seed").value)));
    drawTimeline(v);
    const s = v.summary;
    out.className = "";
    out.textContent =
      "bars: pending per cycle (red = down); rows: + and - blocks; ticks: epoch (black), genesis (orange)\n\n" +
      JSON.stringify({ ...s, reshuffles: undefined }, null, 2);
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("sh-go").onclick = showShuffle;
$("rt-go").onclick = showRoute;
$("sim-go").onclick = showSimulation;
showShuffle();
showRoute();
