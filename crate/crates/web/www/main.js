import init, { reprice, recommend, breakeven } from "./pkg/agentcost_web.js";

let board = null;

const $ = (id) => document.getElementById(id);

// Moves the decimal point of a non-negative decimal string by `places`
// without going through floating point, so prices stay exact.
function shiftDecimal(s, places) {
  let [int, frac = ""] = s.trim().split(".");
  if (!/^\d*$/.test(int) || !/^\d*$/.test(frac) || (int + frac) === "") throw new Error(`not a price: ${s}`);
  let digits = int + frac;
  let point = int.length + places;
  if (point <= 0) { digits = "0".repeat(1 - point) + digits; point = 1; }
  if (point > digits.length) digits += "0".repeat(point - digits.length);
  const out = (digits.slice(0, point).replace(/^0+(?=\d)/, "") || "0") +
    "." + (digits.slice(point) || "0");
  return out.replace(/\.?0+$/, "") || "0";
}

function render() {
  $("benchmark").textContent = board.benchmark_id;
  const onFrontier = new Set(board.frontier.map((v) => v.label));

  const rows = board.strategies.map((s) => {
    const ci = s.accuracy.ci ? `${s.accuracy.ci[0].toFixed(3)} to ${s.accuracy.ci[1].toFixed(3)}` : "";
    const cls = onFrontier.has(s.id) ? ' class="frontier"' : "";
    return `<tr${cls}><td>${s.id}</td><td>${s.runs}</td><td>${s.accuracy.mean.toFixed(3)}</td>` +
      `<td>${ci}</td><td>${s.cost.mean}</td><td>${s.cost.total}</td></tr>`;
  });
  $("strategies").tBodies[0].innerHTML = rows.join("");

  const prices = Object.entries(board.price_sheet.models).map(([model, p]) =>
    `<tr><td>${model}</td>` +
    `<td><input data-model="${model}" data-side="input_per_token" value="${shiftDecimal(p.input_per_token, 6)}"></td>` +
    `<td><input data-model="${model}" data-side="output_per_token" value="${shiftDecimal(p.output_per_token, 6)}"></td></tr>`);
  $("prices").tBodies[0].innerHTML = prices.join("");

  const costs = board.strategies.map((s) => parseFloat(s.cost.mean));
  const slider = $("budget");
  slider.max = (Math.max(...costs) * 1.1).toFixed(6);
  slider.step = (slider.max / 1000).toFixed(6);
  if (parseFloat(slider.value) > parseFloat(slider.max) || !slider.dataset.touched) {
    slider.value = board.frontier.length ? board.frontier[0].cost : 0;
  }
  drawChart();
  advise();
}

function drawChart() {
  const canvas = $("chart");
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 50;
  ctx.clearRect(0, 0, W, H);

  const xs = board.strategies.map((s) => parseFloat(s.cost.mean));
  const ys = board.strategies.map((s) => s.accuracy.mean);
  const xmax = Math.max(...xs) * 1.1 || 1;
  const ymin = Math.max(0, Math.min(...ys) - 0.05), ymax = Math.min(1, Math.max(...ys) + 0.05);
  const px = (x) => pad + (x / xmax) * (W - 2 * pad);
  const py = (y) => H - pad - ((y - ymin) / (ymax - ymin || 1)) * (H - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad); ctx.lineTo(pad, H - pad); ctx.lineTo(W - pad, H - pad);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  ctx.fillText(`mean cost per run (${board.price_sheet.currency})`, W / 2 - 60, H - 15);
  ctx.fillText("accuracy", 5, pad - 10);
  for (let i = 0; i <= 4; i++) {
    const y = ymin + ((ymax - ymin) * i) / 4, x = (xmax * i) / 4;
    ctx.fillText(y.toFixed(2), 10, py(y) + 4);
    ctx.fillText(x.toFixed(3), px(x) - 15, H - pad + 15);
  }

  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  board.frontier.forEach((v, i) => {
    const [x, y] = [px(parseFloat(v.cost)), py(v.accuracy)];
    i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
  });
  ctx.stroke();
  ctx.lineWidth = 1;

  board.strategies.forEach((s, i) => {
    const [x, y] = [px(xs[i]), py(ys[i])];
    if (s.accuracy.ci) {
      ctx.strokeStyle = "#bbb";
      ctx.beginPath();
      ctx.moveTo(x, py(Math.max(ymin, s.accuracy.ci[0])));
      ctx.lineTo(x, py(Math.min(ymax, s.accuracy.ci[1])));
      ctx.stroke();
    }
    ctx.fillStyle = board.frontier.some((v) => v.label === s.id) ? "#1565c0" : "#999";
    ctx.beginPath();
    ctx.arc(x, y, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = "#333";
    ctx.fillText(s.id, x + 6, y - 6);
  });

  const budget = parseFloat($("budget").value);
  ctx.strokeStyle = "#e65100";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(px(budget), pad); ctx.lineTo(px(budget), H - pad);
  ctx.stroke();
  ctx.setLineDash([]);
}

function advise() {
  const value = parseFloat($("budget").value).toFixed(6);
  $("budget-value").textContent = `${value} ${board.price_sheet.currency}`;
  try {
    const a = JSON.parse(recommend(JSON.stringify(board), "budget", value));
    $("advice").textContent = a.kind === "point"
      ? `Run ${a.label}: expected accuracy ${a.expected_accuracy.toFixed(3)} at ${a.expected_cost} per run.`
      : `Run ${a.cheaper} with probability ${a.p_cheaper.toFixed(3)}, otherwise ${a.costlier}: ` +
        `expected accuracy ${a.expected_accuracy.toFixed(3)} at ${a.expected_cost} per run.`;
    $("advice").className = "";
  } catch (e) {
    $("advice").textContent = `No strategy fits this budget (${e}).`;
    $("advice").className = "error";
  }
  drawChart();
}

function repriceFromTable() {
  const models = {};
  try {
    for (const input of document.querySelectorAll("#prices input")) {
      models[input.dataset.model] ??= {};
      models[input.dataset.model][input.dataset.side] = shiftDecimal(input.value, -6);
    }
    const sheet = { ...board.price_sheet, as_of: new Date().toISOString().slice(0, 10), models };
    board = JSON.parse(reprice(JSON.stringify(board), JSON.stringify(sheet)));
    $("reprice-error").textContent = "";
    render();
  } catch (e) {
    $("reprice-error").textContent = String(e);
  }
}

function updateBreakeven() {
  try {
    const r = JSON.parse(breakeven($("fa").value, $("va").value, $("fb").value, $("vb").value));
    $("breakeven-out").textContent = r.tasks === null
      ? "A never becomes cheaper than B."
      : `A is no more expensive than B from ${r.tasks} tasks on (A ${r.cost_a}, B ${r.cost_b} at that point).`;
    $("breakeven-out").className = "";
  } catch (e) {
    $("breakeven-out").textContent = String(e);
    $("breakeven-out").className = "error";
  }
}

async function main() {
  await init();
  board = await (await fetch("leaderboard.json")).json();
  render();
  updateBreakeven();

  $("budget").addEventListener("input", (e) => { e.target.dataset.touched = "1"; advise(); });
  $("reprice").addEventListener("click", repriceFromTable);
  for (const id of ["fa", "va", "fb", "vb"]) $(id).addEventListener("input", updateBreakeven);
  $("file").addEventListener("change", async (e) => {
    const file = e.target.files[0];
    if (!file) return;
    board = JSON.parse(await file.text());
    if (board.schema !== 1) {
      $("reprice-error").textContent = `unsupported leaderboard schema ${board.schema}`;
      return;
    }
    render();
  });
}

main();
