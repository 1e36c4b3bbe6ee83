import init, { singleTxn, runExperiment, runSweep } from "./pkg/commitsim_browser.js";

const MSG_DELAY = 50;
const COLORS = { "2pc": "#b3261e", prc: "#1f5fbf", short: "#176f2c" };
const $ = (id) => document.getElementById(id);

function errorBox(el, e) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(e);
  el.appendChild(p);
}

// crash schedule editor

function addCrash(site = 1, at = 340, down = 100) {
  const tr = document.createElement("tr");
  tr.innerHTML = `<td><input type="number" min="0" max="5" value="${site}"></td>
    <td><input type="number" min="0" value="${at}"></td>
    <td><input type="number" min="1" value="${down}"></td>
    <td><button>remove</button></td>`;
  tr.querySelector("button").onclick = () => tr.remove();
  $("crashes").tBodies[0].appendChild(tr);
}

function crashList() {
  return [...$("crashes").tBodies[0].rows].map((tr) => {
    const [site, at, down] = [...tr.querySelectorAll("input")].map((i) => Number(i.value));
    return { site, at, downtime_ms: down };
  });
}

function drawTimeline(view) {
  const cv = $("txn-canvas");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  const sites = view.sites;
  const end = Math.max(600, ...view.trace.map((e) => e.at + MSG_DELAY)) + 50;
  const left = 110, right = cv.width - 20, top = 30;
  const laneH = (cv.height - top - 30) / Math.max(1, sites.length - 1);
  const x = (t) => left + ((right - left) * t) / end;
  const lane = new Map(sites.map((s, i) => [s.site, top + i * laneH]));

  g.font = "12px system-ui";
  g.fillStyle = "#222";
  for (const s of sites) {
    const y = lane.get(s.site);
    g.strokeStyle = "#bbb";
    g.beginPath(); g.moveTo(left, y); g.lineTo(right, y); g.stroke();
    g.fillText(`S${s.site} ${s.role}`, 6, y - 4);
    if (s.phase) g.fillText(s.phase, 6, y + 12);
  }
  for (let t = 0; t <= end; t += 250) {
    g.fillStyle = "#666";
    g.fillText(`${t}`, x(t) - 8, cv.height - 8);
  }
  // down intervals
  const downFrom = new Map();
  for (const e of view.trace) {
    const y = lane.get(e.from);
    if (y === undefined) continue;
    if (e.kind === "Crash") downFrom.set(e.from, e.at);
    if (e.kind === "Recover" && downFrom.has(e.from)) {
      g.fillStyle = "rgba(179,38,30,0.15)";
      g.fillRect(x(downFrom.get(e.from)), y - 8, x(e.at) - x(downFrom.get(e.from)), 16);
      downFrom.delete(e.from);
    }
  }
  for (const [site, at] of downFrom) {
    g.fillStyle = "rgba(179,38,30,0.15)";
    g.fillRect(x(at), lane.get(site) - 8, right - x(at), 16);
  }
  for (const e of view.trace) {
    if (e.kind === "Crash" || e.kind === "Recover") continue;
    const y0 = lane.get(e.from), y1 = lane.get(e.to);
    if (y0 === undefined || y1 === undefined) continue;
    g.strokeStyle = e.delivered ? "#1f5fbf" : "#b3261e";
    g.setLineDash(e.delivered ? [] : [4, 3]);
    g.beginPath(); g.moveTo(x(e.at), y0); g.lineTo(x(e.at + MSG_DELAY), y1); g.stroke();
    g.setLineDash([]);
    g.fillStyle = g.strokeStyle;
    g.beginPath(); g.arc(x(e.at + MSG_DELAY), y1, 2.5, 0, 7); g.fill();
  }
}

function showTxn() {
  const out = $("txn-summary");
  try {
    const view = JSON.parse(singleTxn($("txn-protocol").value, JSON.stringify(crashList())));
    const v = view.violations.length;
    out.innerHTML = `<p>decision: ${view.decision ?? "none"}; forced log writes ${view.forced_writes}; protocol messages ${view.messages};
      <span class="${v ? "fail" : "pass"}">${v} atomicity violation(s)</span>
      ${view.safety_events.length ? "; safety events: " + view.safety_events.map((s) => Object.keys(s)[0]).join(", ") : ""}</p>
      <p>blue: delivered message, red dashed: lost at a down site, shaded: site down.</p>`;
    drawTimeline(view);
  } catch (e) {
    errorBox(out, e);
  }
}

// single configuration

function showExperiment() {
  const out = $("exp-out");
  out.textContent = "running...";
  setTimeout(() => {
    try {
      const row = JSON.parse(runExperiment($("exp-config").value));
      const cells = Object.entries(row.metrics)
        .map(([k, v]) => `<tr><td>${k}</td><td>${Number.isInteger(v) ? v : v.toFixed(2)}</td></tr>`)
        .join("");
      out.innerHTML = `<table><tr><th>${row.protocol}, MPL ${row.mpl}, p = ${row.failure_prob}</th><th></th></tr>${cells}</table>`;
    } catch (e) {
      errorBox(out, e);
    }
  }, 10);
}

// sweeps

let lastSweep = null;

function drawSweep() {
  const cv = $("sw-canvas");
  const g = cv.getContext("2d");
  g.clearRect(0, 0, cv.width, cv.height);
  if (!lastSweep) return;
  const metric = $("sw-metric").value;
  const xKey = lastSweep.axis === "mpl" ? "mpl" : "failure_prob";
  const rows = lastSweep.rows;
  const xs = [...new Set(rows.map((r) => r[xKey]))].sort((a, b) => a - b);
  const ys = rows.map((r) => r.metrics[metric]);
  let lo = Math.min(...ys), hi = Math.max(...ys);
  if (hi === lo) { hi += 1; lo = Math.max(0, lo - 1); }
  const L = 60, R = cv.width - 120, T = 20, B = cv.height - 40;
  const px = (v) => L + ((R - L) * xs.indexOf(v)) / Math.max(1, xs.length - 1);
  const py = (v) => B - ((B - T) * (v - lo)) / (hi - lo);
  g.strokeStyle = "#999";
  g.beginPath(); g.moveTo(L, T); g.lineTo(L, B); g.lineTo(R, B); g.stroke();
  g.font = "12px system-ui";
  g.fillStyle = "#444";
  xs.forEach((v) => g.fillText(String(v), px(v) - 10, B + 16));
  g.fillText(xKey, (L + R) / 2, B + 32);
  for (let i = 0; i <= 4; i++) {
    const v = lo + ((hi - lo) * i) / 4;
    g.fillText(v.toFixed(1), 6, py(v) + 4);
  }
  let legend = T;
  for (const p of ["2pc", "prc", "short"]) {
    const series = rows.filter((r) => r.protocol === p).sort((a, b) => a[xKey] - b[xKey]);
    if (!series.length) continue;
    g.strokeStyle = g.fillStyle = COLORS[p];
    g.beginPath();
    series.forEach((r, i) => (i ? g.lineTo : g.moveTo).call(g, px(r[xKey]), py(r.metrics[metric])));
    g.stroke();
    series.forEach((r) => { g.beginPath(); g.arc(px(r[xKey]), py(r.metrics[metric]), 3, 0, 7); g.fill(); });
    g.fillText(p, R + 20, legend += 18);
  }
}

function showSweep() {
  const list = $("sw-checks");
  list.innerHTML = "<li>running...</li>";
  setTimeout(() => {
    try {
      const axis = $("sw-axis").value;
      const res = JSON.parse(runSweep(axis, Number($("sw-txns").value), Number($("sw-trials").value)));
      lastSweep = { axis, rows: res.rows };
      list.innerHTML = "";
      for (const c of res.checks) {
        const li = document.createElement("li");
        li.className = c.pass ? "pass" : "fail";
        li.textContent = `${c.pass ? "PASS" : "FAIL"} ${c.name}: ${c.detail}`;
        list.appendChild(li);
      }
      drawSweep();
    } catch (e) {
      errorBox(list, e);
    }
  }, 10);
}

await init();
$("add-crash").onclick = () => addCrash();
$("hazard").onclick = () => {
  $("crashes").tBodies[0].innerHTML = "";
  $("txn-protocol").value = "short";
  addCrash(1, 340, 100);
  addCrash(5, 385, 1115);
  addCrash(0, 390, 1110);
  showTxn();
};
$("txn-run").onclick = showTxn;
$("exp-run").onclick = showExperiment;
$("sw-run").onclick = showSweep;
$("sw-metric").onchange = drawSweep;
showTxn();
