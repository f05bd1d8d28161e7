import init, { explain_node, sweep_curves, mac_table } from "./pkg/shapsparse_web.js";

const SVG = "http://www.w3.org/2000/svg";
const CLASS_COLORS = ["#4e79a7", "#59a14f", "#b07aa1", "#f28e2b", "#76b7b2"];

function el(name, attrs = {}, parent = null) {
  const node = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (parent) parent.appendChild(node);
  return node;
}

function values(form) {
  return Object.fromEntries(new FormData(form).entries());
}

function fail(out, err) {
  out.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err);
  out.appendChild(p);
}

// Each class gets its own ring, so cross-class edges are the long ones.
function layout(nodes, width, height) {
  const classes = Math.max(...nodes.map((n) => n.label)) + 1;
  const members = Array.from({ length: classes }, () => []);
  nodes.forEach((n, i) => members[n.label].push(i));
  const pos = new Array(nodes.length);
  const ring = Math.min(width, height) * 0.22;
  members.forEach((ids, c) => {
    const a = (2 * Math.PI * c) / classes - Math.PI / 2;
    const cx = width / 2 + Math.cos(a) * ring * 1.35;
    const cy = height / 2 + Math.sin(a) * ring * 1.35;
    ids.forEach((id, j) => {
      const b = (2 * Math.PI * j) / ids.length;
      pos[id] = [cx + Math.cos(b) * ring * 0.75, cy + Math.sin(b) * ring * 0.75];
    });
  });
  return pos;
}

function drawExplanation(out, data) {
  out.innerHTML = "";
  const width = 940, height = 560;
  const svg = el("svg", { width, height, viewBox: `0 0 ${width} ${height}` }, out);
  const pos = layout(data.nodes, width, height);
  const score = new Map(data.scores.map(([e, s]) => [e, s]));
  const maxAbs = Math.max(1e-12, ...data.scores.map(([, s]) => Math.abs(s)));

  el("defs", {}, svg).innerHTML =
    '<marker id="arrow" viewBox="0 0 10 10" refX="14" refY="5" markerWidth="5" markerHeight="5" orient="auto">' +
    '<path d="M0,0 L10,5 L0,10 z" fill="#555"/></marker>';

  data.edges.forEach(([s, d, noise], e) => {
    const [x1, y1] = pos[s], [x2, y2] = pos[d];
    if (score.has(e)) {
      const v = score.get(e);
      el("line", {
        x1, y1, x2, y2,
        stroke: v >= 0 ? "#1f77b4" : "#d62728",
        "stroke-width": 1 + 5 * Math.abs(v) / maxAbs,
        "stroke-dasharray": noise ? "5 3" : "none",
        "marker-end": "url(#arrow)",
      }, svg).appendChild(el("title")).textContent = `edge ${e}: ${s} -> ${d}, score ${v.toFixed(5)}${noise ? " (noise)" : ""}`;
    } else if (s < d) {
      el("line", { x1, y1, x2, y2, stroke: noise ? "#e7a3a3" : "#ddd", "stroke-width": 1 }, svg);
    }
  });

  data.nodes.forEach((n, i) => {
    const [cx, cy] = pos[i];
    const c = el("circle", {
      cx, cy, r: i === data.node ? 9 : 5,
      fill: CLASS_COLORS[n.label % CLASS_COLORS.length],
      stroke: n.predicted === n.label ? "#fff" : "#000",
      "stroke-width": i === data.node ? 3 : 1.5,
      style: "cursor:pointer",
    }, svg);
    el("title", {}, c).textContent = `node ${i}, class ${n.label}, predicted ${n.predicted}`;
    c.addEventListener("click", () => {
      const form = document.getElementById("explain-form");
      form.elements.node.value = i;
      form.requestSubmit();
    });
  });

  const info = document.createElement("p");
  if (data.error) {
    info.className = "error";
    info.textContent = data.error;
  } else {
    const total = data.scores.reduce((a, [, s]) => a + s, 0);
    const noisy = data.scores.filter(([e]) => data.edges[e][2]);
    info.textContent =
      `node ${data.node}: predicted class ${data.target} with p = ${data.confidence.toFixed(4)}; ` +
      `${data.scores.length} players (${noisy.length} planted noise, dashed); ` +
      `scores sum to ${total.toFixed(4)} against p - p(empty) = ${(data.confidence - data.base).toFixed(4)}. ` +
      `Blue raises the prediction, red lowers it. Click a node to explain it.`;
  }
  out.appendChild(info);
}

function drawCurves(out, data) {
  out.innerHTML = "";
  const width = 620, height = 320, m = { l: 50, r: 130, t: 15, b: 40 };
  const svg = el("svg", { width, height }, out);
  const series = [
    ["signed", "#1f77b4", "test_accuracy", "none"],
    ["abs", "#d62728", "test_accuracy", "none"],
    ["signed", "#1f77b4", "fidelity_plus", "4 3"],
    ["abs", "#d62728", "fidelity_plus", "4 3"],
  ];
  const rows = data.curves.signed;
  const all = series.flatMap(([n, , key]) => data.curves[n].map((r) => r[key])).filter((v) => v !== null);
  const lo = Math.min(0, ...all), hi = Math.max(1, ...all);
  const x = (t) => m.l + (t / 0.9) * (width - m.l - m.r);
  const y = (v) => height - m.b - ((v - lo) / (hi - lo)) * (height - m.t - m.b);

  el("line", { x1: m.l, y1: y(0), x2: width - m.r, y2: y(0), stroke: "#999" }, svg);
  el("line", { x1: m.l, y1: m.t, x2: m.l, y2: height - m.b, stroke: "#999" }, svg);
  for (const r of rows) {
    el("text", { x: x(r.tau), y: height - m.b + 16, "text-anchor": "middle", "font-size": 11 }, svg).textContent = r.tau.toFixed(1);
  }
  for (const v of [lo, (lo + hi) / 2, hi]) {
    el("text", { x: m.l - 6, y: y(v) + 4, "text-anchor": "end", "font-size": 11 }, svg).textContent = v.toFixed(2);
  }
  el("text", { x: (width - m.r + m.l) / 2, y: height - 6, "text-anchor": "middle", "font-size": 12 }, svg).textContent = "sparsity";

  series.forEach(([name, color, key, dash], i) => {
    const pts = data.curves[name].filter((r) => r[key] !== null).map((r) => `${x(r.tau)},${y(r[key])}`);
    el("polyline", { points: pts.join(" "), fill: "none", stroke: color, "stroke-width": 2, "stroke-dasharray": dash }, svg);
    const ly = m.t + 10 + i * 18;
    el("line", { x1: width - m.r + 10, y1: ly, x2: width - m.r + 30, y2: ly, stroke: color, "stroke-width": 2, "stroke-dasharray": dash }, svg);
    el("text", { x: width - m.r + 35, y: ly + 4, "font-size": 11 }, svg).textContent =
      `${name} ${key === "test_accuracy" ? "accuracy" : "fidelity+"}`;
  });

  const p = document.createElement("p");
  p.className = "note";
  p.textContent =
    `${data.num_nodes} nodes, ${data.num_edges} directed edges, ${(100 * data.noise_fraction).toFixed(1)}% planted noise; ` +
    `${data.explained} nodes explained${data.failed ? `, ${data.failed} failed` : ""}.`;
  out.appendChild(p);
}

function drawMacs(out, rows) {
  out.innerHTML = "";
  const table = document.createElement("table");
  table.innerHTML = "<tr><th>sparsity</th><th>kept edges</th><th>MACs</th><th>relative</th></tr>";
  for (const r of rows) {
    const tr = table.insertRow();
    for (const v of [r.tau, r.kept_edges, r.macs.toLocaleString("en-US"), r.relative.toFixed(3)]) {
      tr.insertCell().textContent = v;
    }
  }
  out.appendChild(table);
}

function wire(id, outId, run) {
  const form = document.getElementById(id);
  const out = document.getElementById(outId);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    try {
      run(values(form), out);
    } catch (err) {
      fail(out, err);
    }
  });
  form.requestSubmit();
}

await init();

wire("explain-form", "explain-out", (v, out) => {
  const data = JSON.parse(explain_node(BigInt(v.seed), +v.npc, +v.pout, +v.node, v.method, +v.k));
  drawExplanation(out, data);
});

wire("sweep-form", "sweep-out", (v, out) => {
  drawCurves(out, JSON.parse(sweep_curves(BigInt(v.seed), +v.npc, +v.pout, v.method, +v.k)));
});

wire("mac-form", "mac-out", (v, out) => {
  drawMacs(out, JSON.parse(mac_table(+v.nodes, +v.edges, v.dims, v.taus)));
});
