import init, { solve_region, trade_split } from "./pkg/freightmatch_demo.js";

const NS = "http://www.w3.org/2000/svg";

function el(name, attrs, text) {
  const e = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  if (text !== undefined) e.textContent = text;
  return e;
}

function values(fieldset) {
  const out = {};
  for (const input of fieldset.querySelectorAll("input, select")) out[input.name] = input.value;
  return out;
}

// Grouped bars: series is [{name, color, values}], one group per label.
function bars(svg, labels, series, yMax) {
  svg.replaceChildren();
  const w = +svg.getAttribute("width"), h = +svg.getAttribute("height");
  const left = 40, bottom = 40, top = 24;
  const plotH = h - bottom - top;
  const group = (w - left - 10) / Math.max(labels.length, 1);
  const barW = (group * 0.8) / series.length;
  const max = yMax ?? Math.max(1e-9, ...series.flatMap(s => s.values));
  for (let t = 0; t <= 4; t++) {
    const y = top + plotH * (1 - t / 4);
    svg.append(el("line", { x1: left, x2: w - 10, y1: y, y2: y, stroke: "#eee" }));
    svg.append(el("text", { x: 2, y: y + 4 }, (max * t / 4).toPrecision(2)));
  }
  labels.forEach((label, i) => {
    series.forEach((s, k) => {
      const v = s.values[i] ?? 0;
      const bh = plotH * v / max;
      svg.append(el("rect", {
        x: left + i * group + group * 0.1 + k * barW, y: top + plotH - bh,
        width: barW, height: bh, fill: s.color,
      }));
    });
    svg.append(el("text", { x: left + i * group + group / 2, y: h - bottom + 14, "text-anchor": "middle" }, label));
  });
  series.forEach((s, k) => {
    svg.append(el("rect", { x: left + k * 110, y: 4, width: 10, height: 10, fill: s.color }));
    svg.append(el("text", { x: left + k * 110 + 14, y: 13 }, s.name));
  });
}

function zoneMap(svg, zones, flows) {
  svg.replaceChildren();
  const w = +svg.getAttribute("width"), h = +svg.getAttribute("height"), pad = 20;
  const xs = zones.map(z => z.x), ys = zones.map(z => z.y);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const scale = Math.min((w - 2 * pad) / Math.max(x1 - x0, 1), (h - 2 * pad) / Math.max(y1 - y0, 1));
  const at = new Map(zones.map(z => [z.id, [pad + (z.x - x0) * scale, h - pad - (z.y - y0) * scale]]));
  const maxTons = Math.max(1, ...flows.map(f => f.tons));
  for (const f of flows) {
    if (f.from === f.to) continue;
    const [ax, ay] = at.get(f.from), [bx, by] = at.get(f.to);
    svg.append(el("line", {
      x1: ax, y1: ay, x2: bx, y2: by, stroke: "#3b6ea5",
      "stroke-opacity": 0.5, "stroke-width": 0.5 + 6 * f.tons / maxTons,
    }));
  }
  for (const z of zones) {
    const [x, y] = at.get(z.id);
    const local = flows.filter(f => f.from === z.id && f.to === z.id).reduce((s, f) => s + f.tons, 0);
    svg.append(el("circle", { cx: x, cy: y, r: 4 + 8 * Math.sqrt(local / maxTons), fill: z.is_internal ? "#d9822b" : "#777" }));
    svg.append(el("text", { x: x + 8, y: y - 6 }, z.id));
  }
}

function binLabel(r) {
  return r.upper_miles === null ? `${r.lower_miles}+` : `${r.lower_miles}-${r.upper_miles}`;
}

function updateRegion() {
  const fs = document.getElementById("region");
  const v = values(fs);
  const w4 = Math.pow(10, +v.w4);
  document.getElementById("ratio-out").textContent = v.capacity_ratio;
  document.getElementById("w4-out").textContent = w4.toPrecision(3);
  const stats = document.getElementById("region-stats");
  try {
    const started = performance.now();
    const r = JSON.parse(solve_region(JSON.stringify({
      seed: +v.seed, zones: +v.zones, establishments_per_zone: +v.establishments_per_zone,
      capacity_ratio: +v.capacity_ratio, w4, mode: v.mode,
    })));
    const ms = performance.now() - started;
    const rows = r.distance.rows;
    bars(document.getElementById("bins"), rows.map(binLabel), [
      { name: "modeled", color: "#3b6ea5", values: rows.map(x => x.modeled_share) },
      { name: "target", color: "#d9822b", values: rows.map(x => x.target_share) },
    ], 1);
    zoneMap(document.getElementById("map"), r.zones, r.flows);
    stats.className = "stats";
    stats.textContent =
      `${r.establishments} establishments, ${r.pairs} pairs, solved in ${ms.toFixed(0)} ms\n` +
      `sum of bin gaps   ${r.bin_gap.toFixed(4)}\n` +
      `flow gap          ${r.flow_gap_tons.toFixed(1)} t\n` +
      `unmet demand      ${r.unmet_tons.toFixed(1)} of ${r.demand_tons.toFixed(1)} t\n` +
      (r.phases.length ? `phases            ${r.phases.join(", ")}` : "");
  } catch (e) {
    stats.className = "stats error";
    stats.textContent = String(e);
  }
}

function updateTrade() {
  const v = values(document.getElementById("trade"));
  const stats = document.getElementById("trade-stats");
  try {
    const shares = v.shares.split(",").map(s => parseFloat(s)).filter(s => !Number.isNaN(s));
    const r = JSON.parse(trade_split(JSON.stringify({
      shares, tons: +v.tons, lb: +v.lb, ub: +v.ub, seed: +v.seed,
    })));
    bars(document.getElementById("shares"), r.sectors.map(s => s.sector), [
      { name: "realized", color: "#3b6ea5", values: r.sectors.map(s => s.realized_share) },
      { name: "target", color: "#d9822b", values: r.sectors.map(s => s.target_share) },
    ], 1);
    const hist = r.histogram;
    bars(document.getElementById("sizes"),
      hist.counts.map((_, k) => (hist.lower + k * hist.width).toFixed(0)),
      [{ name: "shipments by size (t)", color: "#6a9955", values: hist.counts }]);
    stats.className = "stats";
    stats.textContent = `${r.shipments} shipments, ${r.total_tons.toFixed(3)} t allocated\n` +
      r.sectors.map(s => `sector ${s.sector}: ${(100 * s.realized_share).toFixed(2)}% (target ${(100 * s.target_share).toFixed(2)}%)`).join("\n");
  } catch (e) {
    stats.className = "stats error";
    stats.textContent = String(e);
  }
}

await init();
document.getElementById("region").addEventListener("input", updateRegion);
document.getElementById("trade").addEventListener("input", updateTrade);
updateRegion();
updateTrade();
