// SVG rendering for the comparison view: one panel per outcome item, one
// mean marker with its interval band per candidate. The numbers drawn are
// exactly the service's response fields.

import type { Prediction } from "./api.js";

export interface CandidateSeries {
  candidate: string;
  prediction: Prediction;
}

const COLORS = ["#2b6cb0", "#c05621", "#2f855a", "#805ad5"];

function fmt(v: number): string {
  return v.toFixed(3);
}

export function renderPanels(container: HTMLElement, series: CandidateSeries[]): void {
  container.textContent = "";
  if (series.length === 0) return;
  const items = series[0].prediction.items;
  items.forEach((item, q) => {
    const panel = document.createElement("div");
    panel.className = "panel";
    panel.dataset.item = item;

    const heading = document.createElement("h3");
    heading.textContent = item;
    panel.appendChild(heading);

    const values = series.flatMap((s) => [s.prediction.lower[q], s.prediction.upper[q]]);
    const lo = Math.min(...values);
    const hi = Math.max(...values);
    const pad = (hi - lo || 1) * 0.15;
    const min = lo - pad;
    const max = hi + pad;
    const width = 420;
    const rowHeight = 34;
    const height = rowHeight * series.length + 20;
    const scale = (v: number) => ((v - min) / (max - min)) * (width - 120) + 100;

    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));
    svg.setAttribute("role", "img");

    series.forEach((s, idx) => {
      const y = 18 + idx * rowHeight;
      const color = COLORS[idx % COLORS.length];
      const lower = s.prediction.lower[q];
      const upper = s.prediction.upper[q];
      const mean = s.prediction.mean[q];

      const band = document.createElementNS("http://www.w3.org/2000/svg", "line");
      band.setAttribute("x1", String(scale(lower)));
      band.setAttribute("x2", String(scale(upper)));
      band.setAttribute("y1", String(y));
      band.setAttribute("y2", String(y));
      band.setAttribute("stroke", color);
      band.setAttribute("stroke-width", "6");
      band.setAttribute("stroke-opacity", "0.35");
      band.setAttribute("class", "band");
      band.dataset.candidate = s.candidate;
      band.dataset.lower = fmt(lower);
      band.dataset.upper = fmt(upper);
      svg.appendChild(band);

      const dot = document.createElementNS("http://www.w3.org/2000/svg", "circle");
      dot.setAttribute("cx", String(scale(mean)));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "5");
      dot.setAttribute("fill", color);
      dot.setAttribute("class", "mean");
      dot.dataset.candidate = s.candidate;
      dot.dataset.mean = fmt(mean);
      svg.appendChild(dot);

      const label = document.createElementNS("http://www.w3.org/2000/svg", "text");
      label.setAttribute("x", "4");
      label.setAttribute("y", String(y + 4));
      label.setAttribute("font-size", "11");
      label.textContent = s.candidate;
      svg.appendChild(label);

      const valueText = document.createElementNS("http://www.w3.org/2000/svg", "text");
      valueText.setAttribute("x", String(width - 6));
      valueText.setAttribute("y", String(y + 4));
      valueText.setAttribute("text-anchor", "end");
      valueText.setAttribute("font-size", "11");
      valueText.setAttribute("class", "value");
      valueText.textContent = `${fmt(mean)} [${fmt(lower)}, ${fmt(upper)}]`;
      svg.appendChild(valueText);
    });
    panel.appendChild(svg);
    container.appendChild(panel);
  });
}

export function renderDeltas(container: HTMLElement, series: CandidateSeries[]): void {
  container.textContent = "";
  if (series.length < 2) return;
  const base = series[0];
  const list = document.createElement("ul");
  list.className = "deltas";
  for (const other of series.slice(1)) {
    base.prediction.items.forEach((item, q) => {
      const diff = other.prediction.mean[q] - base.prediction.mean[q];
      const entry = document.createElement("li");
      entry.dataset.item = item;
      entry.dataset.candidate = other.candidate;
      entry.textContent =
        `${other.candidate} vs ${base.candidate} on ${item}: ` +
        `${diff >= 0 ? "+" : ""}${fmt(diff)}`;
      list.appendChild(entry);
    });
  }
  container.appendChild(list);
}
