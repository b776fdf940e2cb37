import type { MetricsReport } from "./types.js";

export interface GroupBar {
  group: string;
  errors: number;
  total: number;
  ratio: number;
  /** share of the judged set, the dashed overlay marker */
  proportion: number;
}

/**
 * Rows for the per-group error chart, sorted by group name. Matches the
 * per-group CSV the evaluate command emits (group, errors, total, ratio)
 * one to one.
 */
export function chartData(report: MetricsReport): GroupBar[] {
  return Object.keys(report.per_group_error)
    .sort()
    .map((group) => {
      const [errors, total] = report.per_group_counts[group] ?? [0, 0];
      return {
        group,
        errors,
        total,
        ratio: report.per_group_error[group],
        proportion: report.n > 0 ? total / report.n : 0,
      };
    });
}

const WIDTH = 640;
const HEIGHT = 220;
const PAD = 28;

/** Render the bar chart (error ratios) with proportion markers as SVG. */
export function renderChart(container: HTMLElement, report: MetricsReport | null): void {
  container.textContent = "";
  if (report === null) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No metrics report yet — finish an iteration first.";
    container.appendChild(empty);
    return;
  }
  const bars = chartData(report);
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("role", "img");
  svg.dataset.groups = String(bars.length);

  const plotW = WIDTH - 2 * PAD;
  const plotH = HEIGHT - 2 * PAD;
  const slot = bars.length ? plotW / bars.length : plotW;
  const barW = slot * 0.6;

  bars.forEach((bar, i) => {
    const x = PAD + i * slot + (slot - barW) / 2;
    const h = bar.ratio * plotH;
    const rect = document.createElementNS(svgNs, "rect");
    rect.setAttribute("x", x.toFixed(2));
    rect.setAttribute("y", (PAD + plotH - h).toFixed(2));
    rect.setAttribute("width", barW.toFixed(2));
    rect.setAttribute("height", h.toFixed(2));
    rect.setAttribute("class", "error-bar");
    rect.dataset.group = bar.group;
    rect.dataset.ratio = String(bar.ratio);
    svg.appendChild(rect);

    // Dashed marker: the group's share of the judged data.
    const marker = document.createElementNS(svgNs, "line");
    const my = PAD + plotH - bar.proportion * plotH;
    marker.setAttribute("x1", (PAD + i * slot).toFixed(2));
    marker.setAttribute("x2", (PAD + (i + 1) * slot).toFixed(2));
    marker.setAttribute("y1", my.toFixed(2));
    marker.setAttribute("y2", my.toFixed(2));
    marker.setAttribute("class", "proportion-marker");
    marker.dataset.group = bar.group;
    svg.appendChild(marker);

    const label = document.createElementNS(svgNs, "text");
    label.setAttribute("x", (PAD + i * slot + slot / 2).toFixed(2));
    label.setAttribute("y", (HEIGHT - 8).toFixed(2));
    label.setAttribute("class", "group-label");
    label.textContent = bar.group;
    svg.appendChild(label);
  });

  const summary = document.createElement("p");
  summary.className = "metrics-summary";
  summary.textContent =
    `correct ${report.cs_score}% | safe ${report.safe_score}% | ` +
    `MTLD ${report.mtld.toFixed(2)} | error variance ${report.error_ratio_variance.toFixed(6)} | n=${report.n}`;
  container.appendChild(svg);
  container.appendChild(summary);
}
