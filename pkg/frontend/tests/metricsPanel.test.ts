import { describe, expect, it } from "vitest";

import { chartData, renderChart } from "../src/metricsPanel.js";
import { makeReport } from "./helpers.js";

describe("chartData", () => {
  it("two groups with errors 0.2 and 0.4 become two bars at those heights", () => {
    const bars = chartData(makeReport());
    expect(bars).toEqual([
      { group: "alpha", errors: 2, total: 10, ratio: 0.2, proportion: 0.5 },
      { group: "bravo", errors: 4, total: 10, ratio: 0.4, proportion: 0.5 },
    ]);
  });

  it("zero-error report gives flat zero bars", () => {
    const report = makeReport({
      per_group_error: { alpha: 0, bravo: 0 },
      per_group_counts: { alpha: [0, 10], bravo: [0, 10] },
      error_ratio_variance: 0,
      cs_score: 100,
    });
    expect(chartData(report).every((b) => b.ratio === 0)).toBe(true);
  });

  it("sorts groups by name regardless of payload order", () => {
    const report = makeReport({
      per_group_error: { zulu: 0.1, alpha: 0.3 },
      per_group_counts: { zulu: [1, 10], alpha: [3, 10] },
    });
    expect(chartData(report).map((b) => b.group)).toEqual(["alpha", "zulu"]);
  });
});

describe("renderChart", () => {
  it("renders one bar and one proportion marker per group", () => {
    const container = document.createElement("div");
    renderChart(container, makeReport());
    expect(container.querySelectorAll("rect.error-bar")).toHaveLength(2);
    expect(container.querySelectorAll("line.proportion-marker")).toHaveLength(2);
    const bars = Array.from(container.querySelectorAll("rect.error-bar"));
    expect(bars.map((b) => (b as SVGElement).dataset.ratio)).toEqual(["0.2", "0.4"]);
  });

  it("renders the empty state when no report exists", () => {
    const container = document.createElement("div");
    renderChart(container, null);
    expect(container.querySelector("svg")).toBeNull();
    expect(container.querySelector(".empty-state")?.textContent).toMatch(/No metrics/);
  });

  it("bar heights scale with the ratio", () => {
    const container = document.createElement("div");
    renderChart(container, makeReport());
    const [alpha, bravo] = Array.from(
      container.querySelectorAll("rect.error-bar"),
    ) as SVGElement[];
    const heightOf = (el: SVGElement) => parseFloat(el.getAttribute("height") ?? "0");
    expect(heightOf(bravo)).toBeCloseTo(2 * heightOf(alpha), 5);
  });
});
