import { describe, expect, it } from "vitest";

import { bindShortcuts } from "../src/shortcuts.js";

function press(key: string, target?: EventTarget) {
  const event = new KeyboardEvent("keydown", { key, bubbles: true });
  (target ?? window).dispatchEvent(event);
}

function counters() {
  const seen = { approve: 0, edit: 0, reject: 0, next: 0, prev: 0 };
  const unbind = bindShortcuts(window, {
    approve: () => seen.approve++,
    edit: () => seen.edit++,
    reject: () => seen.reject++,
    next: () => seen.next++,
    prev: () => seen.prev++,
  });
  return { seen, unbind };
}

describe("keyboard shortcuts", () => {
  it("maps a/e/r and j/k plus arrows", () => {
    const { seen, unbind } = counters();
    press("a");
    press("e");
    press("r");
    press("j");
    press("ArrowDown");
    press("k");
    press("ArrowUp");
    unbind();
    expect(seen).toEqual({ approve: 1, edit: 1, reject: 1, next: 2, prev: 2 });
  });

  it("ignores keys while typing in a textarea", () => {
    const { seen, unbind } = counters();
    const area = document.createElement("textarea");
    document.body.appendChild(area);
    press("a", area);
    unbind();
    area.remove();
    expect(seen.approve).toBe(0);
  });

  it("unbind stops handling", () => {
    const { seen, unbind } = counters();
    unbind();
    press("a");
    expect(seen.approve).toBe(0);
  });
});
