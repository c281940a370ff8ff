import { describe, expect, it } from "vitest";
import { initialCompare, relitClip, setDivider, setView, splitColumn } from "../src/compare";

describe("compare view", () => {
  it("divider 0 shows the full original", () => {
    const s = setDivider(initialCompare(), 0);
    expect(relitClip(s)).toBe("inset(0 100.000% 0 0)"); // relit fully hidden
    expect(splitColumn(s, 640)).toBe(0);
  });

  it("divider 1 shows the full relit frame", () => {
    const s = setDivider(initialCompare(), 1);
    expect(relitClip(s)).toBe("inset(0 0.000% 0 0)");
    expect(splitColumn(s, 640)).toBe(640);
  });

  it("clamps out-of-range values", () => {
    expect(setDivider(initialCompare(), 7).divider).toBe(1);
    expect(setDivider(initialCompare(), -3).divider).toBe(0);
  });

  it("divider changes leave zoom and pan untouched", () => {
    let s = setView(initialCompare(), 2.5, 10, -4);
    s = setDivider(s, 0.2);
    expect(s.zoom).toBe(2.5);
    expect(s.panX).toBe(10);
    expect(s.panY).toBe(-4);
  });
});
