import { describe, expect, it } from "vitest";
import { lightSchema, parseLighting } from "../src/lighting";

describe("lighting schema", () => {
  it("round-trips every light kind", () => {
    const cases = [
      { type: "point", position: [1, 2, 3], intensity: [0.5, 0.25, 0.125] },
      { type: "spot", position: [0, -1, 2], intensity: [1, 1, 1], direction: [0, 0, 1], cone_inner_deg: 15, cone_outer_deg: 30 },
      { type: "directional", direction: [0, 1, 0], irradiance: [2, 2, 2] },
      { type: "area", position: [0, 0, 1], edge_u: [0.5, 0, 0], edge_v: [0, 0.5, 0], radiance: [3, 3, 3] },
    ];
    for (const c of cases) {
      expect(lightSchema.parse(c)).toEqual(c);
    }
  });

  it("rejects inverted spot cones", () => {
    expect(() =>
      lightSchema.parse({
        type: "spot",
        position: [0, 0, 0],
        intensity: [1, 1, 1],
        direction: [0, 0, 1],
        cone_inner_deg: 50,
        cone_outer_deg: 30,
      }),
    ).toThrow(/inner <= outer/);
  });

  it("rejects negative intensity", () => {
    expect(() =>
      lightSchema.parse({ type: "point", position: [0, 0, 0], intensity: [-1, 0, 0] }),
    ).toThrow(/non-negative/);
  });

  it("accepts lighting without an environment (server keeps current)", () => {
    const parsed = parseLighting({ lights: [] });
    expect(parsed.environment).toBeUndefined();
  });

  it("accepts constant and hdri environments", () => {
    parseLighting({ environment: { type: "constant", rgb: [0.5, 0.5, 0.5], rows: 16 }, lights: [] });
    parseLighting({ environment: { type: "hdri", rows: 128, mean_rgb: [0.1, 0.2, 0.3] }, lights: [] });
  });
});
