/**
 * Lighting JSON schema shared with the relight service, validated with zod.
 * Positions are in normalized scene coordinates.
 */
import { z } from "zod";

const vec3 = z.tuple([z.number(), z.number(), z.number()]);
const nonneg3 = vec3.refine((v) => v.every((x) => x >= 0), {
  message: "components must be non-negative",
});

export const pointLightSchema = z.object({
  type: z.literal("point"),
  position: vec3,
  intensity: nonneg3,
});

export const spotLightSchema = z
  .object({
    type: z.literal("spot"),
    position: vec3,
    intensity: nonneg3,
    direction: vec3,
    cone_inner_deg: z.number().gt(0).max(90),
    cone_outer_deg: z.number().gt(0).max(90),
  })
  .refine((s) => s.cone_inner_deg <= s.cone_outer_deg, {
    message: "spot cones must satisfy inner <= outer",
  });

export const directionalLightSchema = z.object({
  type: z.literal("directional"),
  direction: vec3,
  irradiance: nonneg3,
});

export const areaLightSchema = z.object({
  type: z.literal("area"),
  position: vec3,
  edge_u: vec3,
  edge_v: vec3,
  radiance: nonneg3,
});

export const lightSchema = z.discriminatedUnion("type", [
  pointLightSchema,
  spotLightSchema,
  directionalLightSchema,
  areaLightSchema,
]);

export const environmentSchema = z.union([
  z.object({
    type: z.literal("constant"),
    rgb: nonneg3,
    rows: z.number().int().positive().optional(),
  }),
  z.object({ type: z.literal("hdri") }).passthrough(),
]);

export const lightingSchema = z.object({
  environment: environmentSchema.optional(),
  lights: z.array(lightSchema),
});

export type Vec3 = z.infer<typeof vec3>;
export type PointLight = z.infer<typeof pointLightSchema>;
export type SpotLight = z.infer<typeof spotLightSchema>;
export type DirectionalLight = z.infer<typeof directionalLightSchema>;
export type AreaLight = z.infer<typeof areaLightSchema>;
export type Light = z.infer<typeof lightSchema>;
export type Lighting = z.infer<typeof lightingSchema>;

export function parseLighting(raw: unknown): Lighting {
  return lightingSchema.parse(raw);
}

/** Position of a light for gizmo placement (directional lights have none). */
export function lightPosition(light: Light): Vec3 | null {
  return "position" in light ? light.position : null;
}
