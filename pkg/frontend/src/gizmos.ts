/**
 * Gizmo model: the editable light list. Pure data + operations; the gizmo
 * list maps bijectively onto the server's lighting JSON light array (same
 * order, same fields), so serialization is just projection.
 */
import { Light, Lighting, Vec3, lightSchema } from "./lighting";

export interface Gizmo {
  id: number;
  light: Light;
}

export interface GizmoState {
  nextId: number;
  gizmos: Gizmo[];
  selected: number | null;
}

export function emptyState(): GizmoState {
  return { nextId: 1, gizmos: [], selected: null };
}

/** Hydrate gizmos from a server lighting JSON (e.g. after a fit). */
export function fromLighting(lighting: Lighting): GizmoState {
  const gizmos = lighting.lights.map((light, i) => ({ id: i + 1, light }));
  return { nextId: gizmos.length + 1, gizmos, selected: null };
}

/** Serialize to the PUT /lighting body; omits the environment so the server
 * keeps whatever env is installed (constant default or fitted HDRI). */
export function toLighting(state: GizmoState): Lighting {
  return { lights: state.gizmos.map((g) => lightSchema.parse(g.light)) };
}

export function addLight(state: GizmoState, light: Light): GizmoState {
  const gizmo = { id: state.nextId, light: lightSchema.parse(light) };
  return {
    nextId: state.nextId + 1,
    gizmos: [...state.gizmos, gizmo],
    selected: gizmo.id,
  };
}

export function deleteLight(state: GizmoState, id: number): GizmoState {
  return {
    ...state,
    gizmos: state.gizmos.filter((g) => g.id !== id),
    selected: state.selected === id ? null : state.selected,
  };
}

export function selectLight(state: GizmoState, id: number | null): GizmoState {
  if (id !== null && !state.gizmos.some((g) => g.id === id)) return state;
  return { ...state, selected: id };
}

function updateLight(state: GizmoState, id: number, f: (l: Light) => Light): GizmoState {
  return {
    ...state,
    gizmos: state.gizmos.map((g) => (g.id === id ? { ...g, light: f(g.light) } : g)),
  };
}

/** Positions are unconstrained: any finite point is legal, including behind
 * the camera. Directional lights carry no position and are left unchanged. */
export function moveLight(state: GizmoState, id: number, position: Vec3): GizmoState {
  return updateLight(state, id, (light) =>
    "position" in light ? { ...light, position } : light,
  );
}

export function setIntensity(state: GizmoState, id: number, value: Vec3): GizmoState {
  return updateLight(state, id, (light) => {
    if (light.type === "directional") return { ...light, irradiance: value };
    if (light.type === "area") return { ...light, radiance: value };
    return { ...light, intensity: value };
  });
}

/** Change a light's type, carrying over position and energy where they map. */
export function retypeLight(state: GizmoState, id: number, type: Light["type"]): GizmoState {
  return updateLight(state, id, (old) => {
    const pos: Vec3 = "position" in old ? old.position : [0, 0, 0];
    const energy: Vec3 =
      old.type === "directional" ? old.irradiance : old.type === "area" ? old.radiance : old.intensity;
    switch (type) {
      case "point":
        return { type, position: pos, intensity: energy };
      case "spot":
        return {
          type,
          position: pos,
          intensity: energy,
          direction: [0, 0, 1],
          cone_inner_deg: 25,
          cone_outer_deg: 40,
        };
      case "directional":
        return { type, direction: [0, 0, 1], irradiance: energy };
      case "area":
        return {
          type,
          position: pos,
          edge_u: [0.25, 0, 0],
          edge_v: [0, 0.25, 0],
          radiance: energy,
        };
    }
  });
}
