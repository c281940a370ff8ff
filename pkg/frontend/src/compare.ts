/**
 * Before/after split view state. Pure: the divider selects how much of the
 * relit frame is revealed; zoom/pan live separately so toggling or dragging
 * the divider never disturbs the viewing transform.
 */

export interface CompareState {
  divider: number; // 0 = full original, 1 = full relit
  zoom: number;
  panX: number;
  panY: number;
}

export function initialCompare(): CompareState {
  return { divider: 0.5, zoom: 1, panX: 0, panY: 0 };
}

export function setDivider(state: CompareState, value: number): CompareState {
  return { ...state, divider: Math.min(1, Math.max(0, value)) };
}

export function setView(state: CompareState, zoom: number, panX: number, panY: number): CompareState {
  return { ...state, zoom: Math.max(0.1, zoom), panX, panY };
}

/** Pixel split column for a given viewport width. */
export function splitColumn(state: CompareState, width: number): number {
  return Math.round(state.divider * width);
}

/** CSS clip-path inset for the relit overlay: revealed from the left edge
 * up to the divider (divider 0 hides it entirely, 1 shows it fully). */
export function relitClip(state: CompareState): string {
  return `inset(0 ${((1 - state.divider) * 100).toFixed(3)}% 0 0)`;
}
