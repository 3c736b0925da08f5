// Top-down (x, y) volume view math: world <-> canvas transforms, bounds
// clamping, marker hit testing. Pure functions, no DOM.

export interface Bounds {
  x: [number, number];
  y: [number, number];
  z: [number, number];
}

export interface ViewGeometry {
  width: number;
  height: number;
  margin: number;
}

export function worldToScreen(
  pos: [number, number, number], bounds: Bounds, view: ViewGeometry,
): { sx: number; sy: number } {
  const usableW = view.width - 2 * view.margin;
  const usableH = view.height - 2 * view.margin;
  const fx = (pos[0] - bounds.x[0]) / (bounds.x[1] - bounds.x[0]);
  const fy = (pos[1] - bounds.y[0]) / (bounds.y[1] - bounds.y[0]);
  // screen y grows downward; world +y points up the screen
  return {
    sx: view.margin + fx * usableW,
    sy: view.height - view.margin - fy * usableH,
  };
}

export function screenToWorld(
  sx: number, sy: number, z: number, bounds: Bounds, view: ViewGeometry,
): [number, number, number] {
  const usableW = view.width - 2 * view.margin;
  const usableH = view.height - 2 * view.margin;
  const fx = (sx - view.margin) / usableW;
  const fy = (view.height - view.margin - sy) / usableH;
  const x = bounds.x[0] + fx * (bounds.x[1] - bounds.x[0]);
  const y = bounds.y[0] + fy * (bounds.y[1] - bounds.y[0]);
  return clampToBounds([x, y, z], bounds);
}

export function clampToBounds(
  pos: [number, number, number], bounds: Bounds,
): [number, number, number] {
  const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));
  return [
    clamp(pos[0], bounds.x[0], bounds.x[1]),
    clamp(pos[1], bounds.y[0], bounds.y[1]),
    clamp(pos[2], bounds.z[0], bounds.z[1]),
  ];
}

export function wasClamped(
  pos: [number, number, number], bounds: Bounds,
): boolean {
  const c = clampToBounds(pos, bounds);
  return c[0] !== pos[0] || c[1] !== pos[1] || c[2] !== pos[2];
}

export interface Marker {
  name: string;
  sx: number;
  sy: number;
  radius: number;
}

/** Topmost marker under the pointer, last drawn wins. */
export function hitTest(markers: Marker[], sx: number, sy: number): string | null {
  for (let i = markers.length - 1; i >= 0; i--) {
    const m = markers[i];
    const dx = sx - m.sx;
    const dy = sy - m.sy;
    if (dx * dx + dy * dy <= m.radius * m.radius) return m.name;
  }
  return null;
}

/** Marker radius shrinks with height above the coil (z in bounds). */
export function markerRadius(z: number, bounds: Bounds): number {
  const f = (z - bounds.z[0]) / (bounds.z[1] - bounds.z[0]);
  return 16 - 9 * Math.min(1, Math.max(0, f));
}
