import { describe, expect, it } from "vitest";

import {
  clampToBounds,
  hitTest,
  markerRadius,
  screenToWorld,
  wasClamped,
  worldToScreen,
} from "../src/volume.js";

const BOUNDS = {
  x: [-0.25, 0.25] as [number, number],
  y: [-0.25, 0.25] as [number, number],
  z: [0.03, 0.6] as [number, number],
};
const VIEW = { width: 420, height: 420, margin: 18 };

describe("volume view math", () => {
  it("round-trips world to screen and back", () => {
    const world: [number, number, number] = [0.1, -0.07, 0.2];
    const { sx, sy } = worldToScreen(world, BOUNDS, VIEW);
    const back = screenToWorld(sx, sy, 0.2, BOUNDS, VIEW);
    expect(back[0]).toBeCloseTo(world[0], 6);
    expect(back[1]).toBeCloseTo(world[1], 6);
    expect(back[2]).toBeCloseTo(world[2], 6);
  });

  it("maps the center of the volume to the center of the view", () => {
    const { sx, sy } = worldToScreen([0, 0, 0.3], BOUNDS, VIEW);
    expect(sx).toBeCloseTo(VIEW.width / 2);
    expect(sy).toBeCloseTo(VIEW.height / 2);
  });

  it("world +y points up the screen", () => {
    const low = worldToScreen([0, -0.2, 0.3], BOUNDS, VIEW);
    const high = worldToScreen([0, 0.2, 0.3], BOUNDS, VIEW);
    expect(high.sy).toBeLessThan(low.sy);
  });

  it("clamps drags outside the volume to its bounds", () => {
    const world = screenToWorld(-100, 9999, 0.2, BOUNDS, VIEW);
    expect(world[0]).toBe(BOUNDS.x[0]);
    expect(world[1]).toBe(BOUNDS.y[0]);
    expect(wasClamped([0.5, 0, 0.2], BOUNDS)).toBe(true);
    expect(wasClamped([0.2, 0, 0.2], BOUNDS)).toBe(false);
    expect(clampToBounds([0, 0, 5], BOUNDS)[2]).toBe(0.6);
  });

  it("hit-tests the topmost marker", () => {
    const markers = [
      { name: "under", sx: 100, sy: 100, radius: 12 },
      { name: "over", sx: 104, sy: 102, radius: 12 },
    ];
    expect(hitTest(markers, 102, 101)).toBe("over");
    expect(hitTest(markers, 90, 100)).toBe("under");
    expect(hitTest(markers, 300, 300)).toBeNull();
  });

  it("marker radius shrinks with height", () => {
    const near = markerRadius(0.05, BOUNDS);
    const far = markerRadius(0.55, BOUNDS);
    expect(near).toBeGreaterThan(far);
    expect(far).toBeGreaterThan(0);
  });
});
