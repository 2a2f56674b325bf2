import { describe, expect, it } from 'vitest';

import { ViewTransform } from '../src/transform.js';

describe('ViewTransform', () => {
  it('identity-like transform maps pixels to meters directly', () => {
    const vt = new ViewTransform(1, 0, 0);
    expect(vt.pixelToWorld({ u: 10, v: 20 })).toEqual({ x: 10, y: -20 });
  });

  it('scale 2 px/m halves pixel coordinates', () => {
    const vt = new ViewTransform(2, 0, 0);
    const w = vt.pixelToWorld({ u: 10, v: 20 });
    expect(w.x).toBeCloseTo(5, 9);
    expect(w.y).toBeCloseTo(-10, 9);
  });

  it('round trips world -> pixel -> world within 1e-6 m', () => {
    const vt = new ViewTransform(3.7, -120.5, 88.25);
    for (const w of [{ x: 0, y: 0 }, { x: -55.3, y: 41.9 }, { x: 200.01, y: -3.5 }]) {
      const back = vt.pixelToWorld(vt.worldToPixel(w));
      expect(Math.abs(back.x - w.x)).toBeLessThan(1e-6);
      expect(Math.abs(back.y - w.y)).toBeLessThan(1e-6);
    }
  });

  it('round trips pixel -> world -> pixel within 0.5 px', () => {
    const vt = ViewTransform.fit([-200, -200, 200, 200], 900, 900);
    for (const p of [{ u: 0, v: 0 }, { u: 450, v: 450 }, { u: 899, v: 1 }]) {
      const back = vt.worldToPixel(vt.pixelToWorld(p));
      expect(Math.abs(back.u - p.u)).toBeLessThan(0.5);
      expect(Math.abs(back.v - p.v)).toBeLessThan(0.5);
    }
  });

  it('rejects non-positive scale', () => {
    expect(() => new ViewTransform(0, 0, 0)).toThrow();
  });

  it('fit() shows the whole extent', () => {
    const vt = ViewTransform.fit([-100, -50, 100, 50], 800, 800);
    expect(vt.worldToPixel({ x: -100, y: 50 })).toEqual({ u: 0, v: 0 });
    const corner = vt.worldToPixel({ x: 100, y: -50 });
    expect(corner.u).toBeLessThanOrEqual(800);
    expect(corner.v).toBeLessThanOrEqual(800);
  });

  it('pan keeps the world point under the cursor fixed', () => {
    const vt = new ViewTransform(2, -10, 30);
    const panned = vt.panBy(15, -8);
    const before = vt.pixelToWorld({ u: 100, v: 100 });
    const after = panned.pixelToWorld({ u: 115, v: 92 });
    expect(after.x).toBeCloseTo(before.x, 9);
    expect(after.y).toBeCloseTo(before.y, 9);
  });

  it('zoomAt keeps the anchor pixel on the same world point', () => {
    const vt = new ViewTransform(2, -10, 30);
    const anchor = { u: 120, v: 44 };
    const world = vt.pixelToWorld(anchor);
    const zoomed = vt.zoomAt(anchor, 1.5);
    const after = zoomed.pixelToWorld(anchor);
    expect(after.x).toBeCloseTo(world.x, 9);
    expect(after.y).toBeCloseTo(world.y, 9);
  });
});
