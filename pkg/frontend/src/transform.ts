// Affine map between screen pixels and world meters. Screen y grows
// downward, world y grows northward, so the y axis flips.

export interface Pixel {
  u: number;
  v: number;
}

export interface WorldPoint {
  x: number;
  y: number;
}

export class ViewTransform {
  /**
   * @param scale pixels per meter (> 0)
   * @param originX world x at pixel u=0 (after pan)
   * @param originY world y at pixel v=0 (top edge; world y decreases downward)
   */
  constructor(
    public scale: number,
    public originX: number,
    public originY: number,
  ) {
    if (!(scale > 0)) throw new Error(`scale must be > 0, got ${scale}`);
  }

  pixelToWorld(p: Pixel): WorldPoint {
    return {
      x: this.originX + p.u / this.scale,
      y: this.originY - p.v / this.scale,
    };
  }

  worldToPixel(w: WorldPoint): Pixel {
    return {
      u: (w.x - this.originX) * this.scale,
      v: (this.originY - w.y) * this.scale,
    };
  }

  panBy(du: number, dv: number): ViewTransform {
    return new ViewTransform(
      this.scale,
      this.originX - du / this.scale,
      this.originY + dv / this.scale,
    );
  }

  zoomAt(p: Pixel, factor: number): ViewTransform {
    const anchor = this.pixelToWorld(p);
    const scale = this.scale * factor;
    return new ViewTransform(scale, anchor.x - p.u / scale, anchor.y + p.v / scale);
  }

  /** Transform that shows world extent [x0,x1]x[y0,y1] in a w x h viewport. */
  static fit(extent: [number, number, number, number], width: number, height: number): ViewTransform {
    const [x0, y0, x1, y1] = extent;
    const scale = Math.min(width / (x1 - x0), height / (y1 - y0));
    return new ViewTransform(scale, x0, y1);
  }
}
