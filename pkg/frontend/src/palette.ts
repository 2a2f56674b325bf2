// Purple->yellow perceptual palette, 32 anchors interpolated to 256 RGB
// entries (matches the service-side heatmap renderer).

const ANCHORS: [number, number, number][] = [
  [68, 1, 84], [71, 13, 96], [72, 24, 106], [72, 35, 116], [71, 46, 124],
  [69, 56, 130], [66, 65, 134], [62, 74, 137], [58, 84, 140], [54, 93, 141],
  [50, 101, 142], [46, 109, 142], [43, 117, 142], [40, 125, 142],
  [37, 132, 142], [34, 140, 141], [31, 148, 140], [30, 156, 137],
  [32, 163, 134], [37, 171, 130], [46, 179, 124], [58, 186, 118],
  [72, 193, 110], [88, 199, 101], [108, 205, 90], [127, 211, 78],
  [147, 215, 65], [168, 219, 52], [192, 223, 37], [213, 226, 26],
  [234, 229, 26], [253, 231, 37],
];

export const PALETTE: Uint8Array = buildPalette();

function buildPalette(): Uint8Array {
  const out = new Uint8Array(256 * 3);
  for (let k = 0; k < 256; k++) {
    const t = (k / 255) * (ANCHORS.length - 1);
    const lo = Math.floor(t);
    const hi = Math.min(lo + 1, ANCHORS.length - 1);
    const f = t - lo;
    for (let c = 0; c < 3; c++) {
      out[k * 3 + c] = Math.round(ANCHORS[lo][c] * (1 - f) + ANCHORS[hi][c] * f);
    }
  }
  return out;
}

/** Palette index for a dB value clamped into [lo, hi]. */
export function dbToIndex(db: number, lo: number, hi: number): number {
  const clamped = Math.min(hi, Math.max(lo, db));
  return Math.round(((clamped - lo) / (hi - lo)) * 255);
}
