// Parser for raycover-map v1 documents (the base64 payload of a done
// CoverageResult) and the RGBA overlay builder.

import { PALETTE, dbToIndex } from './palette.js';

export interface MapGrid {
  x0: number;
  y0: number;
  cellSize: number;
  nI: number;
  nJ: number;
  height: number;
}

export interface CoverageMapDoc {
  grid: MapGrid;
  /** linear path gain, row-major [i][j] flattened as i * nJ + j */
  gain: Float64Array;
  hits: Int32Array;
}

export class MapFormatError extends Error {}

export function parseMapDocument(text: string): CoverageMapDoc {
  const lines = text.split('\n');
  if (lines.length < 3 || lines[0].trim() !== '# raycover-map v1') {
    throw new MapFormatError("missing 'raycover-map v1' header line");
  }
  let header: any;
  try {
    header = JSON.parse(lines[1]);
  } catch (err) {
    throw new MapFormatError(`bad map header: ${err}`);
  }
  const g = header?.grid;
  if (!g || typeof g.n_i !== 'number' || typeof g.n_j !== 'number') {
    throw new MapFormatError('bad map header: missing grid dims');
  }
  const grid: MapGrid = {
    x0: Number(g.x0),
    y0: Number(g.y0),
    cellSize: Number(g.cell_size),
    nI: g.n_i | 0,
    nJ: g.n_j | 0,
    height: Number(g.height),
  };
  if (lines[2].trim() !== 'gain') throw new MapFormatError("expected 'gain' section");
  if (lines.length < 3 + 2 * grid.nI + 1) throw new MapFormatError('truncated document');

  const gain = new Float64Array(grid.nI * grid.nJ);
  const hits = new Int32Array(grid.nI * grid.nJ);
  for (let i = 0; i < grid.nI; i++) {
    fillRow(gain, lines[3 + i], i, grid.nJ, 'gain');
  }
  if (lines[3 + grid.nI].trim() !== 'hits') throw new MapFormatError("expected 'hits' section");
  for (let i = 0; i < grid.nI; i++) {
    fillRow(hits, lines[4 + grid.nI + i], i, grid.nJ, 'hits');
  }
  return { grid, gain, hits };
}

function fillRow(
  out: Float64Array | Int32Array,
  line: string | undefined,
  i: number,
  nJ: number,
  section: string,
): void {
  if (line === undefined) throw new MapFormatError(`truncated ${section} section`);
  const parts = line.trim().split(/\s+/);
  if (parts.length !== nJ) {
    throw new MapFormatError(`${section} row ${i} has ${parts.length} values, expected ${nJ}`);
  }
  for (let j = 0; j < nJ; j++) {
    const v = Number(parts[j]);
    if (Number.isNaN(v)) throw new MapFormatError(`bad ${section} value at (${i}, ${j})`);
    out[i * nJ + j] = v;
  }
}

export interface Overlay {
  width: number;   // nI cells (x)
  height: number;  // nJ cells (y)
  grid: MapGrid;
  /** RGBA, one pixel per cell, row 0 at max y (north up) */
  rgba: Uint8ClampedArray;
}

/** One-pixel-per-cell RGBA overlay; no-data cells are transparent so the
 * site map shows through (the standalone renderer paints them black). */
export function buildOverlay(
  doc: CoverageMapDoc,
  dbLo = -140,
  dbHi = -40,
  alpha = 200,
): Overlay {
  const { nI, nJ } = doc.grid;
  const rgba = new Uint8ClampedArray(nI * nJ * 4);
  for (let row = 0; row < nJ; row++) {
    const j = nJ - 1 - row; // image rows run north -> south
    for (let i = 0; i < nI; i++) {
      const gain = doc.gain[i * nJ + j];
      const at = (row * nI + i) * 4;
      if (gain > 0 && doc.hits[i * nJ + j] > 0) {
        const idx = dbToIndex(10 * Math.log10(gain), dbLo, dbHi);
        rgba[at] = PALETTE[idx * 3];
        rgba[at + 1] = PALETTE[idx * 3 + 1];
        rgba[at + 2] = PALETTE[idx * 3 + 2];
        rgba[at + 3] = alpha;
      }
      // else: leave fully transparent
    }
  }
  return { width: nI, height: nJ, grid: doc.grid, rgba };
}

export function decodeBase64(b64: string): string {
  if (typeof atob === 'function') {
    const bin = atob(b64);
    const bytes = new Uint8Array(bin.length);
    for (let k = 0; k < bin.length; k++) bytes[k] = bin.charCodeAt(k);
    return new TextDecoder().decode(bytes);
  }
  // node (tests)
  return Buffer.from(b64, 'base64').toString('utf-8');
}
