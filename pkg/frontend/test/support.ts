// Shared builders for frontend tests.

import { GridWire, ConsoleConfig } from '../src/types.js';
import { Bus } from '../src/state.js';

export function makeMapDocument(
  grid: { x0: number; y0: number; cellSize: number; nI: number; nJ: number; height?: number },
  gainOf: (i: number, j: number) => number = () => 1e-7,
): string {
  const header = {
    grid: {
      x0: grid.x0,
      y0: grid.y0,
      cell_size: grid.cellSize,
      n_i: grid.nI,
      n_j: grid.nJ,
      height: grid.height ?? 1.5,
    },
    meta: { seed: 0, rays: 1000, max_depth: 1, tx: {} },
  };
  const lines = ['# raycover-map v1', JSON.stringify(header), 'gain'];
  for (let i = 0; i < grid.nI; i++) {
    const row: string[] = [];
    for (let j = 0; j < grid.nJ; j++) row.push(gainOf(i, j).toExponential(10));
    lines.push(row.join(' '));
  }
  lines.push('hits');
  for (let i = 0; i < grid.nI; i++) {
    lines.push(Array.from({ length: grid.nJ }, () => '5').join(' '));
  }
  return lines.join('\n') + '\n';
}

export function toBase64(text: string): string {
  return Buffer.from(text, 'utf-8').toString('base64');
}

export class FakeBus implements Bus {
  connected = true;
  published: { topic: string; payload: string }[] = [];

  publish(topic: string, payload: string): void {
    if (!this.connected) throw new Error('not connected');
    this.published.push({ topic, payload });
  }

  lastRequest(): any {
    return JSON.parse(this.published[this.published.length - 1].payload);
  }
}

export const GRID: GridWire = {
  x0: -50, y0: -50, x1: 50, y1: 50, cell_size: 1.0, height: 1.5,
};

export function makeConfig(): ConsoleConfig {
  return {
    broker_ws_url: 'ws://localhost:9001',
    site_image: 'site.png',
    world_extent: [-50, -50, 50, 50],
    tower_height: 20,
    frequency_hz: 2.4e9,
    antenna: { kind: 'directional', exponent: 2 },
    boresight: { x: 0, y: 1, z: 0 },
    grid: GRID,
    trace: { rays: 1_000_000, max_depth: 3, min_amplitude: 0, seed: 1 },
    scene: { ref: { uri: 'site.obj', sha256: 'f'.repeat(64) } },
  };
}
