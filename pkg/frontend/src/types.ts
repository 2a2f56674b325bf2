// Wire-schema types shared with the coverage service (JSON field names are
// the contract; see docs/formats.md in the repository root).

export interface AntennaWire {
  kind: 'isotropic' | 'directional';
  exponent: number;
}

export interface TxWire {
  x: number;
  y: number;
  z: number;
  frequency_hz: number;
  antenna: AntennaWire;
  boresight: { x: number; y: number; z: number };
}

export interface GridWire {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  cell_size: number;
  height: number;
}

export interface TraceWire {
  rays: number;
  max_depth: number;
  min_amplitude: number;
  seed: number;
}

export interface CoverageRequestWire {
  job_id: string;
  tx: TxWire;
  grid: GridWire;
  trace: TraceWire;
  scene: { inline_b64: string } | { ref: { uri: string; sha256: string } };
}

export type ResultStatus = 'done' | 'failed' | 'superseded';

export interface CoverageResultWire {
  job_id: string;
  status: ResultStatus;
  duration_s: number;
  map_b64?: string;
  error?: string;
}

export interface SensorReadingWire {
  sensor_id: string;
  kind: 'temperature' | 'weather' | 'custom';
  value: number | string;
  unit: string;
  ts_ms: number;
}

export const TOPIC_REQUEST = 'dt/coverage/request';
export const TOPIC_RESULTS = 'dt/coverage/result/#';
export const TOPIC_SENSORS = 'dt/sensors/#';

// Bootstrap document the static page loads (console.json next to index.html).
export interface ConsoleConfig {
  broker_ws_url: string;
  site_image: string;           // background map image url
  world_extent: [number, number, number, number]; // x0, y0, x1, y1 of that image (m)
  tower_height: number;         // z for click-placed transmitters (m)
  frequency_hz: number;
  antenna: AntennaWire;
  boresight: { x: number; y: number; z: number };
  grid: GridWire;               // grid template for requests
  trace: TraceWire;             // trace defaults for requests
  scene: { ref: { uri: string; sha256: string } } | { inline_b64: string };
}
