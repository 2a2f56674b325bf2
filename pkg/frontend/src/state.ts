// Operator-console state machine, kept free of DOM so it is unit-testable.
//
// Click -> CoverageRequest -> (done|failed|superseded) result -> overlay,
// mirroring the service's latest-wins supersession: the newest click is the
// job whose map the console ends up displaying.

import { buildOverlay, decodeBase64, MapFormatError, Overlay, parseMapDocument } from './mapdoc.js';
import { Pixel, ViewTransform, WorldPoint } from './transform.js';
import {
  ConsoleConfig,
  CoverageRequestWire,
  CoverageResultWire,
  SensorReadingWire,
  TOPIC_REQUEST,
} from './types.js';

export interface Bus {
  readonly connected: boolean;
  publish(topic: string, payload: string): void;
}

export interface SensorRow {
  sensorId: string;
  kind: string;
  value: number | string;
  unit: string;
  tsMs: number;
}

export interface UiState {
  pendingJobs: string[];          // submission order, oldest first
  displayedJobId: string | null;
  overlay: Overlay | null;
  tower: WorldPoint | null;       // tx of the most recent accepted request
  sensors: Map<string, SensorRow>;
  banner: string | null;
  staleSensorDrops: number;
}

export class OperatorConsole {
  readonly state: UiState = {
    pendingJobs: [],
    displayedJobId: null,
    overlay: null,
    tower: null,
    sensors: new Map(),
    banner: null,
    staleSensorDrops: 0,
  };

  private counter = 0;
  private listeners: (() => void)[] = [];

  constructor(
    private readonly bus: Bus,
    private readonly config: ConsoleConfig,
    public view: ViewTransform,
    private readonly now: () => number = Date.now,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private changed(): void {
    for (const l of this.listeners) l();
  }

  /** Click handler: convert the pixel to world meters and publish a request. */
  onMapClick(pixel: Pixel): CoverageRequestWire | null {
    if (!this.bus.connected) {
      this.state.banner = 'not connected to the broker; click ignored';
      this.changed();
      return null;
    }
    const world = this.view.pixelToWorld(pixel);
    const jobId = `ui-${this.now()}-${++this.counter}`;
    const request: CoverageRequestWire = {
      job_id: jobId,
      tx: {
        x: world.x,
        y: world.y,
        z: this.config.tower_height,
        frequency_hz: this.config.frequency_hz,
        antenna: this.config.antenna,
        boresight: this.config.boresight,
      },
      grid: this.config.grid,
      trace: this.config.trace,
      scene: this.config.scene,
    };
    this.bus.publish(TOPIC_REQUEST, JSON.stringify(request));
    this.state.pendingJobs.push(jobId);
    this.state.tower = world;
    this.state.banner = null;
    this.changed();
    return request;
  }

  /** Result handler for dt/coverage/result/#. */
  applyResult(result: CoverageResultWire): void {
    const pending = this.state.pendingJobs.indexOf(result.job_id);
    if (result.status === 'done') {
      if (result.map_b64 === undefined) return;
      let overlay: Overlay;
      try {
        overlay = buildOverlay(parseMapDocument(decodeBase64(result.map_b64)));
      } catch (err) {
        if (err instanceof MapFormatError || err instanceof Error) {
          this.state.banner = `bad map payload for ${result.job_id}: ${err.message}`;
          this.changed();
          return; // previous overlay stays
        }
        throw err;
      }
      this.state.overlay = overlay;
      this.state.displayedJobId = result.job_id;
      if (pending >= 0) this.state.pendingJobs.splice(0, pending + 1);
      this.state.banner = null;
    } else if (result.status === 'failed') {
      if (pending >= 0) this.state.pendingJobs.splice(pending, 1);
      this.state.banner = `job ${result.job_id} failed: ${result.error ?? 'unknown error'}`;
    } else {
      // superseded: silently dropped unless it was the only pending job
      if (pending >= 0) this.state.pendingJobs.splice(pending, 1);
      if (this.state.pendingJobs.length === 0 && this.state.displayedJobId === null) {
        this.state.banner = `job ${result.job_id} superseded`;
      }
    }
    this.changed();
  }

  /** Sensor handler for dt/sensors/#: retained last value per sensor id. */
  applySensor(reading: SensorReadingWire): void {
    const held = this.state.sensors.get(reading.sensor_id);
    if (held !== undefined && reading.ts_ms < held.tsMs) {
      this.state.staleSensorDrops += 1;
      return;
    }
    this.state.sensors.set(reading.sensor_id, {
      sensorId: reading.sensor_id,
      kind: reading.kind,
      value: reading.value,
      unit: reading.unit,
      tsMs: reading.ts_ms,
    });
    this.changed();
  }

  connectionLost(): void {
    this.state.banner = 'connection to broker lost; reconnecting';
    this.changed();
  }

  connectionRestored(): void {
    if (this.state.banner?.startsWith('connection')) this.state.banner = null;
    this.changed();
  }
}

export function parseResultPayload(payload: string): CoverageResultWire {
  const doc = JSON.parse(payload);
  if (typeof doc?.job_id !== 'string' || typeof doc?.status !== 'string') {
    throw new Error('payload is not a CoverageResult');
  }
  return doc as CoverageResultWire;
}

export function parseSensorPayload(payload: string): SensorReadingWire {
  const doc = JSON.parse(payload);
  if (typeof doc?.sensor_id !== 'string' || typeof doc?.ts_ms !== 'number') {
    throw new Error('payload is not a SensorReading');
  }
  return doc as SensorReadingWire;
}
