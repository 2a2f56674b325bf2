// Browser entry point: binds the operator console to the DOM.
//
// Layers, bottom to top: site map image, coverage overlay (nearest-neighbor
// upscaled so cell edges stay crisp), tower marker (yellow circle). Click
// anywhere on the map to publish a new transmitter placement.

import { OperatorConsole, parseResultPayload, parseSensorPayload } from './state.js';
import { ViewTransform } from './transform.js';
import { ConsoleConfig, TOPIC_RESULTS, TOPIC_SENSORS } from './types.js';
import { WsMqttClient } from './wsmqtt.js';

async function boot(): Promise<void> {
  const response = await fetch('console.json');
  if (!response.ok) throw new Error(`cannot load console.json: ${response.status}`);
  const config = (await response.json()) as ConsoleConfig;

  const canvas = document.getElementById('map') as HTMLCanvasElement;
  const banner = document.getElementById('banner') as HTMLDivElement;
  const status = document.getElementById('status') as HTMLSpanElement;
  const sensorTable = document.getElementById('sensors') as HTMLTableSectionElement;
  const ctx = canvas.getContext('2d')!;
  ctx.imageSmoothingEnabled = false;

  const site = new Image();
  site.src = config.site_image;

  const view = ViewTransform.fit(config.world_extent, canvas.width, canvas.height);
  const client = new WsMqttClient(config.broker_ws_url, {
    clientId: `console-${Math.floor(Math.random() * 1e9)}`,
    onStatus: (up) => {
      status.textContent = up ? 'connected' : 'reconnecting';
      status.className = up ? 'ok' : 'down';
      if (up) ui.connectionRestored();
      else ui.connectionLost();
    },
  });
  const ui = new OperatorConsole(client, config, view);

  client.subscribe(TOPIC_RESULTS, (_topic, payload) => {
    try {
      ui.applyResult(parseResultPayload(payload));
    } catch (err) {
      console.warn('bad result payload', err);
    }
  });
  client.subscribe(TOPIC_SENSORS, (_topic, payload) => {
    try {
      ui.applySensor(parseSensorPayload(payload));
    } catch (err) {
      console.warn('bad sensor payload', err);
    }
  });
  client.open();

  canvas.addEventListener('click', (event) => {
    const rect = canvas.getBoundingClientRect();
    ui.onMapClick({ u: event.clientX - rect.left, v: event.clientY - rect.top });
  });

  let overlayCanvas: HTMLCanvasElement | null = null;
  let overlayFor: unknown = null;

  function render(): void {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (site.complete && site.naturalWidth) {
      const [x0, y0, x1, y1] = config.world_extent;
      const topLeft = view.worldToPixel({ x: x0, y: y1 });
      const bottomRight = view.worldToPixel({ x: x1, y: y0 });
      ctx.drawImage(site, topLeft.u, topLeft.v, bottomRight.u - topLeft.u, bottomRight.v - topLeft.v);
    }
    const overlay = ui.state.overlay;
    if (overlay) {
      if (overlayFor !== overlay) {
        overlayCanvas = document.createElement('canvas');
        overlayCanvas.width = overlay.width;
        overlayCanvas.height = overlay.height;
        overlayCanvas
          .getContext('2d')!
          .putImageData(
            new ImageData(new Uint8ClampedArray(overlay.rgba), overlay.width, overlay.height),
            0,
            0,
          );
        overlayFor = overlay;
      }
      const g = overlay.grid;
      const topLeft = view.worldToPixel({ x: g.x0, y: g.y0 + g.nJ * g.cellSize });
      const bottomRight = view.worldToPixel({ x: g.x0 + g.nI * g.cellSize, y: g.y0 });
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(
        overlayCanvas!,
        topLeft.u,
        topLeft.v,
        bottomRight.u - topLeft.u,
        bottomRight.v - topLeft.v,
      );
    }
    if (ui.state.tower) {
      const p = view.worldToPixel(ui.state.tower);
      ctx.beginPath();
      ctx.arc(p.u, p.v, 7, 0, 2 * Math.PI);
      ctx.fillStyle = '#ffe24a';
      ctx.strokeStyle = '#00000088';
      ctx.fill();
      ctx.stroke();
    }
    banner.textContent = ui.state.banner ?? '';
    banner.style.display = ui.state.banner ? 'block' : 'none';

    sensorTable.replaceChildren(
      ...[...ui.state.sensors.values()]
        .sort((a, b) => a.sensorId.localeCompare(b.sensorId))
        .map((row) => {
          const tr = document.createElement('tr');
          for (const cell of [row.sensorId, row.kind, `${row.value} ${row.unit}`.trim(),
                              new Date(row.tsMs).toLocaleTimeString()]) {
            const td = document.createElement('td');
            td.textContent = String(cell);
            tr.appendChild(td);
          }
          return tr;
        }),
    );
  }

  let scheduled = false;
  ui.onChange(() => {
    if (scheduled) return;
    scheduled = true;
    requestAnimationFrame(() => {
      scheduled = false;
      render();
    });
  });
  site.onload = render;
  render();
}

boot().catch((err) => {
  const banner = document.getElementById('banner');
  if (banner) {
    banner.textContent = String(err);
    (banner as HTMLDivElement).style.display = 'block';
  }
  console.error(err);
});
