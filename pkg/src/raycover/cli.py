"""Command-line entry points: run a simulation, render a map, serve the bus.

One JSON config document drives both ``run`` and ``serve``; sections a
command does not need are ignored. The tx/grid/trace sections use exactly the
wire-schema field names, so a config file is also a valid request template.

Exit codes: 0 success, 1 internal failure, 2 config validation (the message
names the offending field), 3 scene/map parse error, 4 broker unreachable.
Every error path prints one line to stderr of the form ``error: <category>: <detail>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path

import numpy as np

from . import bus, mqtt_wire
from .accel import build_index
from .coverage import DEFAULT_DB_RANGE, render_heatmap, simulate_coverage, to_db
from .mapio import MapFormatError, load_map, save_heatmap, save_map
from .scene import SceneParseError, load_scene
from .service import CoverageService

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_BROKER = 4


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _fail(category: str, detail: str, code: int) -> int:
    print(f"error: {category}: {detail}", file=sys.stderr)
    return code


def _section(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ConfigError(name, "missing section")
    if not isinstance(doc[name], dict):
        raise ConfigError(name, "must be an object")
    return doc[name]


def _number(section: dict, section_name: str, key: str, default=None) -> float:
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"{section_name}.{key}", "missing field")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section_name}.{key}", "must be a number")
    return float(value)


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"unreadable: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"bad JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be an object")
    return doc


def parse_tx(doc: dict) -> bus.TxParams:
    tx = _section(doc, "tx")
    antenna = tx.get("antenna", {"kind": "isotropic", "exponent": 0.0})
    if not isinstance(antenna, dict):
        raise ConfigError("tx.antenna", "must be an object")
    boresight = tx.get("boresight", {"x": 0.0, "y": 0.0, "z": 1.0})
    if not isinstance(boresight, dict):
        raise ConfigError("tx.boresight", "must be an object")
    kind = antenna.get("kind", "isotropic")
    if kind not in ("isotropic", "directional"):
        raise ConfigError("tx.antenna.kind", f"unknown kind {kind!r}")
    params = bus.TxParams(
        x=_number(tx, "tx", "x"),
        y=_number(tx, "tx", "y"),
        z=_number(tx, "tx", "z"),
        frequency_hz=_number(tx, "tx", "frequency_hz"),
        antenna_kind=kind,
        antenna_exponent=_number(antenna, "tx.antenna", "exponent", 0.0),
        boresight=(
            _number(boresight, "tx.boresight", "x", 0.0),
            _number(boresight, "tx.boresight", "y", 0.0),
            _number(boresight, "tx.boresight", "z", 1.0),
        ),
    )
    try:
        params.validate()
    except bus.ValidationError as exc:
        raise ConfigError("tx", str(exc)) from exc
    return params


def parse_grid(doc: dict) -> bus.GridParams:
    grid = _section(doc, "grid")
    params = bus.GridParams(
        x0=_number(grid, "grid", "x0"),
        y0=_number(grid, "grid", "y0"),
        x1=_number(grid, "grid", "x1"),
        y1=_number(grid, "grid", "y1"),
        cell_size=_number(grid, "grid", "cell_size"),
        height=_number(grid, "grid", "height", 1.5),
    )
    try:
        params.validate()
    except bus.ValidationError as exc:
        raise ConfigError("grid", str(exc)) from exc
    return params


def parse_trace(doc: dict) -> bus.TraceParams:
    trace = _section(doc, "trace")
    params = bus.TraceParams(
        rays=int(_number(trace, "trace", "rays")),
        max_depth=int(_number(trace, "trace", "max_depth", 3)),
        min_amplitude=_number(trace, "trace", "min_amplitude", 0.0),
        seed=int(_number(trace, "trace", "seed", 0)),
    )
    try:
        params.validate()
    except bus.ValidationError as exc:
        raise ConfigError("trace", str(exc)) from exc
    return params


def cmd_run(config_path: str, workers: int | None = None) -> int:
    try:
        doc = load_config(config_path)
        scene_section = _section(doc, "scene")
        scene_path = scene_section.get("path")
        if not isinstance(scene_path, str):
            raise ConfigError("scene.path", "missing field")
        materials_path = scene_section.get("materials")
        tx = parse_tx(doc)
        grid_params = parse_grid(doc)
        trace = parse_trace(doc)
        output = _section(doc, "output")
        map_path = output.get("map")
        if not isinstance(map_path, str):
            raise ConfigError("output.map", "missing field")
        heatmap_path = output.get("heatmap")
        palette = output.get("palette", "viridis")
        db_range = tuple(output.get("db_range", DEFAULT_DB_RANGE))
        if len(db_range) != 2 or db_range[0] >= db_range[1]:
            raise ConfigError("output.db_range", "must be [lo, hi] with lo < hi")
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)

    try:
        scene = load_scene(
            Path(scene_path), Path(materials_path) if materials_path else None
        )
    except FileNotFoundError as exc:
        return _fail("scene", f"cannot read {exc.filename}", EXIT_PARSE)
    except SceneParseError as exc:
        return _fail("scene", str(exc), EXIT_PARSE)

    try:
        cmap = simulate_coverage(
            scene, tx.to_transmitter(), grid_params.to_grid(), trace.to_config(),
            workers=workers,
        )
        save_map(cmap, map_path)
        if heatmap_path:
            save_heatmap(render_heatmap(cmap, palette, db_range), heatmap_path)
    except Exception as exc:
        log.exception("simulation failed")
        return _fail("internal", str(exc), EXIT_INTERNAL)

    hits = cmap.hits
    print(
        "run: duration_s={:.3f} cells={} cells_hit={} hit_fraction={:.3f} "
        "hits_total={} hits_min={} hits_median={} hits_max={}".format(
            cmap.meta.duration_s or 0.0,
            hits.size,
            int((hits > 0).sum()),
            float((hits > 0).mean()),
            int(hits.sum()),
            int(hits.min()),
            int(np.median(hits)),
            int(hits.max()),
        )
    )
    print(f"run: map written to {map_path}")
    if heatmap_path:
        print(f"run: heatmap written to {heatmap_path}")
    return EXIT_OK


def cmd_render(map_path: str, out_path: str, palette: str, db_range_s: str) -> int:
    try:
        parts = db_range_s.split(",")
        if len(parts) != 2:
            raise ValueError("expected 'lo,hi'")
        lo, hi = float(parts[0]), float(parts[1])
        if lo >= hi:
            raise ValueError(f"lo {lo} must be < hi {hi}")
    except ValueError as exc:
        return _fail("range", str(exc), EXIT_CONFIG)

    try:
        cmap = load_map(map_path)
    except FileNotFoundError as exc:
        return _fail("map", f"cannot read {exc.filename}", EXIT_PARSE)
    except MapFormatError as exc:
        return _fail("map", str(exc), EXIT_PARSE)

    try:
        heatmap = render_heatmap(cmap, palette, (lo, hi))
    except ValueError as exc:
        return _fail("range", str(exc), EXIT_CONFIG)
    try:
        save_heatmap(heatmap, out_path)
    except Exception as exc:
        return _fail("internal", str(exc), EXIT_INTERNAL)
    db = to_db(cmap)
    finite = db[~np.isnan(db)]
    span = (
        f"db_min={finite.min():.2f} db_max={finite.max():.2f}" if finite.size else "all no-data"
    )
    print(f"render: wrote {out_path} ({cmap.grid.n_i}x{cmap.grid.n_j} cells, {span})")
    return EXIT_OK


def cmd_serve(config_path: str, stop_event: threading.Event | None = None) -> int:
    try:
        doc = load_config(config_path)
        broker = _section(doc, "broker")
        host = broker.get("host")
        if not isinstance(host, str):
            raise ConfigError("broker.host", "missing field")
        port = int(_number(broker, "broker", "port", 1883))
        client_id = broker.get("client_id", "raycover-service")
        username = broker.get("username")
        password = broker.get("password")
        credentials = (username, password) if username is not None else None
        svc_section = doc.get("service", {})
        if not isinstance(svc_section, dict):
            raise ConfigError("service", "must be an object")
        audit_path = svc_section.get("audit_log")
        scene_root = svc_section.get("scene_root")
        workers = svc_section.get("workers")
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)

    try:
        session = mqtt_wire.connect(host, port, client_id, credentials)
    except bus.CredentialError as exc:
        return _fail("broker", f"credentials rejected: {exc}", EXIT_BROKER)
    except bus.BrokerConnectionError as exc:
        return _fail("broker", str(exc), EXIT_BROKER)

    service = CoverageService(
        session, workers=workers, audit_log_path=audit_path, scene_root=scene_root
    )
    service.start()
    print(f"serve: connected to {host}:{port} as {client_id}")

    stop = stop_event or threading.Event()

    def _on_signal(signum, frame):
        log.info("received signal %d, shutting down", signum)
        stop.set()

    if stop_event is None:
        signal.signal(signal.SIGTERM, _on_signal)
        signal.signal(signal.SIGINT, _on_signal)

    while not stop.is_set():
        time.sleep(0.2)
    service.stop()
    session.close()
    print("serve: clean shutdown")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raycover",
        description="Monte Carlo ray-traced radio coverage maps and twin-bus service",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a coverage simulation from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--workers", type=int, default=None)

    p_render = sub.add_parser("render", help="render a stored coverage map to an image")
    p_render.add_argument("--map", required=True)
    p_render.add_argument("--out", required=True)
    p_render.add_argument("--palette", default="viridis")
    p_render.add_argument(
        "--range", default=f"{DEFAULT_DB_RANGE[0]},{DEFAULT_DB_RANGE[1]}",
        help="dB display range 'lo,hi'",
    )

    p_serve = sub.add_parser("serve", help="run the bus-connected coverage service")
    p_serve.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "run":
        return cmd_run(args.config, args.workers)
    if args.command == "render":
        return cmd_render(args.map, args.out, args.palette, args.range)
    if args.command == "serve":
        return cmd_serve(args.config)
    return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
