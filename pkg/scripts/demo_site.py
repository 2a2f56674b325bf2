#!/usr/bin/env python3
"""End-to-end offline demo: synthesize a box-town site, run a coverage
simulation, and render the heatmap.

    python scripts/demo_site.py --out demo_out [--rays 1000000] [--depth 3]

Writes scene.obj, site.mat, config.json, coverage.map and coverage.png into
the output directory, then prints per-cell hit statistics.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from raycover import cli  # noqa: E402


def town(n_boxes: int, seed: int, half: float) -> str:
    rng = np.random.default_rng(seed)
    lines = ["# raycover-scene v1", "usemtl concrete"]
    verts, faces = [], []

    def box(cx, cy, w, d, h):
        base = len(verts)
        x0, x1, y0, y1 = cx - w / 2, cx + w / 2, cy - d / 2, cy + d / 2
        verts.extend(
            [(x0, y0, 0.0), (x1, y0, 0.0), (x1, y1, 0.0), (x0, y1, 0.0),
             (x0, y0, h), (x1, y0, h), (x1, y1, h), (x0, y1, h)]
        )
        for quad in ((0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7), (4, 5, 6, 7), (3, 2, 1, 0)):
            faces.append(tuple(base + k for k in quad))

    for _ in range(n_boxes):
        box(
            float(rng.uniform(-half + 15, half - 15)),
            float(rng.uniform(-half + 15, half - 15)),
            float(rng.uniform(5, 20)),
            float(rng.uniform(5, 20)),
            float(rng.uniform(4, 22)),
        )
    ground = len(verts)
    verts.extend(
        [(-half, -half, 0.0), (half, -half, 0.0), (half, half, 0.0), (-half, half, 0.0)]
    )
    for v in verts[:ground]:
        lines.append("v %r %r %r" % v)
    for f in faces:
        lines.append("f " + " ".join(str(k + 1) for k in f))
    lines.append("usemtl ground")
    for v in verts[ground:]:
        lines.append("v %r %r %r" % v)
    lines.append(f"f {ground + 1} {ground + 2} {ground + 3} {ground + 4}")
    return "\n".join(lines) + "\n"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo_out")
    parser.add_argument("--rays", type=int, default=1_000_000)
    parser.add_argument("--depth", type=int, default=3)
    parser.add_argument("--boxes", type=int, default=400)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scene.obj").write_text(town(args.boxes, args.seed, half=200.0))
    (out / "site.mat").write_text("# raycover-scene v1\nconcrete 0.6\nground 0.3\n")
    config = {
        "scene": {"path": str(out / "scene.obj"), "materials": str(out / "site.mat")},
        "tx": {
            "x": 0.0, "y": 0.0, "z": 25.0, "frequency_hz": 2.4e9,
            "antenna": {"kind": "directional", "exponent": 2.0},
            "boresight": {"x": 0.0, "y": 1.0, "z": 0.0},
        },
        "grid": {"x0": -200.0, "y0": -200.0, "x1": 200.0, "y1": 200.0, "cell_size": 1.0, "height": 1.5},
        "trace": {"rays": args.rays, "max_depth": args.depth, "seed": args.seed},
        "output": {
            "map": str(out / "coverage.map"),
            "heatmap": str(out / "coverage.png"),
            "palette": "viridis",
            "db_range": [-140, -40],
        },
    }
    (out / "config.json").write_text(json.dumps(config, indent=2))
    return cli.main(["run", "--config", str(out / "config.json")])


if __name__ == "__main__":
    sys.exit(main())
