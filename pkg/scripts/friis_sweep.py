#!/usr/bin/env python3
"""Free-space estimator check: per-ring error against closed-form Friis.

    python scripts/friis_sweep.py [--rays 4000000] [--height 12]

Prints one line per 1 m radial ring: cell count, mean hits, mean and max
absolute dB error versus (lambda / 4 pi d)^2 at the cell centers.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from raycover import (  # noqa: E402
    TraceConfig,
    Transmitter,
    build_index,
    load_scene,
    make_grid,
    simulate_coverage,
    to_db,
)
from raycover.coverage import cell_centers  # noqa: E402
from raycover.propagation import friis_path_gain  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rays", type=int, default=4_000_000)
    parser.add_argument("--height", type=float, default=12.0, help="tx height (m)")
    parser.add_argument("--extent", type=float, default=12.0, help="half-width of the grid (m)")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    scene = load_scene("")
    tx = Transmitter(position=(0.0, 0.0, args.height), frequency_hz=2.4e9)
    grid = make_grid((-args.extent, -args.extent, args.extent, args.extent), 1.0, 1.5)
    cmap = simulate_coverage(
        scene, tx, grid, TraceConfig(ray_budget=args.rays, seed=args.seed, max_depth=0),
        index=build_index(scene),
    )
    db = to_db(cmap)
    xs, ys = cell_centers(grid)
    r = np.hypot(xs, ys)
    d = np.sqrt(r**2 + (args.height - grid.height) ** 2)
    expected = 10 * np.log10(friis_path_gain(tx.wavelength, d))
    err = db - expected

    print(f"rays={args.rays} tx_height={args.height} grid={grid.n_i}x{grid.n_j}")
    print(f"{'ring':>6} {'cells':>6} {'mean_hits':>10} {'mean_|err|':>11} {'max_|err|':>10}")
    for ring in range(int(args.extent * 1.5)):
        sel = (r >= ring) & (r < ring + 1) & (cmap.hits > 0)
        if not sel.any():
            continue
        ring_err = np.abs(err[sel])
        print(
            f"{ring:>4} m {sel.sum():>6} {cmap.hits[sel].mean():>10.1f} "
            f"{np.nanmean(ring_err):>9.3f} dB {np.nanmax(ring_err):>7.3f} dB"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
