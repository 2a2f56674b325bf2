"""Coverage grid, Monte Carlo path-gain accumulation, and heatmap rendering.

A crossing at position s with squared amplitude h_sq, unfolded distance d and
incidence cosine c contributes

    h_sq * 4 pi d^2 / (N * cell_size^2 * c)

to its cell, which makes the per-cell sum an unbiased estimate of the mean of
|h(s)|^2 over the cell when N directions are drawn uniformly from the sphere:
the expected crossing density per unit area is N c / (4 pi d^2).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .accel import AccelIndex, build_index
from .propagation import (
    PlaneCrossings,
    TraceConfig,
    Transmitter,
    trace_coverage_rays,
)
from .scene import Scene

DEFAULT_GRID_HEIGHT = 1.5  # m above ground
DEFAULT_DB_RANGE = (-140.0, -40.0)

# 32 anchor colours of the perceptual purple->yellow map, linearly
# interpolated to 256 entries at import.
_VIRIDIS_ANCHORS = [
    (68, 1, 84), (71, 13, 96), (72, 24, 106), (72, 35, 116), (71, 46, 124),
    (69, 56, 130), (66, 65, 134), (62, 74, 137), (58, 84, 140), (54, 93, 141),
    (50, 101, 142), (46, 109, 142), (43, 117, 142), (40, 125, 142),
    (37, 132, 142), (34, 140, 141), (31, 148, 140), (30, 156, 137),
    (32, 163, 134), (37, 171, 130), (46, 179, 124), (58, 186, 118),
    (72, 193, 110), (88, 199, 101), (108, 205, 90), (127, 211, 78),
    (147, 215, 65), (168, 219, 52), (192, 223, 37), (213, 226, 26),
    (234, 229, 26), (253, 231, 37),
]

NO_DATA_COLOR = (0, 0, 0)


def _expand_palette(anchors) -> np.ndarray:
    anchors = np.asarray(anchors, dtype=np.float64)
    xs = np.linspace(0.0, 1.0, len(anchors))
    grid = np.linspace(0.0, 1.0, 256)
    out = np.stack(
        [np.interp(grid, xs, anchors[:, c]) for c in range(3)], axis=1
    )
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


PALETTES: dict[str, np.ndarray] = {"viridis": _expand_palette(_VIRIDIS_ANCHORS)}


class GridValidationError(ValueError):
    """Invalid grid geometry or accumulation parameters."""


@dataclass(frozen=True)
class CoverageGrid:
    """Half-open cells [x0+i*D, x0+(i+1)*D) x [y0+j*D, y0+(j+1)*D) at height z."""

    x0: float
    y0: float
    cell_size: float
    n_i: int
    n_j: int
    height: float = DEFAULT_GRID_HEIGHT

    def __post_init__(self):
        if self.cell_size <= 0:
            raise GridValidationError("cell_size must be > 0")
        if self.n_i <= 0 or self.n_j <= 0:
            raise GridValidationError("grid dims must be > 0")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (
            self.x0,
            self.y0,
            self.x0 + self.n_i * self.cell_size,
            self.y0 + self.n_j * self.cell_size,
        )

    @property
    def n_cells(self) -> int:
        return self.n_i * self.n_j


@dataclass
class MapMeta:
    seed: int = 0
    rays: int = 0
    max_depth: int = 0
    tx: dict = field(default_factory=dict)
    duration_s: float | None = None


@dataclass
class CoverageMap:
    grid: CoverageGrid
    gain: np.ndarray  # (n_i, n_j) linear path gain
    hits: np.ndarray  # (n_i, n_j) crossing counts
    meta: MapMeta = field(default_factory=MapMeta)


@dataclass
class Heatmap:
    raster: np.ndarray  # (n_i, n_j, 3) uint8
    palette: str
    db_range: tuple[float, float]


def make_grid(
    extent: tuple[float, float, float, float],
    cell_size: float,
    height: float = DEFAULT_GRID_HEIGHT,
) -> CoverageGrid:
    x0, y0, x1, y1 = extent
    if x1 <= x0 or y1 <= y0:
        raise GridValidationError("extent must satisfy x1 > x0 and y1 > y0")
    if cell_size <= 0:
        raise GridValidationError("cell_size must be > 0")
    n_i = math.ceil((x1 - x0) / cell_size)
    n_j = math.ceil((y1 - y0) / cell_size)
    return CoverageGrid(x0=x0, y0=y0, cell_size=cell_size, n_i=n_i, n_j=n_j, height=height)


def world_to_cell(grid: CoverageGrid, p: tuple[float, float]) -> tuple[int, int] | None:
    i = math.floor((p[0] - grid.x0) / grid.cell_size)
    j = math.floor((p[1] - grid.y0) / grid.cell_size)
    if 0 <= i < grid.n_i and 0 <= j < grid.n_j:
        return i, j
    return None


def cell_center(grid: CoverageGrid, i: int, j: int) -> tuple[float, float, float]:
    if not (0 <= i < grid.n_i and 0 <= j < grid.n_j):
        raise GridValidationError(f"cell ({i}, {j}) outside {grid.n_i}x{grid.n_j} grid")
    return (
        grid.x0 + (i + 0.5) * grid.cell_size,
        grid.y0 + (j + 0.5) * grid.cell_size,
        grid.height,
    )


def cell_centers(grid: CoverageGrid) -> tuple[np.ndarray, np.ndarray]:
    """Center coordinates as broadcastable (n_i, 1) x and (1, n_j) y arrays."""
    xs = grid.x0 + (np.arange(grid.n_i) + 0.5) * grid.cell_size
    ys = grid.y0 + (np.arange(grid.n_j) + 0.5) * grid.cell_size
    return xs[:, None], ys[None, :]


def accumulate_map(
    grid: CoverageGrid,
    crossings: PlaneCrossings | Sequence,
    n_rays: int,
    meta: MapMeta | None = None,
) -> CoverageMap:
    """Fold crossings into the unbiased per-cell path-gain estimate.

    Accumulation order is the crossing order, so results are reproducible
    bit-for-bit for a fixed crossing sequence. Crossings outside the grid
    are ignored.
    """
    if n_rays <= 0:
        raise GridValidationError("n_rays must be > 0")
    if not isinstance(crossings, PlaneCrossings):
        crossings = PlaneCrossings.from_records(list(crossings))

    gain = np.zeros((grid.n_i, grid.n_j))
    hits = np.zeros((grid.n_i, grid.n_j), dtype=np.int64)
    if len(crossings):
        i = np.floor((crossings.sx - grid.x0) / grid.cell_size).astype(np.int64)
        j = np.floor((crossings.sy - grid.y0) / grid.cell_size).astype(np.int64)
        inside = (i >= 0) & (i < grid.n_i) & (j >= 0) & (j < grid.n_j)
        if np.any(inside):
            i = i[inside]
            j = j[inside]
            d = np.asarray(crossings.d, dtype=np.float64)[inside]
            h_sq = np.asarray(crossings.h_sq, dtype=np.float64)[inside]
            cos_inc = np.asarray(crossings.cos_incidence, dtype=np.float64)[inside]
            weights = h_sq * (4.0 * np.pi) * d * d / (n_rays * grid.cell_size**2 * cos_inc)
            flat = i * grid.n_j + j
            gain = np.bincount(flat, weights=weights, minlength=grid.n_cells)
            gain = gain.reshape(grid.n_i, grid.n_j)
            hits = np.bincount(flat, minlength=grid.n_cells).astype(np.int64)
            hits = hits.reshape(grid.n_i, grid.n_j)

    return CoverageMap(grid=grid, gain=gain, hits=hits, meta=meta or MapMeta())


def to_db(cmap: CoverageMap) -> np.ndarray:
    """Per-cell 10*log10(gain); cells without data are NaN."""
    db = np.full(cmap.gain.shape, np.nan)
    valid = (cmap.gain > 0) & (cmap.hits > 0)
    db[valid] = 10.0 * np.log10(cmap.gain[valid])
    return db


def render_heatmap(
    cmap: CoverageMap,
    palette: str = "viridis",
    db_range: tuple[float, float] = DEFAULT_DB_RANGE,
) -> Heatmap:
    """Map dB gains through the palette, one pixel per cell.

    Values are clamped to db_range; low maps to the purple end, high to the
    yellow end, no-data cells to black.
    """
    lo, hi = db_range
    if lo >= hi:
        raise GridValidationError("db_range must satisfy lo < hi")
    try:
        table = PALETTES[palette]
    except KeyError:
        raise GridValidationError(f"unknown palette {palette!r}") from None

    db = to_db(cmap)
    raster = np.zeros((cmap.grid.n_i, cmap.grid.n_j, 3), dtype=np.uint8)
    raster[:, :] = NO_DATA_COLOR
    valid = ~np.isnan(db)
    if np.any(valid):
        clamped = np.clip(db[valid], lo, hi)
        idx = np.round((clamped - lo) / (hi - lo) * 255).astype(np.int64)
        raster[valid] = table[idx]
    return Heatmap(raster=raster, palette=palette, db_range=(lo, hi))


def simulate_coverage(
    scene: Scene,
    tx: Transmitter,
    grid: CoverageGrid,
    cfg: TraceConfig,
    *,
    index: AccelIndex | None = None,
    workers: int | None = None,
    batch_rays: int | None = None,
    should_cancel=None,
) -> CoverageMap:
    """Trace + accumulate in one step; fills meta including wall time."""
    t0 = time.perf_counter()
    if index is None:
        index = build_index(scene)
    kwargs = {}
    if batch_rays is not None:
        kwargs["batch_rays"] = batch_rays
    crossings = trace_coverage_rays(
        scene, index, tx, grid.height, cfg,
        workers=workers, should_cancel=should_cancel, **kwargs,
    )
    meta = MapMeta(
        seed=cfg.seed,
        rays=cfg.ray_budget,
        max_depth=cfg.max_depth,
        tx=tx.snapshot(),
    )
    cmap = accumulate_map(grid, crossings, cfg.ray_budget, meta=meta)
    cmap.meta.duration_s = time.perf_counter() - t0
    return cmap
