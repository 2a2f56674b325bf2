"""Ray launching, specular propagation, and measurement-plane crossings.

The propagation model is free-space spherical spreading with scalar
per-bounce reflection coefficients: a ray crossing the horizontal plane at
unfolded distance d after bounces with reflection amplitudes gamma_k carries

    h_sq = gain(dir) * (wavelength / (4 pi d))**2 * prod(gamma_k**2)

No phase, polarisation, or diffraction. Directions are drawn uniformly over
the sphere from per-ray substreams (the seed's counter-based stream evaluated
at the ray index), so crossing multisets are identical for any worker count
or batch size.
"""

from __future__ import annotations

import logging
import math
import os
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np

from . import kernels
from .accel import AccelIndex
from .scene import Scene

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Crossings more grazing than this would get unbounded estimator weights.
COS_INCIDENCE_GUARD = 0.05

DEFAULT_BATCH_RAYS = 65_536

_thread_lock = threading.Lock()


class TraceCancelled(Exception):
    """Raised when a should_cancel callback interrupts a trace."""


@dataclass(frozen=True)
class AntennaPattern:
    """Isotropic, or a cosine-power lobe normalised to unit mean gain.

    The directional gain is 2(p+1) * cos(psi)^p on the boresight hemisphere
    and 0 behind, which integrates to 4 pi over the sphere.
    """

    kind: str = "isotropic"
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("isotropic", "directional"):
            raise ValueError(f"unknown antenna kind {self.kind!r}")
        if self.exponent < 0:
            raise ValueError("directional exponent must be >= 0")

    @property
    def peak_gain(self) -> float:
        if self.kind == "isotropic":
            return 1.0
        return 2.0 * (self.exponent + 1.0)


@dataclass(frozen=True)
class Transmitter:
    position: np.ndarray
    frequency_hz: float
    antenna: AntennaPattern = AntennaPattern()
    boresight: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "boresight", np.asarray(self.boresight, dtype=np.float64))
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")
        n = float(np.linalg.norm(self.boresight))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"boresight norm {n} is not 1 within 1e-9")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    def snapshot(self) -> dict:
        return {
            "x": float(self.position[0]),
            "y": float(self.position[1]),
            "z": float(self.position[2]),
            "frequency_hz": self.frequency_hz,
            "antenna": {"kind": self.antenna.kind, "exponent": self.antenna.exponent},
            "boresight": {
                "x": float(self.boresight[0]),
                "y": float(self.boresight[1]),
                "z": float(self.boresight[2]),
            },
        }


@dataclass(frozen=True)
class TraceConfig:
    ray_budget: int
    max_depth: int = 3
    min_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.ray_budget < 1:
            raise ValueError("ray_budget must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_amplitude < 0:
            raise ValueError("min_amplitude must be >= 0")
        if not -(2**63) <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


class PlaneCrossing(NamedTuple):
    """One ray's crossing of the measurement plane."""

    s: tuple[float, float]
    h_sq: float
    d: float
    cos_incidence: float
    bounces: int


@dataclass
class PlaneCrossings:
    """Column-array batch of PlaneCrossing events, in ray-launch order."""

    sx: np.ndarray
    sy: np.ndarray
    h_sq: np.ndarray
    d: np.ndarray
    cos_incidence: np.ndarray
    bounces: np.ndarray

    def __len__(self) -> int:
        return len(self.h_sq)

    def __iter__(self) -> Iterator[PlaneCrossing]:
        for i in range(len(self)):
            yield PlaneCrossing(
                (float(self.sx[i]), float(self.sy[i])),
                float(self.h_sq[i]),
                float(self.d[i]),
                float(self.cos_incidence[i]),
                int(self.bounces[i]),
            )

    @staticmethod
    def empty() -> "PlaneCrossings":
        z = np.zeros(0)
        return PlaneCrossings(z, z.copy(), z.copy(), z.copy(), z.copy(), np.zeros(0, dtype=np.uint8))

    @staticmethod
    def from_records(records) -> "PlaneCrossings":
        recs = [PlaneCrossing(*r) for r in records]
        return PlaneCrossings(
            sx=np.array([r.s[0] for r in recs], dtype=np.float64),
            sy=np.array([r.s[1] for r in recs], dtype=np.float64),
            h_sq=np.array([r.h_sq for r in recs], dtype=np.float64),
            d=np.array([r.d for r in recs], dtype=np.float64),
            cos_incidence=np.array([r.cos_incidence for r in recs], dtype=np.float64),
            bounces=np.array([r.bounces for r in recs], dtype=np.int64),
        )

    @staticmethod
    def concatenate(parts: list["PlaneCrossings"]) -> "PlaneCrossings":
        if not parts:
            return PlaneCrossings.empty()
        return PlaneCrossings(
            sx=np.concatenate([p.sx for p in parts]),
            sy=np.concatenate([p.sy for p in parts]),
            h_sq=np.concatenate([p.h_sq for p in parts]),
            d=np.concatenate([p.d for p in parts]),
            cos_incidence=np.concatenate([p.cos_incidence for p in parts]),
            bounces=np.concatenate([p.bounces for p in parts]),
        )


def antenna_gain(pattern: AntennaPattern, boresight: np.ndarray, direction: np.ndarray) -> float:
    """Linear gain of the pattern toward ``direction``. Both vectors unit."""
    if pattern.kind == "isotropic":
        return 1.0
    cos_psi = float(np.asarray(boresight) @ np.asarray(direction))
    if cos_psi <= 0.0:
        return 0.0
    return pattern.peak_gain * cos_psi**pattern.exponent


def ray_directions(seed: int, start: int, count: int) -> np.ndarray:
    """The unit directions rays [start, start+count) launch with (for tests)."""
    out = np.empty((count, 3))
    seed_u = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for i in range(count):
        out[i] = kernels.sphere_direction(seed_u, start + i)
    return out


def _check_transmitter(scene: Scene, tx: Transmitter) -> None:
    bbox = scene.bbox
    if bbox is None:
        return
    lo, hi = bbox[0] - 10.0, bbox[1] + 10.0
    if np.any(tx.position < lo) or np.any(tx.position > hi):
        log.warning(
            "transmitter position %s lies outside scene bbox inflated by 10 m",
            tx.position.tolist(),
        )


def _resolve_workers(workers: int | None) -> int:
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    if workers is None:
        return min(os.cpu_count() or 1, limit)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers > limit:
        log.warning("clamping workers from %d to numba thread limit %d", workers, limit)
        return limit
    return workers


def trace_coverage_rays(
    scene: Scene,
    index: AccelIndex,
    tx: Transmitter,
    plane_height: float,
    cfg: TraceConfig,
    *,
    workers: int | None = None,
    batch_rays: int = DEFAULT_BATCH_RAYS,
    should_cancel: Callable[[], bool] | None = None,
) -> PlaneCrossings:
    """Launch cfg.ray_budget rays and collect measurement-plane crossings.

    Rays are traced in batches of at most ``batch_rays``; ``should_cancel``
    is polled between batches and raises TraceCancelled when it fires.
    Results do not depend on ``workers`` or ``batch_rays``.
    """
    import numba

    _check_transmitter(scene, tx)
    if batch_rays < 1:
        raise ValueError("batch_rays must be >= 1")

    seed_u = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    n_slots = cfg.max_depth + 1
    directional = tx.antenna.kind == "directional"
    parts: list[PlaneCrossings] = []

    n_workers = _resolve_workers(workers)
    with _thread_lock:
        previous = numba.get_num_threads()
        numba.set_num_threads(n_workers)
        try:
            for start in range(0, cfg.ray_budget, batch_rays):
                if should_cancel is not None and should_cancel():
                    raise TraceCancelled()
                n = min(batch_rays, cfg.ray_budget - start)
                shape = (n, n_slots)
                out_sx = np.zeros(shape)
                out_sy = np.zeros(shape)
                out_hsq = np.zeros(shape)
                out_d = np.zeros(shape)
                out_cos = np.zeros(shape)
                out_bounce = np.zeros(shape, dtype=np.uint8)
                out_valid = np.zeros(shape, dtype=np.bool_)
                kernels.trace_batch(
                    seed_u, start, n,
                    index.node_min, index.node_max, index.node_left, index.node_right,
                    index.node_start, index.node_count, index.tri_order,
                    index.v0, index.v1, index.v2, index.tri_gamma,
                    float(tx.position[0]), float(tx.position[1]), float(tx.position[2]),
                    directional, tx.antenna.peak_gain, float(tx.antenna.exponent),
                    float(tx.boresight[0]), float(tx.boresight[1]), float(tx.boresight[2]),
                    tx.wavelength, float(plane_height), cfg.max_depth,
                    cfg.min_amplitude, COS_INCIDENCE_GUARD,
                    out_sx, out_sy, out_hsq, out_d, out_cos, out_bounce, out_valid,
                )
                mask = out_valid.ravel()
                parts.append(
                    PlaneCrossings(
                        sx=out_sx.ravel()[mask],
                        sy=out_sy.ravel()[mask],
                        h_sq=out_hsq.ravel()[mask],
                        d=out_d.ravel()[mask],
                        cos_incidence=out_cos.ravel()[mask],
                        bounces=out_bounce.ravel()[mask],
                    )
                )
        finally:
            numba.set_num_threads(previous)

    return PlaneCrossings.concatenate(parts)


def friis_path_gain(wavelength: float, distance: float) -> float:
    """Closed-form free-space path gain (lambda / 4 pi d)^2."""
    return (wavelength / (4.0 * math.pi * distance)) ** 2
