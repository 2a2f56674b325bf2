"""raycover: Monte Carlo ray-traced radio coverage maps over a twin bus.

Pipeline: load a triangle-mesh scene, build a BVH, launch rays from a
transmitter, collect measurement-plane crossings, and fold them into a
per-cell path-gain map. The bus/service layer runs the same pipeline behind
publish/subscribe topics with latest-wins job supersession.
"""

from .accel import AccelIndex, build_index, intersect_first
from .coverage import (
    CoverageGrid,
    CoverageMap,
    Heatmap,
    accumulate_map,
    cell_center,
    make_grid,
    render_heatmap,
    simulate_coverage,
    to_db,
    world_to_cell,
)
from .propagation import (
    AntennaPattern,
    PlaneCrossing,
    PlaneCrossings,
    TraceCancelled,
    TraceConfig,
    Transmitter,
    antenna_gain,
    trace_coverage_rays,
)
from .scene import Hit, Material, Ray, Scene, SceneParseError, Triangle, load_scene, save_scene

__version__ = "0.1.0"

__all__ = [
    "AccelIndex",
    "AntennaPattern",
    "CoverageGrid",
    "CoverageMap",
    "Heatmap",
    "Hit",
    "Material",
    "PlaneCrossing",
    "PlaneCrossings",
    "Ray",
    "Scene",
    "SceneParseError",
    "TraceCancelled",
    "TraceConfig",
    "Transmitter",
    "Triangle",
    "accumulate_map",
    "antenna_gain",
    "build_index",
    "cell_center",
    "intersect_first",
    "load_scene",
    "make_grid",
    "render_heatmap",
    "save_scene",
    "simulate_coverage",
    "to_db",
    "trace_coverage_rays",
    "world_to_cell",
]
