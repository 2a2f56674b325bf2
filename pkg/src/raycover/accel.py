"""Bounding-volume hierarchy over a Scene for first-hit ray queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .scene import Hit, Ray, Scene

LEAF_SIZE = 8
# Boxes are padded so grazing rays on exact box planes cannot be culled.
BOX_PAD = 1e-9


@dataclass(frozen=True)
class AccelIndex:
    """Flat-array BVH plus the triangle data the trace kernel reads.

    Leaf nodes store a range [start, start+count) into ``tri_order``, which
    holds original triangle indices; internal nodes store child node ids.
    Immutable and shared across tracer workers.
    """

    node_min: np.ndarray  # (n, 3)
    node_max: np.ndarray  # (n, 3)
    node_left: np.ndarray  # (n,) int32, child id (internal) or -1 (leaf)
    node_right: np.ndarray  # (n,) int32, child id (internal) or 0 (leaf)
    node_start: np.ndarray  # (n,) int32, leaf range start
    node_count: np.ndarray  # (n,) int32, leaf size; 0 for internal
    tri_order: np.ndarray  # (m,) int32
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    tri_gamma: np.ndarray  # (m,) per-triangle reflection amplitude
    tri_material: np.ndarray  # (m,) int32 into material_names
    material_names: tuple[str, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.node_left)


def build_index(scene: Scene) -> AccelIndex:
    """Median-split BVH; first-hit answers match exhaustive iteration."""
    m = scene.n_triangles
    v0, v1, v2 = scene.v0, scene.v1, scene.v2
    if m == 0:
        empty3 = np.zeros((0, 3))
        empty_i = np.zeros(0, dtype=np.int32)
        return AccelIndex(
            empty3, empty3.copy(), empty_i, empty_i.copy(), empty_i.copy(),
            empty_i.copy(), empty_i.copy(), empty3.copy(), empty3.copy(),
            empty3.copy(), np.zeros(0), empty_i.copy(), (),
        )

    tri_min = np.minimum(np.minimum(v0, v1), v2) - BOX_PAD
    tri_max = np.maximum(np.maximum(v0, v1), v2) + BOX_PAD
    centroid = (tri_min + tri_max) * 0.5

    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_left: list[int] = []
    node_right: list[int] = []
    node_start: list[int] = []
    node_count: list[int] = []

    order = np.arange(m, dtype=np.int32)
    # (node id, slice into order) work list; children are allocated up front
    # so the arrays can be filled iteratively.
    stack: list[tuple[int, int, int]] = []

    def alloc_node() -> int:
        node_min.append(np.zeros(3))
        node_max.append(np.zeros(3))
        node_left.append(-1)
        node_right.append(0)
        node_start.append(0)
        node_count.append(0)
        return len(node_left) - 1

    root = alloc_node()
    stack.append((root, 0, m))
    while stack:
        node, lo, hi = stack.pop()
        tris = order[lo:hi]
        node_min[node] = tri_min[tris].min(axis=0)
        node_max[node] = tri_max[tris].max(axis=0)
        if hi - lo <= LEAF_SIZE:
            node_left[node] = -1
            node_start[node] = lo
            node_count[node] = hi - lo
            continue
        extent = node_max[node] - node_min[node]
        axis = int(np.argmax(extent))
        mid = (hi - lo) // 2
        part = np.argpartition(centroid[tris, axis], mid)
        order[lo:hi] = tris[part]
        left = alloc_node()
        right = alloc_node()
        node_left[node] = left
        node_right[node] = right
        stack.append((left, lo, lo + mid))
        stack.append((right, lo + mid, hi))

    return AccelIndex(
        node_min=np.asarray(node_min),
        node_max=np.asarray(node_max),
        node_left=np.asarray(node_left, dtype=np.int32),
        node_right=np.asarray(node_right, dtype=np.int32),
        node_start=np.asarray(node_start, dtype=np.int32),
        node_count=np.asarray(node_count, dtype=np.int32),
        tri_order=order,
        v0=np.ascontiguousarray(v0),
        v1=np.ascontiguousarray(v1),
        v2=np.ascontiguousarray(v2),
        tri_gamma=scene.reflection_amplitudes(),
        tri_material=scene.material_index.copy(),
        material_names=tuple(scene.material_names),
    )


def intersect_first(index: AccelIndex, ray: Ray) -> Hit | None:
    """Closest hit with t > 1e-6, normal flipped against the ray, or None."""
    o = np.asarray(ray.origin, dtype=np.float64)
    d = np.asarray(ray.direction, dtype=np.float64)
    t, tri = kernels.bvh_first_hit(
        index.node_min, index.node_max, index.node_left, index.node_right,
        index.node_start, index.node_count, index.tri_order,
        index.v0, index.v1, index.v2,
        o[0], o[1], o[2], d[0], d[1], d[2],
    )
    if tri < 0:
        return None
    normal = np.cross(index.v1[tri] - index.v0[tri], index.v2[tri] - index.v0[tri])
    normal = normal / np.linalg.norm(normal)
    if float(normal @ d) > 0.0:
        normal = -normal
    material_id = index.material_names[index.tri_material[tri]]
    return Hit(
        t=float(t),
        point=o + t * d,
        normal=normal,
        material_id=material_id,
        triangle_index=int(tri),
    )
