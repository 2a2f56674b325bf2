"""Numba kernels: ray/triangle tests, BVH traversal, and the trace loop.

Everything here is deliberately scalar-per-ray so the parallel trace kernel
can own a whole ray path (direction draw, bounce chain, plane crossings)
without synchronisation: each ray writes only to its own output slots, which
makes results bit-identical for any worker count.

NUMBA_NUM_THREADS is raised to at least 8 before numba is first imported so
callers may request up to 8 workers even on smaller machines (threads beyond
the core count just oversubscribe).
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

import numpy as np
from numba import njit, prange

# Hits closer than this along a ray are treated as self-intersections.
SELF_HIT_EPS = 1e-6

_U64 = np.uint64
_GAMMA64 = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = state + _GAMMA64
    z = state
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return state, z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _unit_double(word):
    return (word >> _U64(11)) * _TO_UNIT


@njit(cache=True)
def sphere_direction(seed, index):
    """Uniform unit vector from ray ``index``'s substream of ``seed``.

    The substream is the seed's SplitMix64 sequence accessed at position
    2*index, so any ray's draws are O(1) without advancing shared state and
    nearby seeds still yield unrelated direction multisets.
    """
    state = seed + _U64(2 * index) * _GAMMA64
    state, w1 = _splitmix64(state)
    state, w2 = _splitmix64(state)
    u1 = _unit_double(w1)
    u2 = _unit_double(w2)
    z = 1.0 - 2.0 * u1
    r = np.sqrt(max(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * u2
    return r * np.cos(phi), r * np.sin(phi), z


@njit(cache=True, inline="always")
def _ray_triangle(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moller-Trumbore, double-sided. Returns hit distance or inf."""
    e1x = bx - ax
    e1y = by - ay
    e1z = bz - az
    e2x = cx - ax
    e2y = cy - ay
    e2z = cz - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-13 < det < 1e-13:
        return np.inf
    inv = 1.0 / det
    sx = ox - ax
    sy = oy - ay
    sz = oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= SELF_HIT_EPS:
        return np.inf
    return t


@njit(cache=True, inline="always")
def _safe_inv(d):
    if d > 1e-300 or d < -1e-300:
        return 1.0 / d
    return 1e300 if d >= 0.0 else -1e300


@njit(cache=True)
def bvh_first_hit(
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_order, v0, v1, v2,
    ox, oy, oz, dx, dy, dz,
):
    """First hit along the ray: (t, triangle index) or (inf, -1).

    Ties on t are broken toward the lowest original triangle index so the
    answer matches exhaustive iteration exactly.
    """
    best_t = np.inf
    best_i = -1
    if node_left.shape[0] == 0:
        return best_t, best_i

    ix = _safe_inv(dx)
    iy = _safe_inv(dy)
    iz = _safe_inv(dz)

    stack = np.empty(64, dtype=np.int32)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        t0x = (node_min[node, 0] - ox) * ix
        t1x = (node_max[node, 0] - ox) * ix
        if t0x > t1x:
            t0x, t1x = t1x, t0x
        t0y = (node_min[node, 1] - oy) * iy
        t1y = (node_max[node, 1] - oy) * iy
        if t0y > t1y:
            t0y, t1y = t1y, t0y
        t0z = (node_min[node, 2] - oz) * iz
        t1z = (node_max[node, 2] - oz) * iz
        if t0z > t1z:
            t0z, t1z = t1z, t0z
        t_near = max(max(t0x, t0y), max(t0z, SELF_HIT_EPS))
        t_far = min(min(t1x, t1y), t1z)
        if t_near > t_far or t_near > best_t:
            continue
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for k in range(start, start + count):
                tri = tri_order[k]
                t = _ray_triangle(
                    ox, oy, oz, dx, dy, dz,
                    v0[tri, 0], v0[tri, 1], v0[tri, 2],
                    v1[tri, 0], v1[tri, 1], v1[tri, 2],
                    v2[tri, 0], v2[tri, 1], v2[tri, 2],
                )
                if t < best_t or (t == best_t and tri < best_i):
                    best_t = t
                    best_i = tri
        else:
            stack[top] = node_left[node]
            stack[top + 1] = node_right[node]
            top += 2
    return best_t, best_i


@njit(cache=True, parallel=True)
def trace_batch(
    seed, start_index, n_rays,
    node_min, node_max, node_left, node_right, node_start, node_count,
    tri_order, v0, v1, v2, tri_gamma,
    txx, txy, txz,
    directional, peak_gain, exponent, bsx, bsy, bsz,
    wavelength, plane_z, max_depth, min_amplitude, cos_guard,
    out_sx, out_sy, out_hsq, out_d, out_cos, out_bounce, out_valid,
):
    """Trace rays [start_index, start_index + n_rays) of the global budget.

    Output arrays have shape (n_rays, max_depth + 1): segment k of ray r may
    emit at most one plane crossing into slot (r, k). Slots are pre-zeroed by
    the caller; out_valid marks the ones written.
    """
    four_pi = 4.0 * np.pi
    for r in prange(n_rays):
        dx, dy, dz = sphere_direction(seed, start_index + r)

        if directional:
            cos_psi = dx * bsx + dy * bsy + dz * bsz
            gain = peak_gain * cos_psi ** exponent if cos_psi > 0.0 else 0.0
        else:
            gain = 1.0
        if gain <= 0.0:
            continue
        # Amplitude referenced to 1 m: |h(d)| = sqrt(gain) * lam/(4 pi d) * prod(gamma)
        amp_ref = np.sqrt(gain) * wavelength / four_pi
        if amp_ref < min_amplitude:
            continue

        ox = txx
        oy = txy
        oz = txz
        path = 0.0
        refl = 1.0
        for k in range(max_depth + 1):
            t_hit, tri = bvh_first_hit(
                node_min, node_max, node_left, node_right, node_start, node_count,
                tri_order, v0, v1, v2, ox, oy, oz, dx, dy, dz,
            )
            if dz != 0.0:
                t_plane = (plane_z - oz) / dz
                if SELF_HIT_EPS < t_plane < t_hit:
                    cos_inc = abs(dz)
                    if cos_inc >= cos_guard:
                        d = path + t_plane
                        amp1 = amp_ref * refl / d
                        out_sx[r, k] = ox + t_plane * dx
                        out_sy[r, k] = oy + t_plane * dy
                        out_hsq[r, k] = amp1 * amp1
                        out_d[r, k] = d
                        out_cos[r, k] = cos_inc
                        out_bounce[r, k] = k
                        out_valid[r, k] = True
            if tri < 0 or k == max_depth:
                break

            # Specular bounce off the hit triangle.
            path += t_hit
            ox += t_hit * dx
            oy += t_hit * dy
            oz += t_hit * dz
            refl *= tri_gamma[tri]
            if refl <= 0.0:
                break
            if amp_ref * refl / path < min_amplitude:
                break
            e1x = v1[tri, 0] - v0[tri, 0]
            e1y = v1[tri, 1] - v0[tri, 1]
            e1z = v1[tri, 2] - v0[tri, 2]
            e2x = v2[tri, 0] - v0[tri, 0]
            e2y = v2[tri, 1] - v0[tri, 1]
            e2z = v2[tri, 2] - v0[tri, 2]
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            norm = np.sqrt(nx * nx + ny * ny + nz * nz)
            nx /= norm
            ny /= norm
            nz /= norm
            ddn = dx * nx + dy * ny + dz * nz
            dx -= 2.0 * ddn * nx
            dy -= 2.0 * ddn * ny
            dz -= 2.0 * ddn * nz


def warm_up():
    """Force-compile the kernels (cached to disk) on a one-triangle scene."""
    node_min = np.zeros((1, 3))
    node_max = np.ones((1, 3))
    left = np.full(1, -1, dtype=np.int32)
    right = np.zeros(1, dtype=np.int32)
    start = np.zeros(1, dtype=np.int32)
    count = np.ones(1, dtype=np.int32)
    order = np.zeros(1, dtype=np.int32)
    v0 = np.array([[0.0, 0.0, 0.5]])
    v1 = np.array([[1.0, 0.0, 0.5]])
    v2 = np.array([[0.0, 1.0, 0.5]])
    gamma = np.array([0.5])
    shape = (4, 2)
    trace_batch(
        _U64(1), 0, 4,
        node_min, node_max, left, right, start, count, order, v0, v1, v2, gamma,
        0.3, 0.3, 1.0, False, 1.0, 0.0, 0.0, 1.0, 0.0,
        0.125, 0.25, 1, 0.0, 0.05,
        np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape),
        np.zeros(shape), np.zeros(shape, dtype=np.uint8), np.zeros(shape, dtype=np.bool_),
    )
