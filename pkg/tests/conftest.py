import numpy as np
import pytest

from raycover import kernels


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Compile (or load cached) numba kernels once before any test runs."""
    kernels.warm_up()


class SceneBuilder:
    """Accumulates axis-aligned rectangles into a scene document."""

    def __init__(self):
        self.lines = []
        self.n_vertices = 0

    def material(self, name: str, gamma: float) -> "SceneBuilder":
        self.lines.append(f"mat {name} {gamma!r}")
        return self

    def rect(self, axis: str, at: float, u_range, v_range, material: str = "wall") -> "SceneBuilder":
        """Two triangles forming an axis-aligned rectangle.

        axis="x": plane x=at, u -> y, v -> z. axis="y": plane y=at,
        u -> x, v -> z. axis="z": plane z=at, u -> x, v -> y.
        """
        u0, u1 = u_range
        v0, v1 = v_range
        corners = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
        if axis == "x":
            pts = [(at, u, v) for u, v in corners]
        elif axis == "y":
            pts = [(u, at, v) for u, v in corners]
        else:
            pts = [(u, v, at) for u, v in corners]
        self.lines.append(f"usemtl {material}")
        for p in pts:
            self.lines.append("v %r %r %r" % tuple(float(c) for c in p))
        base = self.n_vertices
        self.lines.append(f"f {base + 1} {base + 2} {base + 3} {base + 4}")
        self.n_vertices += 4
        return self

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def rect_obj(axis: str, at: float, u_range, v_range, material: str = "wall") -> str:
    return SceneBuilder().rect(axis, at, u_range, v_range, material).text()


def wall_scene(axis: str, at: float, u_range, v_range, gamma: float) -> str:
    return SceneBuilder().material("wall", gamma).rect(axis, at, u_range, v_range).text()


def box_scene(gamma: float, half: float = 8.0, height: float = 8.0) -> str:
    """Closed box [-half, half]^2 x [0, height], all faces one material."""
    b = SceneBuilder().material("shiny", gamma)
    b.rect("x", -half, (-half, half), (0, height), "shiny")
    b.rect("x", half, (-half, half), (0, height), "shiny")
    b.rect("y", -half, (-half, half), (0, height), "shiny")
    b.rect("y", half, (-half, half), (0, height), "shiny")
    b.rect("z", 0.0, (-half, half), (-half, half), "shiny")
    b.rect("z", height, (-half, half), (-half, half), "shiny")
    return b.text()


def town_scene(n_boxes: int = 830, seed: int = 7, half: float = 250.0) -> str:
    """Random box town + ground plane, ~12*n_boxes+2 triangles (desk scale)."""
    rng = np.random.default_rng(seed)
    lines = ["mat concrete 0.6", "mat ground 0.3"]
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, ...]] = []

    def add_box(cx, cy, w, d, h):
        base = len(verts)
        x0, x1 = cx - w / 2, cx + w / 2
        y0, y1 = cy - d / 2, cy + d / 2
        verts.extend(
            [
                (x0, y0, 0.0), (x1, y0, 0.0), (x1, y1, 0.0), (x0, y1, 0.0),
                (x0, y0, h), (x1, y0, h), (x1, y1, h), (x0, y1, h),
            ]
        )
        for quad in ((0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7), (4, 5, 6, 7), (3, 2, 1, 0)):
            faces.append(tuple(base + k for k in quad))

    for _ in range(n_boxes):
        add_box(
            float(rng.uniform(-half + 20, half - 20)),
            float(rng.uniform(-half + 20, half - 20)),
            float(rng.uniform(4, 18)),
            float(rng.uniform(4, 18)),
            float(rng.uniform(3, 25)),
        )
    lines.append("usemtl concrete")
    for v in verts:
        lines.append("v %r %r %r" % v)
    for f in faces:
        lines.append("f " + " ".join(str(k + 1) for k in f))
    base = len(verts)
    lines.append("usemtl ground")
    for v in (
        (-half - 10, -half - 10, 0.0), (half + 10, -half - 10, 0.0),
        (half + 10, half + 10, 0.0), (-half - 10, half + 10, 0.0),
    ):
        lines.append("v %r %r %r" % v)
    lines.append(f"f {base + 1} {base + 2} {base + 3} {base + 4}")
    return "\n".join(lines) + "\n"


def brute_force_first_hit(scene, origin, direction, eps=1e-6):
    """Exhaustive-iteration first-hit oracle, independent of the BVH code.

    Vectorised Moller-Trumbore over all triangles; minimal t > eps wins,
    ties broken by lowest triangle index.
    """
    if scene.n_triangles == 0:
        return None
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    e1 = scene.v1 - scene.v0
    e2 = scene.v2 - scene.v0
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) >= 1e-13
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - scene.v0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ d) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    valid = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > eps)
    if not valid.any():
        return None
    t = np.where(valid, t, np.inf)
    best = int(np.argmin(t))  # argmin returns the first (lowest) index on ties
    return float(t[best]), best
