"""Triangle-mesh scenes with per-surface reflection materials.

The scene document is a small Wavefront-OBJ subset (``v``, ``f``, ``usemtl``,
plus a ``mat <name> <gamma>`` record so a single document can carry its own
material table over the wire). Faces with more than three vertices are
triangulated fan-wise. A separate material sidecar ("``name gamma``" per line)
can override or extend embedded materials. Both documents are UTF-8 text and
versioned by a leading ``# raycover-scene v1`` comment; no tag means v1.

Coordinates are meters, right-handed, z-up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

log = logging.getLogger(__name__)

# Faces with area at or below this are dropped at load.
DEGENERATE_AREA = 1e-12

DEFAULT_MATERIAL_NAME = "default"
DEFAULT_REFLECTION = 0.5

FORMAT_TAG = "raycover-scene"
FORMAT_VERSION = 1


class SceneParseError(ValueError):
    """Malformed scene or material document.

    ``line`` is the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Material:
    name: str
    reflection_amplitude: float

    def __post_init__(self):
        if not 0.0 <= self.reflection_amplitude <= 1.0:
            raise ValueError(
                f"material {self.name!r}: reflection_amplitude "
                f"{self.reflection_amplitude} outside [0, 1]"
            )


@dataclass(frozen=True)
class Triangle:
    """One mesh face. Vertices are (3,) float arrays, z-up meters."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    material_id: str

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.b - self.a, self.c - self.a)))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"ray direction norm {n} is not 1 within 1e-9")


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray  # unit, oriented against the incoming ray
    material_id: str
    triangle_index: int


@dataclass
class Scene:
    """Triangle soup plus material table and bounding box.

    Canonical storage is array-of-vertices form (``v0``/``v1``/``v2`` of shape
    ``(m, 3)``) with a per-face index into ``material_names``; this is what the
    tracer kernels consume. The ``triangles`` property materialises Triangle
    views for code that wants records. Immutable after construction and safe
    to share across tracer workers.
    """

    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    material_index: np.ndarray  # (m,) int32 into material_names
    material_names: list[str]
    materials: dict[str, Material]
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        for arr in (self.v0, self.v1, self.v2):
            if arr.shape != (self.n_triangles, 3):
                raise ValueError("vertex arrays must share shape (m, 3)")
        if self.n_triangles and not self.materials:
            raise ValueError("non-empty scene requires a material table")

    @property
    def n_triangles(self) -> int:
        return len(self.v0)

    @property
    def bbox(self) -> np.ndarray | None:
        """(2, 3) [min; max] over all vertices, or None for an empty scene."""
        if self.n_triangles == 0:
            return None
        stacked = np.concatenate([self.v0, self.v1, self.v2])
        return np.stack([stacked.min(axis=0), stacked.max(axis=0)])

    @property
    def triangles(self) -> list[Triangle]:
        return [
            Triangle(
                self.v0[i].copy(),
                self.v1[i].copy(),
                self.v2[i].copy(),
                self.material_names[self.material_index[i]],
            )
            for i in range(self.n_triangles)
        ]

    def reflection_amplitudes(self) -> np.ndarray:
        """Per-triangle reflection amplitude, aligned with the vertex arrays."""
        gammas = np.array(
            [self.materials[name].reflection_amplitude for name in self.material_names]
        )
        if self.n_triangles == 0:
            return np.zeros(0)
        return gammas[self.material_index]


def _iter_records(text: str) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        yield lineno, line.split()


def load_materials(source: str | Path) -> dict[str, Material]:
    """Parse a material sidecar: one ``name gamma`` pair per line."""
    text = _read_source(source)
    materials: dict[str, Material] = {}
    for lineno, parts in _iter_records(text):
        if len(parts) != 2:
            raise SceneParseError(f"expected 'name gamma', got {' '.join(parts)!r}", lineno)
        name, gamma_s = parts
        try:
            gamma = float(gamma_s)
        except ValueError:
            raise SceneParseError(f"bad reflection amplitude {gamma_s!r}", lineno) from None
        if not 0.0 <= gamma <= 1.0:
            raise SceneParseError(f"reflection amplitude {gamma} outside [0, 1]", lineno)
        materials[name] = Material(name, gamma)
    return materials


def _read_source(source: str | Path) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    return source


def load_scene(
    source: str | Path,
    materials: str | Path | Mapping[str, Material] | None = None,
) -> Scene:
    """Parse a scene document (text, or a Path to one) into a Scene.

    ``materials`` may be a sidecar document/path or an already-parsed table;
    entries there override ``mat`` records embedded in the scene document.
    Degenerate faces are dropped and unknown material names fall back to the
    default material (gamma 0.5); both are reported through ``Scene.warnings``.
    """
    text = _read_source(source)

    table: dict[str, Material] = {}
    if isinstance(materials, Mapping):
        table.update(materials)
        sidecar = None
    else:
        sidecar = load_materials(materials) if materials is not None else None

    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int, str]] = []
    current_material = DEFAULT_MATERIAL_NAME
    embedded: dict[str, Material] = {}
    warnings: list[str] = []
    dropped = 0

    for lineno, parts in _iter_records(text):
        rec, args = parts[0], parts[1:]
        if rec == "v":
            if len(args) < 3:
                raise SceneParseError(f"vertex needs 3 coordinates, got {len(args)}", lineno)
            try:
                vertices.append((float(args[0]), float(args[1]), float(args[2])))
            except ValueError:
                raise SceneParseError(f"bad vertex coordinate in {' '.join(args)!r}", lineno) from None
        elif rec == "f":
            if len(args) < 3:
                raise SceneParseError(f"face needs at least 3 vertices, got {len(args)}", lineno)
            idx = []
            for tok in args:
                head = tok.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise SceneParseError(f"bad face index {tok!r}", lineno) from None
                if k <= 0 or k > len(vertices):
                    raise SceneParseError(
                        f"face index {k} out of range 1..{len(vertices)}", lineno
                    )
                idx.append(k - 1)
            for second, third in zip(idx[1:], idx[2:]):
                faces.append((idx[0], second, third, current_material))
        elif rec == "usemtl":
            if len(args) != 1:
                raise SceneParseError("usemtl needs exactly one name", lineno)
            current_material = args[0]
        elif rec == "mat":
            if len(args) != 2:
                raise SceneParseError("mat needs 'name gamma'", lineno)
            try:
                gamma = float(args[1])
            except ValueError:
                raise SceneParseError(f"bad reflection amplitude {args[1]!r}", lineno) from None
            if not 0.0 <= gamma <= 1.0:
                raise SceneParseError(f"reflection amplitude {gamma} outside [0, 1]", lineno)
            embedded[args[0]] = Material(args[0], gamma)
        # other OBJ records (vn, vt, o, g, s, mtllib, ...) are ignored

    merged = dict(embedded)
    if sidecar:
        merged.update(sidecar)
    merged.update(table)

    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    v0_l, v1_l, v2_l, mat_l = [], [], [], []
    used: dict[str, int] = {}
    names: list[str] = []
    final: dict[str, Material] = {}

    def material_slot(name: str) -> int:
        if name in used:
            return used[name]
        if name in merged:
            final[name] = merged[name]
        else:
            final[name] = Material(name, DEFAULT_REFLECTION)
            warnings.append(
                f"material {name!r} not declared; using default "
                f"reflection_amplitude {DEFAULT_REFLECTION}"
            )
        used[name] = len(names)
        names.append(name)
        return used[name]

    for ia, ib, ic, mat in faces:
        a, b, c = verts[ia], verts[ib], verts[ic]
        area = 0.5 * float(np.linalg.norm(np.cross(b - a, c - a)))
        if area <= DEGENERATE_AREA:
            dropped += 1
            continue
        v0_l.append(a)
        v1_l.append(b)
        v2_l.append(c)
        mat_l.append(material_slot(mat))

    if dropped:
        warnings.append(f"dropped {dropped} degenerate face(s) with area <= {DEGENERATE_AREA}")

    for w in warnings:
        log.warning("%s", w)

    m = len(v0_l)
    return Scene(
        v0=np.asarray(v0_l).reshape(m, 3),
        v1=np.asarray(v1_l).reshape(m, 3),
        v2=np.asarray(v2_l).reshape(m, 3),
        material_index=np.asarray(mat_l, dtype=np.int32).reshape(m),
        material_names=names,
        materials=final,
        warnings=warnings,
    )


def save_scene(scene: Scene, embed_materials: bool = True) -> str:
    """Serialise a Scene back to the v1 document (inverse of load_scene)."""
    out = [f"# {FORMAT_TAG} v{FORMAT_VERSION}"]
    if embed_materials:
        for mat in scene.materials.values():
            out.append(f"mat {mat.name} {mat.reflection_amplitude!r}")
    # Deduplicate vertices so load(save(s)) keeps coordinates bit-exact.
    vert_ids: dict[bytes, int] = {}
    vert_lines: list[str] = []

    def vid(v: np.ndarray) -> int:
        key = v.tobytes()
        if key not in vert_ids:
            vert_ids[key] = len(vert_lines) + 1
            vert_lines.append("v " + " ".join(repr(float(x)) for x in v))
        return vert_ids[key]

    face_lines: list[str] = []
    current = None
    for i in range(scene.n_triangles):
        name = scene.material_names[scene.material_index[i]]
        ids = (vid(scene.v0[i]), vid(scene.v1[i]), vid(scene.v2[i]))
        if name != current:
            face_lines.append(f"usemtl {name}")
            current = name
        face_lines.append("f {} {} {}".format(*ids))

    return "\n".join(out + vert_lines + face_lines) + "\n"


def save_materials(materials: Mapping[str, Material]) -> str:
    lines = [f"# {FORMAT_TAG} v{FORMAT_VERSION}"]
    for mat in materials.values():
        lines.append(f"{mat.name} {mat.reflection_amplitude!r}")
    return "\n".join(lines) + "\n"
