"""Coverage-map document (raycover-map v1) and heatmap image files.

The map document is line-oriented UTF-8 text:

    # raycover-map v1
    <one-line JSON header: grid params + run meta>
    gain
    <n_i lines of n_j '%.10e' values, row i ascending, column j ascending>
    hits
    <n_i lines of n_j integers>

Gains are serialised as rounded decimals so documents from runs that agree
within the tracer's reproducibility tolerance are byte-identical; wall-clock
duration is deliberately not part of the document for the same reason.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .coverage import CoverageGrid, CoverageMap, Heatmap, MapMeta

FORMAT_LINE = "# raycover-map v1"
GAIN_FORMAT = "%.10e"


class MapFormatError(ValueError):
    """Unreadable or inconsistent map document."""


def dump_map(cmap: CoverageMap) -> str:
    grid = cmap.grid
    header = {
        "grid": {
            "x0": grid.x0,
            "y0": grid.y0,
            "cell_size": grid.cell_size,
            "n_i": grid.n_i,
            "n_j": grid.n_j,
            "height": grid.height,
        },
        "meta": {
            "seed": cmap.meta.seed,
            "rays": cmap.meta.rays,
            "max_depth": cmap.meta.max_depth,
            "tx": cmap.meta.tx,
        },
    }
    lines = [FORMAT_LINE, json.dumps(header, separators=(",", ":")), "gain"]
    for i in range(grid.n_i):
        lines.append(" ".join(GAIN_FORMAT % v for v in cmap.gain[i]))
    lines.append("hits")
    for i in range(grid.n_i):
        lines.append(" ".join(str(int(v)) for v in cmap.hits[i]))
    return "\n".join(lines) + "\n"


def parse_map(text: str) -> CoverageMap:
    lines = text.splitlines()
    if len(lines) < 3 or lines[0].strip() != FORMAT_LINE:
        raise MapFormatError("missing 'raycover-map v1' header line")
    try:
        header = json.loads(lines[1])
        g = header["grid"]
        grid = CoverageGrid(
            x0=float(g["x0"]),
            y0=float(g["y0"]),
            cell_size=float(g["cell_size"]),
            n_i=int(g["n_i"]),
            n_j=int(g["n_j"]),
            height=float(g["height"]),
        )
        m = header.get("meta", {})
        meta = MapMeta(
            seed=int(m.get("seed", 0)),
            rays=int(m.get("rays", 0)),
            max_depth=int(m.get("max_depth", 0)),
            tx=m.get("tx", {}),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"bad map header: {exc}") from exc

    if lines[2].strip() != "gain":
        raise MapFormatError("expected 'gain' section after header")
    want = grid.n_i
    gain_lines = lines[3 : 3 + want]
    hits_at = 3 + want
    if len(gain_lines) < want or hits_at >= len(lines) or lines[hits_at].strip() != "hits":
        raise MapFormatError("truncated gain section")
    hits_lines = lines[hits_at + 1 : hits_at + 1 + want]
    if len(hits_lines) < want:
        raise MapFormatError("truncated hits section")
    try:
        gain = np.array([[float(v) for v in row.split()] for row in gain_lines])
        hits = np.array([[int(v) for v in row.split()] for row in hits_lines], dtype=np.int64)
    except ValueError as exc:
        raise MapFormatError(f"bad numeric value: {exc}") from exc
    if gain.shape != (grid.n_i, grid.n_j) or hits.shape != (grid.n_i, grid.n_j):
        raise MapFormatError(
            f"data shape {gain.shape} does not match grid {grid.n_i}x{grid.n_j}"
        )
    return CoverageMap(grid=grid, gain=gain, hits=hits, meta=meta)


def save_map(cmap: CoverageMap, path: str | Path) -> None:
    Path(path).write_text(dump_map(cmap), encoding="utf-8")


def load_map(path: str | Path) -> CoverageMap:
    return parse_map(Path(path).read_text(encoding="utf-8"))


def heatmap_image_array(heatmap: Heatmap) -> np.ndarray:
    """(n_j, n_i, 3) image with row 0 at max y (north up), column 0 at min x."""
    return np.flip(heatmap.raster.transpose(1, 0, 2), axis=0).copy()


def save_heatmap(heatmap: Heatmap, path: str | Path) -> None:
    """Write the heatmap as PNG (via Pillow) or binary PPM by extension."""
    path = Path(path)
    img = heatmap_image_array(heatmap)
    if path.suffix.lower() == ".ppm":
        h, w, _ = img.shape
        with open(path, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (w, h))
            f.write(img.tobytes())
    else:
        from PIL import Image

        Image.fromarray(img, mode="RGB").save(path)
