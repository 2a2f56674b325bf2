import numpy as np
import pytest

from raycover.coverage import (
    CoverageGrid,
    MapMeta,
    accumulate_map,
    make_grid,
    render_heatmap,
    simulate_coverage,
)
from raycover.mapio import (
    MapFormatError,
    dump_map,
    heatmap_image_array,
    load_map,
    parse_map,
    save_heatmap,
    save_map,
)
from raycover.propagation import PlaneCrossing, TraceConfig, Transmitter
from raycover.scene import load_scene


def sample_map():
    grid = CoverageGrid(x0=-2.0, y0=1.0, cell_size=0.5, n_i=6, n_j=4, height=1.5)
    crossings = [
        PlaneCrossing((-1.9, 1.1), 1e-6, 5.0, 0.9, 0),
        PlaneCrossing((0.9, 2.9), 2e-7, 11.0, 0.4, 1),
        PlaneCrossing((0.9, 2.9), 4e-8, 17.0, 0.3, 2),
    ]
    meta = MapMeta(seed=9, rays=1000, max_depth=3, tx={"x": 0.0, "y": 0.0, "z": 5.0})
    return accumulate_map(grid, crossings, 1000, meta=meta)


def test_document_round_trip():
    cmap = sample_map()
    again = parse_map(dump_map(cmap))
    assert again.grid == cmap.grid
    np.testing.assert_allclose(again.gain, cmap.gain, rtol=1e-9)
    np.testing.assert_array_equal(again.hits, cmap.hits)
    assert again.meta.seed == 9
    assert again.meta.rays == 1000
    assert again.meta.tx["z"] == 5.0


def test_dump_is_deterministic():
    assert dump_map(sample_map()) == dump_map(sample_map())


def test_file_round_trip(tmp_path):
    path = tmp_path / "cov.map"
    save_map(sample_map(), path)
    again = load_map(path)
    assert again.grid == sample_map().grid


def test_missing_version_line():
    with pytest.raises(MapFormatError, match="header line"):
        parse_map("gain\n0 0\n")


def test_corrupt_header_json():
    doc = "# raycover-map v1\n{not json\ngain\n"
    with pytest.raises(MapFormatError, match="bad map header"):
        parse_map(doc)


def test_truncated_gain_section():
    cmap = sample_map()
    lines = dump_map(cmap).splitlines()
    with pytest.raises(MapFormatError, match="truncated"):
        parse_map("\n".join(lines[:4]))


def test_shape_mismatch():
    cmap = sample_map()
    text = dump_map(cmap)
    # drop one value from the first gain row
    lines = text.splitlines()
    lines[3] = " ".join(lines[3].split()[:-1])
    with pytest.raises(MapFormatError):
        parse_map("\n".join(lines))


def test_simulated_map_document_roundtrip_and_determinism():
    scene = load_scene("")
    tx = Transmitter(position=(0.0, 0.0, 8.0), frequency_hz=2.4e9)
    grid = make_grid((-5, -5, 5, 5), 1.0, 1.5)
    cfg = TraceConfig(ray_budget=50_000, seed=3, max_depth=0)
    doc_a = dump_map(simulate_coverage(scene, tx, grid, cfg, workers=1))
    doc_b = dump_map(simulate_coverage(scene, tx, grid, cfg, workers=8))
    assert doc_a == doc_b  # worker count cannot leak into the document


def test_heatmap_image_orientation():
    # cell (i=0, j=n_j-1) is the north-west corner -> image row 0, col 0
    cmap = sample_map()
    cmap.gain[:] = 0
    cmap.hits[:] = 0
    cmap.gain[0, cmap.grid.n_j - 1] = 1.0
    cmap.hits[0, cmap.grid.n_j - 1] = 1
    heat = render_heatmap(cmap, "viridis", (-10, 10))
    img = heatmap_image_array(heat)
    assert img.shape == (cmap.grid.n_j, cmap.grid.n_i, 3)
    assert img[0, 0].any()  # the lit cell
    assert not img[-1, -1].any()  # no-data stays black


def test_save_heatmap_png_and_ppm(tmp_path):
    heat = render_heatmap(sample_map(), "viridis", (-140, -40))
    png = tmp_path / "map.png"
    ppm = tmp_path / "map.ppm"
    save_heatmap(heat, png)
    save_heatmap(heat, ppm)
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    data = ppm.read_bytes()
    assert data.startswith(b"P6\n6 4\n255\n")
    assert len(data) == len(b"P6\n6 4\n255\n") + 6 * 4 * 3

    from PIL import Image

    img = np.asarray(Image.open(png))
    np.testing.assert_array_equal(img, heatmap_image_array(heat))
