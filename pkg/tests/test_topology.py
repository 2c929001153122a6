import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiermatch.topology import (
    SQRT2,
    StackConfig,
    absolute_rf_centers,
    geometry_rows,
    hex_offsets,
    layer_geometry,
    stack_geometry,
)

from oracles import hex19


def _as_set(pts):
    return {(round(x, 9), round(y, 9)) for x, y in pts}


def test_hex_known_points():
    pts = _as_set(hex_offsets(1.0))
    for p in [(0, 0), (1, 0), (2, 0), (1.5, math.sqrt(3) / 2)]:
        assert (round(p[0], 9), round(p[1], 9)) in pts


def test_hex_matches_lattice_enumeration():
    assert _as_set(hex_offsets(2.5)) == _as_set(hex19(2.5))


def test_hex_ring_counts_and_order():
    pts = hex_offsets(1.0)
    r = np.hypot(pts[:, 0], pts[:, 1])
    assert r[0] == 0.0
    np.testing.assert_allclose(r[1:7], 1.0)
    assert np.all(r[7:] > 1.5)
    assert len(pts) == 19 == 1 + 6 + 12
    ang = np.arctan2(pts[1:7, 1], pts[1:7, 0]) % (2 * math.pi)
    assert ang[0] == 0.0 and np.all(np.diff(ang) > 0)


@given(st.floats(0.01, 100))
def test_hex_distinct_min_distance_centroid(spacing):
    pts = hex_offsets(spacing)
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    d[np.diag_indices(19)] = np.inf
    assert d.min() == pytest.approx(spacing, rel=1e-12)
    assert np.abs(pts.mean(axis=0)).max() <= 1e-12 * max(1.0, spacing)


def test_hex_rejects_nonpositive():
    with pytest.raises(ValueError):
        hex_offsets(0.0)


def test_layer_sigma_examples():
    cfg = StackConfig(base_sigma=2.0)
    assert layer_geometry(cfg, 1).sigma == 2.0
    assert layer_geometry(cfg, 3).sigma == pytest.approx(4.0, abs=1e-12)
    g = layer_geometry(cfg, 1)
    assert g.rf_spacing == pytest.approx(2 * math.sqrt(2) * 2)
    assert np.hypot(*g.rf_offsets[1]) == pytest.approx(5.656854249, abs=1e-9)


def test_element_spacing_factor():
    cfg = StackConfig(base_sigma=2.0, element_spacing_factor=2.0)
    g = layer_geometry(cfg, 1)
    assert np.hypot(*g.element_offsets[1]) == pytest.approx(2.0 * 2 * g.rf_radius * 2)


def test_layers_scale_by_sqrt2():
    cfg = StackConfig(num_layers=6)
    gs = stack_geometry(cfg)
    for a, b in zip(gs, gs[1:]):
        assert b.rf_radius / a.rf_radius == pytest.approx(SQRT2, abs=1e-12)
        np.testing.assert_allclose(b.rf_offsets, SQRT2 * a.rf_offsets, atol=1e-12)
        np.testing.assert_allclose(b.element_offsets, SQRT2 * a.element_offsets, atol=1e-12)
        assert b.element_radius / a.element_radius == pytest.approx(SQRT2, abs=1e-12)


def test_element_footprint_diameter():
    g = layer_geometry(StackConfig(), 2)
    pts = g.rf_offsets
    span = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1)).max()
    assert span + 2 * g.rf_radius == pytest.approx(2 * g.element_radius)


def test_layer_out_of_range():
    with pytest.raises(ValueError):
        layer_geometry(StackConfig(num_layers=4), 5)
    with pytest.raises(ValueError):
        layer_geometry(StackConfig(), 0)


@pytest.mark.parametrize(
    "kw", [dict(num_layers=1), dict(base_sigma=0.0), dict(orientations=0), dict(element_spacing_factor=-1.0)]
)
def test_stack_config_validation(kw):
    with pytest.raises(ValueError):
        StackConfig(**kw)


def test_absolute_rf_centers():
    g = layer_geometry(StackConfig(), 2)
    np.testing.assert_array_equal(absolute_rf_centers(g, (0, 0), 1), g.rf_offsets)
    c = absolute_rf_centers(g, (100.0, 50.0), 1)
    assert tuple(c[0]) == (100.0, 50.0)
    d = np.array([3.5, -7.0])
    for l in (1, 7, 19):
        np.testing.assert_allclose(absolute_rf_centers(g, d + (10, 10), l), absolute_rf_centers(g, (10, 10), l) + d)
    np.testing.assert_allclose(g.rf_centers((10, 10))[6], absolute_rf_centers(g, (10, 10), 7))
    with pytest.raises(ValueError):
        absolute_rf_centers(g, (0, 0), 20)


def test_geometry_rows_are_stable():
    cfg = StackConfig(num_layers=3)
    rows = list(geometry_rows(cfg))
    assert len(rows) == 3 * 38
    assert rows == list(geometry_rows(cfg))
    assert rows[0][:3] == (1, "element", 1) and rows[19][:3] == (1, "rf", 1)
