import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermatch.imagekit import (
    IDENTITY,
    CoordMap,
    ImageFormatError,
    TransformSpec,
    apply_transform,
    decode_pgm,
    encode_pgm,
    load_image,
    map_point,
    save_image,
    table1_transforms,
)


def test_load_pgm_binary_rescales(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 255, 0]))
    np.testing.assert_array_equal(load_image(p), [[0.0, 1.0], [1.0, 0.0]])


def test_load_pgm_single_pixel(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5 1 1 255\n" + bytes([128]))
    assert load_image(p)[0, 0] == 128 / 255


def test_ascii_pgm_with_comment():
    img = decode_pgm(b"P2\n# note\n3 1\n10\n0 5 10\n")
    np.testing.assert_array_equal(img, [[0.0, 0.5, 1.0]])


@pytest.mark.parametrize("buf", [b"P5\n2 2", b"P5\n2", b"", b"P5\n2 2\n255\n\x00"])
def test_truncated_pgm_is_format_error(buf):
    with pytest.raises(ImageFormatError):
        decode_pgm(buf)


def test_unsupported_format(tmp_path):
    p = tmp_path / "c.bmp"
    p.write_bytes(b"BM garbage")
    with pytest.raises(ImageFormatError):
        load_image(p)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "nope.pgm")


@pytest.mark.parametrize("maxval", [255, 65535])
def test_p5_round_trip_is_bit_exact(tmp_path, rng, maxval):
    raw = rng.integers(0, maxval + 1, size=(7, 9))
    img = raw / maxval
    p = tmp_path / "r.pgm"
    save_image(img, p, maxval=maxval)
    back = load_image(p)
    np.testing.assert_array_equal(np.round(back * maxval), raw)
    assert encode_pgm(back, maxval) == p.read_bytes()


def test_png_color_is_averaged(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[1, 1] = (255, 255, 255)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    img = load_image(tmp_path / "c.png")
    assert img[0, 0] == pytest.approx(1 / 3)
    assert img[1, 1] == 1.0


def test_brightness_example():
    out, cm = apply_transform(np.full((4, 4), 0.5), TransformSpec("brightness", -0.2))
    np.testing.assert_allclose(out, 0.3, atol=1e-15)
    assert cm.is_identity


def test_contrast_pivot_and_clip():
    out, _ = apply_transform(np.array([[0.5, 0.6, 0.0, 1.0]]), TransformSpec("contrast", 1.2))
    np.testing.assert_allclose(out, [[0.5, 0.62, 0.0, 1.0]])


def test_scale_maps_points():
    _, cm = apply_transform(np.zeros((200, 200)), TransformSpec("scale", 0.5))
    assert map_point(cm, (100, 100)) == pytest.approx((50, 50))
    _, cm = apply_transform(np.zeros((200, 200)), TransformSpec("scale", 0.7))
    assert map_point(cm, (100, 0)) == pytest.approx((70, 0))


def test_scale_output_size():
    out, _ = apply_transform(np.zeros((100, 60)), TransformSpec("scale", 0.5))
    assert out.shape == (50, 30)


def test_rotate_matches_rotation_matrix():
    h, w = 101, 81
    _, cm = apply_transform(np.zeros((h, w)), TransformSpec("rotate", 10.0))
    cx, cy = (w - 1) / 2, (h - 1) / 2
    th = math.radians(10)
    p = (70.0, 12.0)
    dx, dy = p[0] - cx, p[1] - cy
    want = (cx + math.cos(th) * dx - math.sin(th) * dy, cy + math.sin(th) * dx + math.cos(th) * dy)
    assert map_point(cm, p) == pytest.approx(want, abs=1e-12)


def test_skew_is_horizontal_shear():
    _, cm = apply_transform(np.zeros((11, 11)), TransformSpec("skew", 7.0))
    x, y = map_point(cm, (5.0, 9.0))
    assert y == pytest.approx(9.0)
    assert x == pytest.approx(5.0 + 4.0 * math.tan(math.radians(7)))


def test_identity_is_bit_identical(rng):
    img = rng.random((9, 13))
    out, cm = apply_transform(img, TransformSpec("identity"))
    assert out.tobytes() == img.tobytes() and out is not img
    assert cm == IDENTITY


def test_rotation_content_moves_with_map():
    img = np.zeros((61, 61))
    img[20, 40] = 1.0
    out, cm = apply_transform(img, TransformSpec("rotate", 30.0))
    x, y = map_point(cm, (40, 20))
    ys, xs = np.nonzero((out > 0) & (out != 0.5))
    assert np.hypot(xs.mean() - x, ys.mean() - y) < 1.0


def test_noise_fraction_and_determinism(rng):
    img = np.full((50, 40), 0.5)
    a, cm = apply_transform(img, TransformSpec("noise", 0.1, seed=3))
    b, _ = apply_transform(img, TransformSpec("noise", 0.1, seed=3))
    assert a.tobytes() == b.tobytes()
    assert cm.is_identity
    assert np.count_nonzero(a != 0.5) == 200
    c, _ = apply_transform(img, TransformSpec("noise", 0.1, seed=4))
    assert c.tobytes() != a.tobytes()


def test_composite_scale_round_trip():
    spec = TransformSpec.parse("scale:0.5+scale:2")
    _, cm = apply_transform(np.zeros((64, 64)), spec)
    assert map_point(cm, (13.25, 40.5)) == pytest.approx((13.25, 40.5), abs=1e-9)


def test_photometric_outputs_stay_in_range(rng):
    img = rng.random((20, 20))
    for spec in table1_transforms(0):
        out, _ = apply_transform(img, spec)
        assert np.all(np.isfinite(out)) and out.min() >= 0.0 and out.max() <= 1.0


def test_table_rows():
    names = [s.name for s in table1_transforms()]
    assert len(names) == 9 and names[0].startswith("A_") and names[-1].startswith("I_")
    kinds = [p.kind for p in table1_transforms()[-1].parts]
    assert kinds == ["contrast", "brightness", "scale", "noise", "skew"]


def test_photometric_maps_are_identity():
    for kind, v in (("contrast", 1.2), ("brightness", -0.2), ("noise", 0.1)):
        _, cm = apply_transform(np.full((5, 5), 0.5), TransformSpec(kind, v))
        assert cm.is_identity


@pytest.mark.parametrize("bad", [("scale", 0.0), ("scale", -1.0), ("noise", 1.5), ("warp", 1.0)])
def test_invalid_specs(bad):
    with pytest.raises(ValueError):
        TransformSpec(*bad)


def test_parse_errors():
    with pytest.raises(ValueError):
        TransformSpec.parse("scale")


def test_coordmap_csv_round_trip():
    cm = CoordMap((0.9, 0.1, -0.2, 1.1), (3.5, -2.0))
    assert CoordMap.from_csv_row(cm.to_csv_row()) == cm


def test_singular_coordmap_rejected():
    with pytest.raises(ValueError):
        CoordMap((1.0, 2.0, 2.0, 4.0))


specs = st.sampled_from(table1_transforms(0) + [TransformSpec.parse("rotate:-25+scale:1.3+skew:3")])


@settings(max_examples=30, deadline=None)
@given(spec=specs, seed=st.integers(0, 2**31))
def test_forward_inverse_identity(spec, seed):
    from hiermatch.imagekit import geometric_map

    cm = IDENTITY
    for part in (spec.parts or (spec,)):
        step, _ = geometric_map(part, (100, 120))
        cm = cm.then(step)
    inv = cm.inverse()
    pts = np.random.default_rng(seed).uniform(-500, 500, size=(100, 2))
    for p in pts:
        assert map_point(inv, map_point(cm, p)) == pytest.approx(tuple(p), abs=1e-9)
