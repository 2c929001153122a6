"""Grayscale image I/O and the benchmark image transformations.

Images are plain ``float64`` arrays of shape ``(height, width)`` with values
in ``[0, 1]``. Pixel centers sit at integer coordinates; points are ``(x, y)``
with ``x`` along columns and ``y`` along rows.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Fill value for destination pixels that map outside the source frame.
OUT_OF_FRAME = 0.5


class ImageFormatError(ValueError):
    """Raised when a file is not a readable raster in a supported format."""


def as_image(data) -> np.ndarray:
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2D grayscale array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


# ---------------------------------------------------------------------------
# PGM / PNG
# ---------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(buf: bytes):
    """Parse magic, width, height, maxval; return them with the payload offset."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed PGM header: {exc}") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid PGM dimensions/maxval: {width}x{height}, {maxval}")
    # exactly one whitespace byte separates the header from binary data
    if pos >= len(buf) and magic == b"P5":
        raise ImageFormatError("truncated PGM: no pixel data")
    return magic, width, height, maxval, pos + 1


def decode_pgm(buf: bytes) -> np.ndarray:
    if len(buf) < 2 or buf[:2] not in (b"P2", b"P5"):
        raise ImageFormatError("not a PGM file (expected P2 or P5 magic)")
    magic, width, height, maxval, offset = _read_header(buf)
    n = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        payload = buf[offset:offset + n * dtype.itemsize]
        if len(payload) < n * dtype.itemsize:
            raise ImageFormatError(f"truncated PGM: expected {n} pixels")
        values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        text = re.sub(rb"#[^\n]*", b"", buf[offset - 1:])
        try:
            values = np.array(text.split()[:n], dtype=np.float64)
        except ValueError:
            raise ImageFormatError("non-numeric pixel in ASCII PGM") from None
        if values.size < n:
            raise ImageFormatError(f"truncated PGM: expected {n} pixels, got {values.size}")
    if values.max(initial=0) > maxval:
        raise ImageFormatError("pixel value exceeds maxval")
    return (values / maxval).reshape(height, width)


def encode_pgm(img: np.ndarray, maxval: int = 255) -> bytes:
    img = as_image(img)
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    h, w = img.shape
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + q.astype(dtype).tobytes()


def load_image(path) -> np.ndarray:
    """Load a PGM (P2/P5) or PNG file as a grayscale image in ``[0, 1]``.

    Color PNGs are reduced to gray by averaging the RGB channels.
    """
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] in (b"P2", b"P5"):
        return decode_pgm(buf)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image as PILImage

        with PILImage.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            else:
                arr = np.asarray(im.convert("RGBA" if "A" in im.mode else "RGB"), dtype=np.float64)
                arr = arr[..., :3].mean(axis=2) / 255.0
        return np.clip(arr, 0.0, 1.0)
    raise ImageFormatError(f"unsupported image format: {path}")


def save_image(img: np.ndarray, path, maxval: int = 255) -> None:
    Path(path).write_bytes(encode_pgm(img, maxval))


# ---------------------------------------------------------------------------
# Coordinate maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoordMap:
    """Affine map ``p' = matrix @ p + translation`` from source to destination pixels."""

    matrix: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 1.0)
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        a, b, c, d = self.matrix
        if a * d - b * c == 0.0:
            raise ValueError("coordinate map is singular")

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.float64).reshape(2, 2)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation, dtype=np.float64)

    def inverse(self) -> CoordMap:
        inv = np.linalg.inv(self.A)
        return CoordMap(tuple(inv.ravel().tolist()), tuple((-inv @ self.t).tolist()))

    def then(self, other: CoordMap) -> CoordMap:
        """The map applying ``self`` first and ``other`` second."""
        A = other.A @ self.A
        t = other.A @ self.t + other.t
        return CoordMap(tuple(A.ravel().tolist()), tuple(t.tolist()))

    def is_identity(self) -> bool:
        return self.matrix == (1.0, 0.0, 0.0, 1.0) and self.translation == (0.0, 0.0)

    def to_csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in (*self.matrix, *self.translation))

    @classmethod
    def from_csv_row(cls, row: str) -> CoordMap:
        vals = [float(v) for v in row.strip().split(",")]
        if len(vals) != 6:
            raise ValueError(f"expected 6 values (a,b,c,d,tx,ty), got {len(vals)}")
        return cls(tuple(vals[:4]), tuple(vals[4:]))


IDENTITY = CoordMap()


def map_point(cm: CoordMap, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    a, b, c, d = cm.matrix
    tx, ty = cm.translation
    return (a * x + b * y + tx, c * x + d * y + ty)


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------

_KINDS = ("identity", "contrast", "brightness", "rotate", "scale", "skew", "noise", "composite")


@dataclass(frozen=True)
class TransformSpec:
    """One benchmark transformation.

    ``value`` is the factor, delta, angle in degrees, or noise fraction
    depending on ``kind``; composites list their members in ``parts``.
    """

    kind: str
    value: float = 0.0
    parts: tuple[TransformSpec, ...] = ()
    label: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "scale" and not self.value > 0:
            raise ValueError("scale factor must be > 0")
        if self.kind == "noise" and not 0.0 <= self.value <= 1.0:
            raise ValueError("noise fraction must be in [0, 1]")
        if self.kind == "composite" and not self.parts:
            raise ValueError("composite transform needs at least one member")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "composite":
            return "+".join(p.name for p in self.parts)
        if self.kind == "identity":
            return "identity"
        return f"{self.kind}:{self.value:g}"

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> TransformSpec:
        """Parse ``kind:value`` or ``kind:value+kind:value`` (composite)."""
        text = text.strip()
        if "+" in text:
            parts = tuple(cls.parse(p, seed) for p in text.split("+"))
            return cls("composite", parts=parts, seed=seed)
        kind, _, val = text.partition(":")
        kind = kind.strip().lower()
        if kind == "identity":
            return cls("identity", seed=seed)
        if not val:
            raise ValueError(f"transform {text!r} needs a value, e.g. scale:0.5")
        return cls(kind, float(val), seed=seed)


def table1_transforms(seed: int = 0) -> list[TransformSpec]:
    """The nine transformations A-I of the robustness table, in order."""
    T = TransformSpec
    return [
        T("contrast", 1.2, label="A_contrast_1.2"),
        T("brightness", -0.2, label="B_brightness_-0.2"),
        T("rotate", 10.0, label="C_rotate_10"),
        T("scale", 0.7, label="D_scale_0.7"),
        T("scale", 0.5, label="E_scale_0.5"),
        T("noise", 0.1, label="F_noise_10pct", seed=seed),
        T("skew", 7.0, label="G_skew_7"),
        T("scale", 1.5, label="H_scale_1.5"),
        T(
            "composite",
            parts=(
                T("contrast", 1.2),
                T("brightness", -0.2),
                T("scale", 0.7),
                T("noise", 0.1, seed=seed),
                T("skew", 7.0),
            ),
            label="I_all_ABDFG",
            seed=seed,
        ),
    ]


def _center(shape) -> np.ndarray:
    h, w = shape
    return np.array([(w - 1) / 2.0, (h - 1) / 2.0])


def _about_center(A: np.ndarray, shape) -> CoordMap:
    c = _center(shape)
    return CoordMap(tuple(A.ravel().tolist()), tuple((c - A @ c).tolist()))


def geometric_map(spec: TransformSpec, shape) -> tuple[CoordMap, tuple[int, int]]:
    """CoordMap and output shape for a single non-composite transform."""
    h, w = shape
    if spec.kind == "scale":
        s = spec.value
        out = (max(1, int(round(h * s))), max(1, int(round(w * s))))
        return CoordMap((s, 0.0, 0.0, s)), out
    if spec.kind == "rotate":
        th = math.radians(spec.value)
        R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        return _about_center(R, shape), shape
    if spec.kind == "skew":
        S = np.array([[1.0, math.tan(math.radians(spec.value))], [0.0, 1.0]])
        return _about_center(S, shape), shape
    return IDENTITY, shape


def warp_bilinear(img: np.ndarray, cm: CoordMap, out_shape) -> np.ndarray:
    """Inverse-mapped bilinear resampling; samples outside the frame get ``OUT_OF_FRAME``."""
    h, w = img.shape
    inv = cm.inverse()
    yy, xx = np.mgrid[0:out_shape[0], 0:out_shape[1]].astype(np.float64)
    a, b, c, d = inv.matrix
    tx, ty = inv.translation
    sx = a * xx + b * yy + tx
    sy = c * xx + d * yy + ty
    inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    sx = np.where(inside, sx, 0.0)
    sy = np.where(inside, sy, 0.0)
    x0 = np.minimum(np.floor(sx).astype(np.intp), w - 1)
    y0 = np.minimum(np.floor(sy).astype(np.intp), h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.where(inside, out, OUT_OF_FRAME)


def apply_transform(img: np.ndarray, spec: TransformSpec) -> tuple[np.ndarray, CoordMap]:
    """Apply ``spec`` to ``img``; return the new image and the exact source-to-output map."""
    img = as_image(img)
    kind = spec.kind
    if kind == "composite":
        cm = IDENTITY
        for part in spec.parts:
            img, step = apply_transform(img, part)
            cm = cm.then(step)
        return img, cm
    if kind == "identity":
        return img.copy(), IDENTITY
    if kind == "contrast":
        return np.clip(0.5 + spec.value * (img - 0.5), 0.0, 1.0), IDENTITY
    if kind == "brightness":
        return np.clip(img + spec.value, 0.0, 1.0), IDENTITY
    if kind == "noise":
        rng = np.random.default_rng(spec.seed)
        out = img.copy()
        k = int(round(spec.value * img.size))
        idx = rng.choice(img.size, size=k, replace=False)
        out.ravel()[idx] = rng.random(k)
        return out, IDENTITY
    cm, out_shape = geometric_map(spec, img.shape)
    if cm.is_identity() and out_shape == img.shape:
        return img.copy(), cm
    return warp_bilinear(img, cm, out_shape), cm
