"""Training of key-point templates and the binary ``.hmtp`` file format.

File layout (little-endian)::

    b"HMTP" | u32 version | section(header) | section(key point) * n

where ``section(x) = u32 length | payload | u32 crc32(payload)``.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import CoverageError, ImageResponses
from .topology import N_UNITS, StackConfig, layer_geometry

MAGIC = b"HMTP"
FORMAT_VERSION = 1


class TemplateError(ValueError):
    pass


class ChecksumError(TemplateError):
    pass


class VersionError(TemplateError):
    pass


@dataclass(eq=False)
class KeyPointTemplate:
    training_location: tuple[float, float]
    features: np.ndarray  # (M, 19, 19, O) uint8, [layer-1, element, rf, orientation]
    offsets: np.ndarray  # (M, 19, 2) element center minus training location

    @property
    def num_layers(self) -> int:
        return self.features.shape[0]

    def layer(self, m: int) -> np.ndarray:
        return self.features[m - 1]

    def offset(self, m: int, element: int) -> np.ndarray:
        return self.offsets[m - 1, element - 1]

    def __eq__(self, other):
        if not isinstance(other, KeyPointTemplate):
            return NotImplemented
        return (
            self.training_location == other.training_location
            and self.features.dtype == other.features.dtype
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.offsets, other.offsets)
        )


@dataclass(eq=True)
class Template:
    stack_config: StackConfig
    key_points: list[KeyPointTemplate]
    source_image_id: str = ""
    format_version: int = FORMAT_VERSION


def check_trainable(shape, cfg: StackConfig, point) -> None:
    """Raise CoverageError unless every layer's central element fits inside the image."""
    h, w = shape
    x, y = float(point[0]), float(point[1])
    for m in range(1, cfg.num_layers + 1):
        r = layer_geometry(cfg, m).element_radius
        if not (r <= x <= w - 1 - r and r <= y <= h - 1 - r):
            raise CoverageError(
                f"point ({x:g}, {y:g}) is too close to the border for layer {m} "
                f"(needs {r:.1f} px margin in a {w}x{h} image)"
            )


def train_key_point(resp: ImageResponses, point) -> KeyPointTemplate:
    cfg = resp.cfg
    check_trainable(resp.shape, cfg, point)
    loc = (float(point[0]), float(point[1]))
    feats = np.stack([resp.layer_features(m, loc) for m in range(1, cfg.num_layers + 1)])
    offs = np.stack([layer_geometry(cfg, m).element_offsets for m in range(1, cfg.num_layers + 1)])
    return KeyPointTemplate(loc, feats, offs.copy())


def train(img: np.ndarray, points, cfg: StackConfig | None = None, source_image_id: str = "") -> Template:
    """Build a template holding every layer's feature vectors around each point."""
    cfg = cfg or StackConfig()
    points = list(points)
    if not points:
        raise ValueError("need at least one key point")
    resp = ImageResponses(img, cfg)
    return Template(cfg, [train_key_point(resp, p) for p in points], source_image_id)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<IdIddI")


def _section(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def dumps(t: Template) -> bytes:
    cfg = t.stack_config
    src = t.source_image_id.encode("utf-8")
    header = _HEADER.pack(
        cfg.num_layers, cfg.base_sigma, cfg.orientations, cfg.element_spacing_factor, cfg.bandwidth, len(t.key_points)
    ) + struct.pack("<I", len(src)) + src
    out = [MAGIC, struct.pack("<I", t.format_version), _section(header)]
    for kp in t.key_points:
        payload = (
            struct.pack("<dd", *kp.training_location)
            + np.ascontiguousarray(kp.features, dtype="u1").tobytes()
            + np.ascontiguousarray(kp.offsets, dtype="<f8").tobytes()
        )
        out.append(_section(payload))
    return b"".join(out)


def _read_section(buf: bytes, pos: int) -> tuple[bytes, int]:
    if pos + 4 > len(buf):
        raise ChecksumError("template file truncated")
    (n,) = struct.unpack_from("<I", buf, pos)
    end = pos + 4 + n
    if end + 4 > len(buf):
        raise ChecksumError("template section length exceeds file size (corrupt file)")
    payload = buf[pos + 4:end]
    (crc,) = struct.unpack_from("<I", buf, end)
    if zlib.crc32(payload) != crc:
        raise ChecksumError("template section checksum mismatch (corrupt file)")
    return payload, end + 4


def loads(buf: bytes) -> Template:
    if buf[:4] != MAGIC:
        raise TemplateError("not a template file (bad magic)")
    if len(buf) < 8:
        raise ChecksumError("template file truncated")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"template format version {version} is not supported (expected {FORMAT_VERSION})")
    header, pos = _read_section(buf, 8)
    try:
        m, sigma, n_orient, factor, phi, n_kp = _HEADER.unpack_from(header)
        (src_len,) = struct.unpack_from("<I", header, _HEADER.size)
        src = header[_HEADER.size + 4:_HEADER.size + 4 + src_len].decode("utf-8")
        cfg = StackConfig(m, sigma, n_orient, factor, phi)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise TemplateError(f"malformed template header: {exc}") from None
    n_feat = m * N_UNITS * N_UNITS * n_orient
    n_off = m * N_UNITS * 2
    key_points = []
    for _ in range(n_kp):
        payload, pos = _read_section(buf, pos)
        if len(payload) != 16 + n_feat + 8 * n_off:
            raise TemplateError("key point section has the wrong size")
        loc = struct.unpack_from("<dd", payload)
        feats = np.frombuffer(payload, "u1", n_feat, 16).reshape(m, N_UNITS, N_UNITS, n_orient).copy()
        offs = np.frombuffer(payload, "<f8", n_off, 16 + n_feat).reshape(m, N_UNITS, 2).astype(np.float64)
        key_points.append(KeyPointTemplate(loc, feats, offs))
    if pos != len(buf):
        raise TemplateError("trailing bytes after the last key point")
    return Template(cfg, key_points, src, version)


def save_template(t: Template, path) -> None:
    Path(path).write_bytes(dumps(t))


def load_template(path) -> Template:
    return loads(Path(path).read_bytes())
