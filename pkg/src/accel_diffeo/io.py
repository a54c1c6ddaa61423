"""Image and flow file IO.

PGM: binary (P5) and plain (P2) greymaps with maxval <= 255. Loaded
intensities are divided by maxval; saving clamps to [0, 1] and writes 8-bit P5.

DFLO flow files store a displacement field u (phi(x) = x + u(x)), in pixels:

    bytes 0-3    b"DFLO"
    bytes 4-7    width,  uint32 little-endian
    bytes 8-11   height, uint32 little-endian
    bytes 12-    row-major (ux, uy) pairs, float32 little-endian

so a W x H file is exactly 12 + 8 W H bytes. The warped image is I1(x + u(x)),
which should match I0 after registration.
"""
import struct
from pathlib import Path

import numpy as np

from .fields import GridSpec, MapField, ScalarField

FLOW_MAGIC = b"DFLO"
_FLOW_HEADER = struct.Struct("<4sII")


class PgmError(ValueError):
    """Base class for unreadable PGM files."""


class PgmHeaderError(PgmError):
    pass


class PgmTruncatedError(PgmError):
    pass


class PgmMaxvalError(PgmError):
    pass


class FlowError(ValueError):
    """Base class for unreadable flow files."""


class FlowMagicError(FlowError):
    pass


class FlowSizeError(FlowError):
    pass


# -- PGM ----------------------------------------------------------------------

def _header_tokens(raw, count):
    """First ``count`` whitespace-separated header tokens, skipping ``#``
    comments. Returns the tokens and the offset just past the last one."""
    tokens = []
    i, n = 0, len(raw)
    while len(tokens) < count:
        while i < n and raw[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise PgmHeaderError("header ends early")
        if raw[i:i + 1] == b"#":
            while i < n and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not raw[i:i + 1].isspace() and raw[i:i + 1] != b"#":
            i += 1
        tokens.append(raw[start:i])
    return tokens, i


def parse_pgm(raw: bytes) -> np.ndarray:
    """Decode PGM bytes into a float64 raster in [0, 1]."""
    tokens, end = _header_tokens(raw, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise PgmHeaderError(f"unsupported magic {magic!r}; expected P2 or P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PgmHeaderError(f"non-integer header fields {tokens[1:]}") from None
    if width <= 0 or height <= 0:
        raise PgmHeaderError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise PgmMaxvalError(f"maxval {maxval} not in 1..255")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the payload
        payload = raw[end + 1:]
        if len(payload) < count:
            raise PgmTruncatedError(f"payload has {len(payload)} of {count} bytes")
        values = np.frombuffer(payload, dtype=np.uint8, count=count).astype(np.float64)
    else:
        body = raw[end:].split()
        if len(body) < count:
            raise PgmTruncatedError(f"payload has {len(body)} of {count} samples")
        try:
            values = np.array([int(t) for t in body[:count]], dtype=np.float64)
        except ValueError:
            raise PgmHeaderError("non-integer sample in P2 payload") from None
    if np.any(values > maxval):
        raise PgmMaxvalError(f"sample exceeds maxval {maxval}")
    return values.reshape(height, width) / maxval


def load_pgm(path, dx=1.0) -> ScalarField:
    return ScalarField.from_array(parse_pgm(Path(path).read_bytes()), dx)


def encode_pgm(data, plain=False) -> bytes:
    levels = np.rint(np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0) * 255)
    levels = levels.astype(np.uint8)
    h, w = levels.shape
    if plain:
        rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
        return f"P2\n{w} {h}\n255\n{rows}\n".encode("ascii")
    return f"P5\n{w} {h}\n255\n".encode("ascii") + levels.tobytes()


def save_pgm(image: ScalarField, path, plain=False):
    Path(path).write_bytes(encode_pgm(image.data, plain))


# -- DFLO ---------------------------------------------------------------------

def encode_flow(m: MapField) -> bytes:
    g = m.grid
    pairs = np.empty(g.shape + (2,), dtype="<f4")
    pairs[..., 0] = m.ux
    pairs[..., 1] = m.uy
    return _FLOW_HEADER.pack(FLOW_MAGIC, g.width, g.height) + pairs.tobytes()


def decode_flow(raw: bytes, dx=1.0) -> MapField:
    if len(raw) < _FLOW_HEADER.size:
        raise FlowSizeError(f"file has {len(raw)} bytes, shorter than the header")
    magic, width, height = _FLOW_HEADER.unpack_from(raw)
    if magic != FLOW_MAGIC:
        raise FlowMagicError(f"bad magic {magic!r}; expected {FLOW_MAGIC!r}")
    expected = _FLOW_HEADER.size + 8 * width * height
    if len(raw) != expected:
        raise FlowSizeError(f"{width}x{height} flow needs {expected} bytes, file has {len(raw)}")
    pairs = np.frombuffer(raw, dtype="<f4", offset=_FLOW_HEADER.size)
    pairs = pairs.reshape(height, width, 2).astype(np.float64)
    return MapField(GridSpec(width, height, dx), pairs[..., 0], pairs[..., 1])


def save_flow(m: MapField, path):
    Path(path).write_bytes(encode_flow(m))


def load_flow(path, dx=1.0) -> MapField:
    return decode_flow(Path(path).read_bytes(), dx)
