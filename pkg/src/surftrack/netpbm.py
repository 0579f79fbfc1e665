"""Binary netpbm readers and writers.

Formats used by the pipeline:

  PGM P5, maxval 255          - intensity frames (Image), k -> k/255
  PGM P5, maxval 65535        - label maps (LabelMap), 16-bit big-endian
  PBM P4                      - edge masks (EdgeMap), 1 bit/pixel, row-padded
  PPM P6, maxval 255          - colorized label renders only

Round trips are bit-exact: an 8-bit file read into an Image and written back
reproduces the original bytes, and any LabelMap with labels <= 65535 survives
write/read unchanged.

Dataset file naming: frame_%04d.pgm, super_%04d.pgm, edges_%04d.pbm,
truth_%04d.pgm.
"""

from __future__ import annotations

import numpy as np

from .raster import EdgeMap, Image, LabelMap


class NetpbmError(ValueError):
    """Base for malformed netpbm data."""


class BadMagicError(NetpbmError):
    """File does not start with the expected P4/P5/P6 magic."""


class BadHeaderError(NetpbmError):
    """Width, height, or maxval field missing or invalid."""


class TruncatedPayloadError(NetpbmError):
    """Pixel payload shorter than the header promises."""


FRAME_PATTERN = "frame_%04d.pgm"
SUPER_PATTERN = "super_%04d.pgm"
EDGES_PATTERN = "edges_%04d.pbm"
TRUTH_PATTERN = "truth_%04d.pgm"


def _load(src) -> bytes:
    """Accept raw bytes or a path."""
    if isinstance(src, (bytes, bytearray)):
        return bytes(src)
    with open(src, "rb") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# Header parsing
# ---------------------------------------------------------------------------

def _parse_header(data: bytes, magic: bytes, n_fields: int):
    """Parse 'Pn <fields...>' allowing comments and arbitrary whitespace.

    Returns (fields, payload_offset).
    """
    if not data.startswith(magic):
        raise BadMagicError(
            f"bad magic: expected {magic.decode()}, got {data[:2]!r}")
    pos = len(magic)
    fields = []
    while len(fields) < n_fields:
        # skip whitespace and comment lines
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise BadHeaderError("unterminated comment in header")
            pos = nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token:
            raise BadHeaderError(
                f"header field {len(fields) + 1} missing (of {n_fields})")
        try:
            fields.append(int(token))
        except ValueError:
            raise BadHeaderError(
                f"header field {len(fields) + 1} not an integer: {token!r}")
    if pos >= len(data):
        raise TruncatedPayloadError("no payload after header")
    pos += 1  # exactly one whitespace byte separates header from payload
    return fields, pos


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def write_pgm(raster, path=None) -> bytes:
    """Encode an Image (8-bit, k = round(v*255)) or LabelMap (16-bit BE).

    Returns the encoded bytes; writes them to ``path`` when one is given.
    """
    if isinstance(raster, Image):
        payload = np.rint(raster.data * 255.0).astype(np.uint8)
        maxval = 255
        body = payload.tobytes()
    elif isinstance(raster, LabelMap):
        if raster.labels.max(initial=0) > 65535:
            raise ValueError(
                f"label {int(raster.labels.max())} exceeds 16-bit PGM range")
        payload = raster.labels.astype(">u2")
        maxval = 65535
        body = payload.tobytes()
    else:
        raise TypeError(f"cannot write {type(raster).__name__} as PGM")
    header = f"P5\n{raster.width} {raster.height}\n{maxval}\n".encode()
    raw = header + body
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(raw)
    return raw


def read_pgm(src):
    """Decode a binary PGM. maxval <= 255 yields an Image, else a LabelMap.

    ``src`` is raw bytes or a path to read them from.
    """
    data = _load(src)
    (width, height, maxval), pos = _parse_header(data, b"P5", 3)
    if width <= 0 or height <= 0:
        raise BadHeaderError(f"bad dimensions {width}x{height}")
    if not (0 < maxval < 65536):
        raise BadHeaderError(f"bad maxval {maxval}")
    count = width * height
    if maxval <= 255:
        if len(data) - pos < count:
            raise TruncatedPayloadError(
                f"payload has {len(data) - pos} bytes, need {count}")
        arr = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
        return Image(arr.reshape(height, width).astype(np.float64) / maxval)
    if len(data) - pos < 2 * count:
        raise TruncatedPayloadError(
            f"payload has {len(data) - pos} bytes, need {2 * count}")
    arr = np.frombuffer(data, dtype=">u2", count=count, offset=pos)
    return LabelMap(arr.reshape(height, width).astype(np.int32))


# ---------------------------------------------------------------------------
# PBM
# ---------------------------------------------------------------------------

def write_pbm(edges: EdgeMap, path=None) -> bytes:
    """Encode a P4 bitmap; 1 = edge pixel, rows padded to whole bytes."""
    packed = np.packbits(edges.mask.astype(np.uint8), axis=1)
    raw = f"P4\n{edges.width} {edges.height}\n".encode() + packed.tobytes()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(raw)
    return raw


def read_pbm(src) -> EdgeMap:
    data = _load(src)
    (width, height), pos = _parse_header(data, b"P4", 2)
    if width <= 0 or height <= 0:
        raise BadHeaderError(f"bad dimensions {width}x{height}")
    row_bytes = (width + 7) // 8
    need = row_bytes * height
    if len(data) - pos < need:
        raise TruncatedPayloadError(
            f"payload has {len(data) - pos} bytes, need {need}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    bits = np.unpackbits(arr.reshape(height, row_bytes), axis=1)[:, :width]
    return EdgeMap(bits.astype(bool))


# ---------------------------------------------------------------------------
# PPM
# ---------------------------------------------------------------------------

def write_ppm(rgb: np.ndarray, path=None) -> bytes:
    """Encode an (h, w, 3) uint8 array as binary P6."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM needs (h, w, 3), got {arr.shape}")
    arr = arr.astype(np.uint8)
    raw = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode() + arr.tobytes()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(raw)
    return raw


def read_ppm(src) -> np.ndarray:
    data = _load(src)
    (width, height, maxval), pos = _parse_header(data, b"P6", 3)
    if width <= 0 or height <= 0:
        raise BadHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise BadHeaderError(f"unsupported PPM maxval {maxval}")
    need = width * height * 3
    if len(data) - pos < need:
        raise TruncatedPayloadError(
            f"payload has {len(data) - pos} bytes, need {need}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return arr.reshape(height, width, 3).copy()
