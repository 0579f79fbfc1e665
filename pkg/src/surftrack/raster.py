"""Core raster types and sub-pixel sampling.

Everything downstream (texture synthesis, Gabor tokens, the affine tracker)
works on these three buffers:

  Image    - single-channel intensities in [0,1], float64
  LabelMap - non-negative integer region labels (16-bit file range)
  EdgeMap  - boolean edge mask

Intensities are stored as reals so the optimizer sees sub-quantization
precision; 8-bit files map k -> k/255 (see netpbm).

Out-of-support convention: sampling outside [0, w-1] x [0, h-1] yields the
NaN sentinel, never a clamped value. Clamping would fabricate image content
that biases affine fits near borders, so callers mask such samples out of
inner products instead (with no renormalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Sentinel returned by sample_bilinear for coordinates outside the support.
OUT_OF_SUPPORT = float("nan")


def is_out_of_support(value: float) -> bool:
    """True when a sample carries the out-of-support sentinel."""
    return math.isnan(value)


# ---------------------------------------------------------------------------
# Raster types
# ---------------------------------------------------------------------------

class Image:
    """Single-channel intensity raster, row-major float64 in [0,1]."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"image data must be 2D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite (no NaN/Inf)")
        self.data = arr

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and np.array_equal(self.data, other.data)


class LabelMap:
    """Integer region labels. Label 0 is reserved for the background in
    tracking outputs; intermediate maps may use any non-negative labels."""

    __slots__ = ("labels",)

    def __init__(self, labels: np.ndarray):
        arr = np.asarray(labels)
        if arr.ndim != 2:
            raise ValueError(f"label data must be 2D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
        if arr.size and arr.min() < 0:
            raise ValueError("labels must be non-negative")
        self.labels = arr.astype(np.int32, copy=False)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def present_labels(self) -> list[int]:
        """Sorted list of labels that occupy at least one pixel."""
        return [int(v) for v in np.unique(self.labels)]

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)


class EdgeMap:
    """Boolean edge mask companion to an Image/LabelMap of the same frame."""

    __slots__ = ("mask",)

    def __init__(self, mask: np.ndarray):
        arr = np.asarray(mask)
        if arr.ndim != 2:
            raise ValueError(f"edge mask must be 2D, got shape {arr.shape}")
        self.mask = arr.astype(bool, copy=False)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, EdgeMap) and np.array_equal(self.mask, other.mask)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_bilinear(img: Image, x: float, y: float) -> float:
    """Bilinear interpolation of the four surrounding pixels.

    Coordinates exactly on a pixel return that pixel's value. Coordinates
    outside [0, width-1] x [0, height-1] return the OUT_OF_SUPPORT sentinel.
    """
    arr = img.data
    h, w = arr.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return OUT_OF_SUPPORT
    # Clamp the cell origin so x = w-1 lands in the last cell with fx = 1.
    x0 = min(int(x), w - 2) if w > 1 else 0
    y0 = min(int(y), h - 2) if h > 1 else 0
    fx = x - x0
    fy = y - y0
    if w == 1 and h == 1:
        return float(arr[0, 0])
    if w == 1:
        return float(arr[y0, 0] + (arr[y0 + 1, 0] - arr[y0, 0]) * fy)
    if h == 1:
        return float(arr[0, x0] + (arr[0, x0 + 1] - arr[0, x0]) * fx)
    top = arr[y0, x0] + (arr[y0, x0 + 1] - arr[y0, x0]) * fx
    bot = arr[y0 + 1, x0] + (arr[y0 + 1, x0 + 1] - arr[y0 + 1, x0]) * fx
    return float(top + (bot - top) * fy)


def bilinear_lattice(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Vectorized bilinear sampling with the interpolant's own gradient.

    Returns (values, valid, gx, gy). Out-of-support positions get value 0 and
    valid=False; they must be masked by the caller. gx/gy are the exact x/y
    derivatives of the bilinear surface within each cell, which is what
    finite differences of any sampled functional of the image converge to.
    """
    h, w = arr.shape
    valid = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)
    cx = np.clip(np.where(valid, xs, 0.0), 0, w - 1)
    cy = np.clip(np.where(valid, ys, 0.0), 0, h - 1)
    x0 = np.minimum(cx.astype(np.int64), w - 2)
    y0 = np.minimum(cy.astype(np.int64), h - 2)
    fx = cx - x0
    fy = cy - y0
    flat = arr.ravel()
    base = y0 * w + x0
    c00 = flat[base]
    c01 = flat[base + 1]
    c10 = flat[base + w]
    c11 = flat[base + w + 1]
    top = c00 + (c01 - c00) * fx
    bot = c10 + (c11 - c10) * fx
    vals = top + (bot - top) * fy
    gx = (c01 - c00) * (1.0 - fy) + (c11 - c10) * fy
    gy = bot - top
    vals = np.where(valid, vals, 0.0)
    gx = np.where(valid, gx, 0.0)
    gy = np.where(valid, gy, 0.0)
    return vals, valid, gx, gy


def cubic_lattice(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Vectorized Catmull-Rom sampling with the interpolant's own gradient.

    Returns (values, valid, gx, gy) like bilinear_lattice, but from a C1
    surface: the gradient is continuous across cells, so finite differences
    of sampled functionals agree with the analytic chain rule tightly. The
    4x4 stencil shrinks the supported region to [1, n-2) per axis.
    """
    h, w = arr.shape
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    valid = (x0f >= 1) & (x0f + 2 <= w - 1) & (y0f >= 1) & (y0f + 2 <= h - 1)
    tx = xs - x0f
    ty = ys - y0f
    x0 = np.clip(x0f.astype(np.int64), 1, max(w - 3, 1))
    y0 = np.clip(y0f.astype(np.int64), 1, max(h - 3, 1))

    def _w(t):
        t2 = t * t
        t3 = t2 * t
        return (-0.5 * t3 + t2 - 0.5 * t,
                1.5 * t3 - 2.5 * t2 + 1.0,
                -1.5 * t3 + 2.0 * t2 + 0.5 * t,
                0.5 * t3 - 0.5 * t2)

    def _dw(t):
        t2 = t * t
        return (-1.5 * t2 + 2.0 * t - 0.5,
                4.5 * t2 - 5.0 * t,
                -4.5 * t2 + 4.0 * t + 0.5,
                1.5 * t2 - t)

    wx, wy = _w(tx), _w(ty)
    dwx, dwy = _dw(tx), _dw(ty)
    flat = arr.ravel()
    base = (y0 - 1) * w + (x0 - 1)
    vals = np.zeros_like(xs, dtype=np.float64)
    gx = np.zeros_like(vals)
    gy = np.zeros_like(vals)
    for i in range(4):
        rowv = np.zeros_like(vals)
        rowg = np.zeros_like(vals)
        row = base + i * w
        for j in range(4):
            c = flat[row + j]
            rowv += wx[j] * c
            rowg += dwx[j] * c
        vals += wy[i] * rowv
        gx += wy[i] * rowg
        gy += dwy[i] * rowv
    vals = np.where(valid, vals, 0.0)
    gx = np.where(valid, gx, 0.0)
    gy = np.where(valid, gy, 0.0)
    return vals, valid, gx, gy


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------

@dataclass
class Patch:
    """Square patch with a validity mask for out-of-bounds pixels."""

    data: np.ndarray   # (2*half_size+1)^2 intensities, invalid pixels 0
    valid: np.ndarray  # same shape, True where the source pixel existed
    center: tuple[int, int]
    half_size: int


def extract_patch(img: Image, center: tuple[int, int], half_size: int) -> Patch:
    """Integer-lattice patch of side 2*half_size+1 centered at center.

    Pixels falling outside the image are flagged invalid, not clamped.
    """
    if half_size < 1:
        raise ValueError("half_size must be >= 1")
    cx, cy = int(center[0]), int(center[1])
    if not (0 <= cx < img.width and 0 <= cy < img.height):
        raise ValueError(f"center out of bounds: {(cx, cy)}")
    n = 2 * half_size + 1
    data = np.zeros((n, n), dtype=np.float64)
    valid = np.zeros((n, n), dtype=bool)
    x_lo = max(0, cx - half_size)
    x_hi = min(img.width, cx + half_size + 1)
    y_lo = max(0, cy - half_size)
    y_hi = min(img.height, cy + half_size + 1)
    data[y_lo - (cy - half_size):y_hi - (cy - half_size),
         x_lo - (cx - half_size):x_hi - (cx - half_size)] = \
        img.data[y_lo:y_hi, x_lo:x_hi]
    valid[y_lo - (cy - half_size):y_hi - (cy - half_size),
          x_lo - (cx - half_size):x_hi - (cx - half_size)] = True
    return Patch(data=data, valid=valid, center=(cx, cy), half_size=half_size)
