"""Gabor receptive-field bank, place tokens, and Lie germ Jacobians.

A bank holds 18 filters (6 orientations x 3 wavelengths) on a shared square
lattice of side 2*half_size+1. A place token is the vector of inner products
between the filters and the image around a center. A warped token pushes the
filter lattice through an affine map p before sampling the image, so that

    warped_token(I2, p) ~= token(I1)   whenever I2 is I1 moved by p.

The Lie germ token is the analytic 18x6 Jacobian of the warped token with
respect to the affine parameters (a11, a12, a21, a22, tx, ty), computed by
the chain rule through the bilinear sampler. The sampler's in-cell gradient
is exact for the piecewise-bilinear interpolant, which is what makes the
Jacobian match finite differences tightly.

Filters use even-phase (cosine) responses by default so tokens are linear in
the image; the optional energy mode folds the odd phase in by quadrature and
gives up linearity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Image, cubic_lattice

PARAM_NAMES = ("a11", "a12", "a21", "a22", "tx", "ty")
IDENTITY = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])


@dataclass
class PlaceToken:
    values: np.ndarray  # (n_filters,)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


class GaborBank:
    """Immutable filter bank on a shared integer lattice.

    even, odd: (n_filters, n_cells) weight rows, each zero-DC and unit L2.
    ux, uy: (n_cells,) lattice offsets from the patch center.
    """

    def __init__(self, wavelengths=(8.0, 16.0, 32.0), n_orientations: int = 6,
                 half_size: int = 32, energy: bool = False):
        if half_size < 1:
            raise ValueError(f"half_size {half_size} < 1")
        side = 2 * half_size + 1
        uy, ux = np.mgrid[-half_size:half_size + 1, -half_size:half_size + 1]
        ux = ux.ravel().astype(np.float64)
        uy = uy.ravel().astype(np.float64)

        thetas = np.arange(n_orientations) * (np.pi / n_orientations)
        even, odd = [], []
        pairs = []
        for lam in wavelengths:
            sigma = 0.5 * lam
            env = np.exp(-(ux * ux + uy * uy) / (2.0 * sigma * sigma))
            env_sum = env.sum()
            for th in thetas:
                phase = (2.0 * np.pi / lam) * (ux * np.cos(th) + uy * np.sin(th))
                for bank, carrier in ((even, np.cos(phase)), (odd, np.sin(phase))):
                    w = env * (carrier - (env * carrier).sum() / env_sum)
                    bank.append(w / np.linalg.norm(w))
                pairs.append((float(th), float(lam)))

        self.even = np.array(even)
        self.odd = np.array(odd)
        self.ux = ux
        self.uy = uy
        self.half_size = half_size
        self.side = side
        self.wavelengths = tuple(float(v) for v in wavelengths)
        self.n_orientations = n_orientations
        self.orientations_wavelengths = tuple(pairs)
        self.energy = energy

    @property
    def n_filters(self) -> int:
        return len(self.even)

    def filter_image(self, index: int, phase: str = "even") -> np.ndarray:
        """One filter reshaped to its (side, side) lattice, for inspection."""
        w = self.even if phase == "even" else self.odd
        return w[index].reshape(self.side, self.side)


def _warped_samples(bank: GaborBank, img: Image, center, p: np.ndarray,
                    support_mask=None):
    """Sample the image at center + A(p)(u) for every lattice cell.

    Returns (vals, gx, gy, valid) with excluded cells zeroed.
    """
    a11, a12, a21, a22, tx, ty = p
    cx, cy = float(center[0]), float(center[1])
    qx = cx + a11 * bank.ux + a12 * bank.uy + tx
    qy = cy + a21 * bank.ux + a22 * bank.uy + ty
    vals, valid, gx, gy = cubic_lattice(img.data, qx, qy)
    if support_mask is not None:
        keep = np.asarray(support_mask, dtype=bool).ravel()
        if keep.shape != valid.shape:
            raise ValueError(
                f"support_mask has {keep.shape[0]} cells, lattice has "
                f"{valid.shape[0]}")
        valid = valid & keep
        vals = np.where(valid, vals, 0.0)
        gx = np.where(valid, gx, 0.0)
        gy = np.where(valid, gy, 0.0)
    return vals, gx, gy, valid


def _check_affine(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (6,):
        raise ValueError(f"affine parameters must be a 6-vector, got {p.shape}")
    det = p[0] * p[3] - p[1] * p[2]
    if abs(det) <= 1e-3:
        raise ValueError(f"degenerate affine, |det| = {abs(det):.2e}")
    return p


def token(bank: GaborBank, img: Image, center, support_mask=None) -> PlaceToken:
    """Place token at center: values[i] = sum F_i(u) * img(center + u)."""
    vals, _, _, valid = _warped_samples(bank, img, center, IDENTITY, support_mask)
    if not valid.any():
        raise ValueError(f"token center {center} fully out of support")
    return _reduce(bank, vals)


def warped_token(bank: GaborBank, img: Image, center, p,
                 support_mask=None) -> PlaceToken:
    """Token of the affine-distorted bank: sum F_i(u) * img(center + A(p)u)."""
    p = _check_affine(p)
    vals, _, _, valid = _warped_samples(bank, img, center, p, support_mask)
    if not valid.any():
        raise ValueError(f"warped token at {center} fully out of support")
    if support_mask is not None and valid.sum() * 4 <= valid.size:
        # only a caller-supplied mask can be rejected for starving the
        # support; plain border truncation degrades gracefully to zeros.
        # Half-plane masks keep about half the cells, so the cutoff sits
        # well below that, at a quarter.
        raise ValueError(
            f"warped token at {center}: majority of support masked "
            f"({valid.size - valid.sum()} of {valid.size})")
    return _reduce(bank, vals)


def _reduce(bank: GaborBank, vals: np.ndarray) -> PlaceToken:
    e = bank.even @ vals
    if not bank.energy:
        return PlaceToken(e)
    o = bank.odd @ vals
    return PlaceToken(np.hypot(e, o))


def _germ_from_samples(bank: GaborBank, vals, gx, gy) -> np.ndarray:
    cols = (gx * bank.ux, gx * bank.uy, gy * bank.ux, gy * bank.uy, gx, gy)
    je = np.stack([bank.even @ c for c in cols], axis=1)
    if not bank.energy:
        return je
    jo = np.stack([bank.odd @ c for c in cols], axis=1)
    e = bank.even @ vals
    o = bank.odd @ vals
    mag = np.hypot(e, o)
    safe = np.where(mag > 1e-12, mag, 1.0)
    return (e[:, None] * je + o[:, None] * jo) / safe[:, None]


def lie_germ_token(bank: GaborBank, img: Image, center, p,
                   support_mask=None) -> np.ndarray:
    """Analytic Jacobian d(warped_token)/dp, shape (n_filters, 6)."""
    p = _check_affine(p)
    vals, gx, gy, valid = _warped_samples(bank, img, center, p, support_mask)
    if not valid.any():
        raise ValueError(f"lie germ at {center} fully out of support")
    if support_mask is not None and valid.sum() * 4 <= valid.size:
        raise ValueError(
            f"lie germ at {center}: majority of support masked "
            f"({valid.size - valid.sum()} of {valid.size})")
    return _germ_from_samples(bank, vals, gx, gy)
