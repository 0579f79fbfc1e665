"""Local affine motion between two frames by multi-start refinement.

estimate() recovers the six-parameter map that carries a patch of frame
one onto frame two at a given center, by minimizing the squared
difference between the first frame's place token and the second frame's
warped token. estimate_constrained() is the rectified-pair variant that
pins the x-row and solves only (a21, a22, ty).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gaborbank import (
    GaborBank,
    IDENTITY,
    _germ_from_samples,
    _reduce,
    _warped_samples,
    token,
    warped_token,
)
from .raster import Image

MAX_ITERS = 10
STEP_TOL = 1e-4
DET_TOL = 1e-3
CONV_SCALE = 1e-4

_FREE_ALL = np.arange(6, dtype=np.int64)
_FREE_RECTIFIED = np.array([2, 3, 5], dtype=np.int64)


@dataclass(frozen=True)
class AffineParams:
    """Forward patch motion about a center.

    Content at center+u in the first frame reappears at center + M u + t
    in the second, with M = [[a11, a12], [a21, a22]] and t = (tx, ty).
    """

    a11: float
    a12: float
    a21: float
    a22: float
    tx: float
    ty: float

    @classmethod
    def from_array(cls, p):
        a = np.asarray(p, dtype=np.float64)
        if a.shape != (6,):
            raise ValueError(f"affine parameters must be a 6-vector, got {a.shape}")
        return cls(*(float(v) for v in a))

    def to_array(self) -> np.ndarray:
        return np.array([self.a11, self.a12, self.a21, self.a22,
                         self.tx, self.ty])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21


# refinement abort reasons, indexed by the kernel's failure code
_DIAGNOSTICS = (None, "singular normal equations", "degenerate affine")


@dataclass(frozen=True)
class DiffeoResult:
    params: AffineParams
    residual_energy: float
    iterations_used: int
    start_shift: tuple
    converged: bool
    diagnostic: str | None = None


def _p_array(p) -> np.ndarray:
    if isinstance(p, AffineParams):
        return p.to_array()
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (6,):
        raise ValueError(f"affine parameters must be a 6-vector, got {a.shape}")
    return a


def residual(bank: GaborBank, img1: Image, img2: Image, center, p) -> np.ndarray:
    """Signed token mismatch r_i = warped_token(img2, p)_i − token(img1)_i."""
    base = token(bank, img1, center)
    moved = warped_token(bank, img2, center, _p_array(p))
    return moved.values - base.values


def _refine_token_path(bank, img2, center, target, p0, free_idx, max_iters):
    """Reference refinement path through the numpy token ops.

    Same trajectory as the compiled kernel; used for energy-mode banks,
    which the kernel does not cover.
    """
    p = np.array(p0, dtype=np.float64)
    vals, gx, gy, _ = _warped_samples(bank, img2, center, p, None)
    r = _reduce(bank, vals).values - target
    e_cur = float(r @ r)
    mu = -1.0
    jac = None
    code = 0
    iters = 0
    for it in range(max_iters):
        iters = it + 1
        if jac is None:
            jac = _germ_from_samples(bank, vals, gx, gy)[:, free_idx]
        jtj = jac.T @ jac
        if mu < 0.0:
            mu = 1e-6 * np.trace(jtj) / len(free_idx)
        try:
            delta = np.linalg.solve(jtj + mu * np.eye(len(free_idx)),
                                    -(jac.T @ r))
        except np.linalg.LinAlgError:
            code = 1
            break
        p_new = p.copy()
        p_new[free_idx] += delta
        if abs(p_new[0] * p_new[3] - p_new[1] * p_new[2]) <= DET_TOL:
            code = 2
            break
        vals_new, gx_new, gy_new, _ = _warped_samples(bank, img2, center,
                                                      p_new, None)
        r_new = _reduce(bank, vals_new).values - target
        e_new = float(r_new @ r_new)
        if e_new <= e_cur:
            p, r, e_cur = p_new, r_new, e_new
            vals, gx, gy = vals_new, gx_new, gy_new
            mu *= 0.5
            jac = None
        else:
            mu *= 2.0
        if np.linalg.norm(delta) < STEP_TOL:
            break
    return p, e_cur, iters, code


def _refine_kernel(bank, img2, center, target, starts, free_idx, max_iters):
    fe = bank.even
    return _kernels.refine_starts(
        np.ascontiguousarray(img2.data, dtype=np.float64),
        fe, fe * bank.ux, fe * bank.uy, bank.ux, bank.uy,
        float(center[0]), float(center[1]),
        np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(starts, dtype=np.float64),
        free_idx, max_iters, STEP_TOL, DET_TOL)


def _run_starts(bank, img2, center, target, starts, free_idx, max_iters):
    if bank.energy:
        rows = [_refine_token_path(bank, img2, center, target, s, free_idx,
                                   max_iters) for s in starts]
        out_p = np.stack([row[0] for row in rows])
        out_e = np.array([row[1] for row in rows])
        out_it = np.array([row[2] for row in rows])
        out_code = np.array([row[3] for row in rows])
        return out_p, out_e, out_it, out_code
    return _refine_kernel(bank, img2, center, target, starts, free_idx,
                          max_iters)


def _select(target, starts, out_p, out_e, out_it, out_code):
    # minimal energy, ties by distance from identity, then grid order
    dist = np.linalg.norm(out_p - IDENTITY, axis=1)
    best = min(range(len(out_e)), key=lambda i: (out_e[i], dist[i], i))
    eps = CONV_SCALE * float(target @ target)
    code = int(out_code[best])
    return DiffeoResult(
        params=AffineParams.from_array(out_p[best]),
        residual_energy=float(out_e[best]),
        iterations_used=int(out_it[best]),
        start_shift=(float(starts[best, 4]), float(starts[best, 5])),
        converged=bool(code == 0 and out_e[best] < eps),
        diagnostic=_DIAGNOSTICS[code],
    )


def newton_refine(bank: GaborBank, img1: Image, img2: Image, center, p0,
                  max_iters: int = MAX_ITERS) -> DiffeoResult:
    """Damped least-squares refinement of p0 at a fixed center."""
    p0 = _p_array(p0)
    target = token(bank, img1, center).values
    out = _run_starts(bank, img2, center, target, p0[None, :], _FREE_ALL,
                      max_iters)
    return _select(target, p0[None, :], *out)


def clamp_center(shape, bank: GaborBank, center):
    """Shift a center inward so the filter support fits a (h, w) raster."""
    # one extra pixel for the cubic stencil
    margin = bank.half_size + 1
    h, w = shape
    if w <= 2 * margin or h <= 2 * margin:
        raise ValueError(
            f"image {w}x{h} smaller than the filter support {2 * margin + 1}")
    x = min(max(float(center[0]), margin), w - 1 - margin)
    y = min(max(float(center[1]), margin), h - 1 - margin)
    return (x, y)


def estimate(bank: GaborBank, img1: Image, img2: Image, center,
             max_iters: int = MAX_ITERS, grid_extent: float = 20.0,
             grid_step: float = 5.0) -> DiffeoResult:
    """Best refinement over the full grid of translation starts."""
    if img1.data.shape != img2.data.shape:
        raise ValueError("frame shapes differ")
    center = clamp_center(img1.data.shape, bank, center)
    target = token(bank, img1, center).values
    shifts = np.arange(-grid_extent, grid_extent + grid_step / 2, grid_step)
    starts = np.tile(IDENTITY, (len(shifts) ** 2, 1))
    k = 0
    for dy in shifts:
        for dx in shifts:
            starts[k, 4] = dx
            starts[k, 5] = dy
            k += 1
    out = _run_starts(bank, img2, center, target, starts, _FREE_ALL, max_iters)
    return _select(target, starts, *out)


def estimate_constrained(bank: GaborBank, img1: Image, img2: Image, center,
                         max_iters: int = MAX_ITERS, grid_extent: float = 20.0,
                         grid_step: float = 5.0) -> DiffeoResult:
    """Rectified-pair estimate: (a11, a12, tx) pinned to (1, 0, 0)."""
    if img1.data.shape != img2.data.shape:
        raise ValueError("frame shapes differ")
    center = clamp_center(img1.data.shape, bank, center)
    target = token(bank, img1, center).values
    shifts = np.arange(-grid_extent, grid_extent + grid_step / 2, grid_step)
    starts = np.tile(IDENTITY, (len(shifts), 1))
    starts[:, 5] = shifts
    out = _run_starts(bank, img2, center, target, starts, _FREE_RECTIFIED,
                      max_iters)
    return _select(target, starts, *out)
