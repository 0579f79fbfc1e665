"""Fused multi-start Gauss-Newton refinement over place tokens.

Hot loop behind the two-frame estimators: cubic sampling of the warped
filter lattice, token residuals against a fixed target, damped
normal-equation steps with backtracking. The arithmetic mirrors the
numpy route through gaborbank so either path gives the same trajectory;
this one exists because 81 starts times 10 iterations times a 65x65
lattice is far too slow in pure numpy.

Even-phase (linear) tokens only. The energy-mode estimator goes through
the numpy route in diffeo.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _sample_warped(img, p, cx, cy, ux, uy, val, gx, gy):
    """Catmull-Rom samples and gradients at the warped lattice.

    Matches raster.cubic_lattice: points whose 4x4 stencil leaves the
    image are zeroed, not clamped.
    """
    h, w = img.shape
    n = ux.shape[0]
    for k in range(n):
        qx = cx + p[0] * ux[k] + p[1] * uy[k] + p[4]
        qy = cy + p[2] * ux[k] + p[3] * uy[k] + p[5]
        x0 = np.floor(qx)
        y0 = np.floor(qy)
        if x0 < 1.0 or x0 + 2.0 > w - 1.0 or y0 < 1.0 or y0 + 2.0 > h - 1.0:
            val[k] = 0.0
            gx[k] = 0.0
            gy[k] = 0.0
            continue
        ix = int(x0)
        iy = int(y0)
        tx = qx - x0
        ty = qy - y0
        s2 = tx * tx
        s3 = s2 * tx
        wx0 = -0.5 * s3 + s2 - 0.5 * tx
        wx1 = 1.5 * s3 - 2.5 * s2 + 1.0
        wx2 = -1.5 * s3 + 2.0 * s2 + 0.5 * tx
        wx3 = 0.5 * s3 - 0.5 * s2
        dx0 = -1.5 * s2 + 2.0 * tx - 0.5
        dx1 = 4.5 * s2 - 5.0 * tx
        dx2 = -4.5 * s2 + 4.0 * tx + 0.5
        dx3 = 1.5 * s2 - tx
        t2 = ty * ty
        t3 = t2 * ty
        wy0 = -0.5 * t3 + t2 - 0.5 * ty
        wy1 = 1.5 * t3 - 2.5 * t2 + 1.0
        wy2 = -1.5 * t3 + 2.0 * t2 + 0.5 * ty
        wy3 = 0.5 * t3 - 0.5 * t2
        dy0 = -1.5 * t2 + 2.0 * ty - 0.5
        dy1 = 4.5 * t2 - 5.0 * ty
        dy2 = -4.5 * t2 + 4.0 * ty + 0.5
        dy3 = 1.5 * t2 - ty
        m00 = img[iy - 1, ix - 1]
        m01 = img[iy - 1, ix]
        m02 = img[iy - 1, ix + 1]
        m03 = img[iy - 1, ix + 2]
        m10 = img[iy, ix - 1]
        m11 = img[iy, ix]
        m12 = img[iy, ix + 1]
        m13 = img[iy, ix + 2]
        m20 = img[iy + 1, ix - 1]
        m21 = img[iy + 1, ix]
        m22 = img[iy + 1, ix + 1]
        m23 = img[iy + 1, ix + 2]
        m30 = img[iy + 2, ix - 1]
        m31 = img[iy + 2, ix]
        m32 = img[iy + 2, ix + 1]
        m33 = img[iy + 2, ix + 2]
        r0v = wx0 * m00 + wx1 * m01 + wx2 * m02 + wx3 * m03
        r1v = wx0 * m10 + wx1 * m11 + wx2 * m12 + wx3 * m13
        r2v = wx0 * m20 + wx1 * m21 + wx2 * m22 + wx3 * m23
        r3v = wx0 * m30 + wx1 * m31 + wx2 * m32 + wx3 * m33
        r0g = dx0 * m00 + dx1 * m01 + dx2 * m02 + dx3 * m03
        r1g = dx0 * m10 + dx1 * m11 + dx2 * m12 + dx3 * m13
        r2g = dx0 * m20 + dx1 * m21 + dx2 * m22 + dx3 * m23
        r3g = dx0 * m30 + dx1 * m31 + dx2 * m32 + dx3 * m33
        val[k] = wy0 * r0v + wy1 * r1v + wy2 * r2v + wy3 * r3v
        gx[k] = wy0 * r0g + wy1 * r1g + wy2 * r2g + wy3 * r3g
        gy[k] = dy0 * r0v + dy1 * r1v + dy2 * r2v + dy3 * r3v


@njit(cache=True, fastmath=True)
def _token_residual(F, val, target, r):
    e = 0.0
    for i in range(F.shape[0]):
        acc = 0.0
        for k in range(F.shape[1]):
            acc += F[i, k] * val[k]
        r[i] = acc - target[i]
        e += r[i] * r[i]
    return e


@njit(cache=True, fastmath=True)
def _chol_solve(A, b, x):
    """Solve A x = b for symmetric positive definite A; False if not SPD."""
    n = A.shape[0]
    L = A.copy()
    for j in range(n):
        s = L[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            t = L[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return True


@njit(cache=True, fastmath=True)
def refine_starts(img, F, Fx, Fy, ux, uy, cx, cy, target, starts, free_idx,
                  max_iters, step_tol, det_tol):
    """Damped Gauss-Newton from each start row; returns (p, E, iters, code).

    code 0 is a clean run; 1 marks an abort on a non-SPD normal matrix,
    2 an abort on a degenerate linear part. Aborted starts keep the last
    valid iterate in their params row. The Jacobian is reused across
    rejected steps since p is unchanged.
    """
    n_f, n_s = F.shape
    n_starts = starts.shape[0]
    n_free = free_idx.shape[0]
    out_p = np.empty((n_starts, 6))
    out_e = np.empty(n_starts)
    out_it = np.zeros(n_starts, dtype=np.int64)
    out_code = np.zeros(n_starts, dtype=np.int8)

    val = np.empty(n_s)
    gx = np.empty(n_s)
    gy = np.empty(n_s)
    r = np.empty(n_f)
    r_new = np.empty(n_f)
    J = np.empty((n_f, n_free))
    JtJ = np.empty((n_free, n_free))
    A = np.empty((n_free, n_free))
    g = np.empty(n_free)
    d = np.empty(n_free)

    for s in range(n_starts):
        p = starts[s].copy()
        _sample_warped(img, p, cx, cy, ux, uy, val, gx, gy)
        e_cur = _token_residual(F, val, target, r)
        mu = -1.0
        have_j = False
        for it in range(max_iters):
            out_it[s] = it + 1
            if not have_j:
                for a in range(n_free):
                    fi = free_idx[a]
                    if fi == 0 or fi == 2:
                        W = Fx
                    elif fi == 1 or fi == 3:
                        W = Fy
                    else:
                        W = F
                    if fi == 0 or fi == 1 or fi == 4:
                        G = gx
                    else:
                        G = gy
                    for i in range(n_f):
                        acc = 0.0
                        for k in range(n_s):
                            acc += W[i, k] * G[k]
                        J[i, a] = acc
                have_j = True
            for a in range(n_free):
                for b in range(n_free):
                    acc = 0.0
                    for i in range(n_f):
                        acc += J[i, a] * J[i, b]
                    JtJ[a, b] = acc
            if mu < 0.0:
                tr = 0.0
                for a in range(n_free):
                    tr += JtJ[a, a]
                mu = 1e-6 * tr / n_free
            for a in range(n_free):
                acc = 0.0
                for i in range(n_f):
                    acc += J[i, a] * r[i]
                g[a] = -acc
            for a in range(n_free):
                for b in range(n_free):
                    A[a, b] = JtJ[a, b]
                A[a, a] += mu
            if not _chol_solve(A, g, d):
                out_code[s] = 1
                break
            p_new = p.copy()
            for a in range(n_free):
                p_new[free_idx[a]] += d[a]
            det = p_new[0] * p_new[3] - p_new[1] * p_new[2]
            if abs(det) <= det_tol:
                out_code[s] = 2
                break
            _sample_warped(img, p_new, cx, cy, ux, uy, val, gx, gy)
            e_new = _token_residual(F, val, target, r_new)
            if e_new <= e_cur:
                p = p_new
                for i in range(n_f):
                    r[i] = r_new[i]
                e_cur = e_new
                mu *= 0.5
                have_j = False
            else:
                mu *= 2.0
            step = 0.0
            for a in range(n_free):
                step += d[a] * d[a]
            if np.sqrt(step) < step_tol:
                break
        out_p[s] = p
        out_e[s] = e_cur
    return out_p, out_e, out_it, out_code
