"""Ray-space geometry kernel.

Three groups of operations share this module. Biprojection maps a 3D
point to the pair of viewing rays from two centers and recovers the
point back from the ray pair. Shape-from-mapping reads depth, surface
normal, and the two fundamental forms out of a planar perspective
mapping y' = g2(x, y) between two views in the canonical rig (image
planes at Z = 1, unit baseline along Y). Egomotion recovers the
camera rotation and the translation direction from point
correspondences via the coplanarity constraint, directly in the
5-parameter space.

Conventions fixed here because the formulas leave them open: the
azimuth of a stereo pair is taken in [0, 2pi) so recovery works below
the x-axis as well; surface normals are returned facing the viewer;
the rotation operator is yaw(z) then pitch(y) then roll(x).
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Ray:
    """Viewing ray from a base point, direction in spherical angles."""

    theta: float
    phi: float
    base: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 <= self.theta < TWO_PI):
            raise ValueError(f"theta must lie in [0, 2pi), got {self.theta}")
        if not (0.0 <= self.phi <= np.pi):
            raise ValueError(f"phi must lie in [0, pi], got {self.phi}")

    def direction(self) -> np.ndarray:
        st, ct = np.sin(self.theta), np.cos(self.theta)
        sp, cp = np.sin(self.phi), np.cos(self.phi)
        return np.array([sp * ct, sp * st, cp])


class StereoPair(NamedTuple):
    """Ray pair seen from two centers a baseline apart on the z axis.

    A pair that actually comes from a point off the center line has
    theta == theta_prime and 0 < phi < phi_prime < pi; pairs violating
    that ordering have no vertex and recovery rejects them.
    """

    theta: float
    phi: float
    theta_prime: float
    phi_prime: float
    baseline: float


def biproject(point, baseline: float) -> StereoPair:
    """Angles of the rays from O and from O' = O + (0,0,baseline) to point.

    The azimuth keeps the sign of y (range [0, 2pi)); the inclinations
    come from the inverse cosines of the z components.
    """
    x, y, z = (float(v) for v in point)
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    r2 = x * x + y * y
    if r2 == 0.0:
        raise ValueError("restricted Euclidean space violated: "
                         "point on the transition line")
    theta = float(np.arctan2(y, x)) % TWO_PI
    phi = float(np.arccos(z / np.sqrt(r2 + z * z)))
    zp = z - baseline
    phi_prime = float(np.arccos(zp / np.sqrt(r2 + zp * zp)))
    return StereoPair(theta, phi, theta, phi_prime, float(baseline))


def vertex_recover(sp: StereoPair) -> np.ndarray:
    """Intersection point of the two rays of a stereo pair."""
    gap = np.sin(sp.phi_prime - sp.phi)
    if gap == 0.0:
        raise ValueError("vertex at infinity: parallel rays")
    s = sp.baseline * np.sin(sp.phi_prime) / gap
    return np.array([s * np.sin(sp.phi) * np.cos(sp.theta),
                     s * np.sin(sp.phi) * np.sin(sp.theta),
                     s * np.cos(sp.phi)])


# ---------------------------------------------------------------------------
# Shape from a perspective mapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarMapping:
    """Second component y' = g2(x, y) of a perspective mapping between
    the canonical views (image planes at Z = 1, unit baseline along Y;
    the first component is the identity there). Derivatives are taken
    numerically, so g2 only needs to be callable.
    """

    g2: Callable[[float, float], float]
    step: float = 1e-4


def _first_derivs(m: PlanarMapping, x: float, y: float):
    h = m.step
    g = m.g2(x, y)
    gx = (m.g2(x + h, y) - m.g2(x - h, y)) / (2 * h)
    gy = (m.g2(x, y + h) - m.g2(x, y - h)) / (2 * h)
    return g, gx, gy


def _second_derivs(m: PlanarMapping, x: float, y: float):
    h = m.step
    g = m.g2(x, y)
    gxx = (m.g2(x + h, y) - 2 * g + m.g2(x - h, y)) / (h * h)
    gyy = (m.g2(x, y + h) - 2 * g + m.g2(x, y - h)) / (h * h)
    gxy = (m.g2(x + h, y + h) - m.g2(x + h, y - h)
           - m.g2(x - h, y + h) + m.g2(x - h, y - h)) / (4 * h * h)
    return gxx, gxy, gyy


def depth_from_mapping(m: PlanarMapping, x: float, y: float) -> float:
    """Z(x, y) = -1 / (g2(x, y) - y)."""
    disparity = m.g2(x, y) - y
    if disparity == 0.0:
        raise ValueError("point at infinity: zero disparity")
    return -1.0 / disparity


def surface_normal(m: PlanarMapping, x: float, y: float) -> np.ndarray:
    """Unit surface normal at the preimage of (x, y), facing the viewer."""
    g, a21, a22 = _first_derivs(m, x, y)
    n = np.array([a21, a22 - 1.0, g - y * a22 - x * a21])
    d = float(np.linalg.norm(n))
    if d < 1e-12:
        raise ValueError("degenerate normal")
    n /= d
    if n @ np.array([x, y, 1.0]) > 0:
        n = -n
    return n


def fundamental_forms(m: PlanarMapping, x: float, y: float):
    """First and second fundamental forms of the viewed surface.

    The surface is parametrized by the image point: f(x, y) =
    (x, y, 1) / (y - g2(x, y)), the 3D point the pixel sees. Both
    forms are evaluated from g2's numerical derivatives; the second
    form's sign follows the viewer-facing normal.
    """
    g, gx, gy = _first_derivs(m, x, y)
    gxx, gxy, gyy = _second_derivs(m, x, y)
    h = y - g
    if h == 0.0:
        raise ValueError("point at infinity: zero disparity")
    hx, hy = -gx, 1.0 - gy
    hxx, hxy, hyy = -gxx, -gxy, -gyy
    # F = 1/h and its derivatives drive every component of f = (xF, yF, F)
    F = 1.0 / h
    Fx = -hx * F * F
    Fy = -hy * F * F
    Fxx = (-hxx + 2 * hx * hx * F) * F * F
    Fxy = (-hxy + 2 * hx * hy * F) * F * F
    Fyy = (-hyy + 2 * hy * hy * F) * F * F
    fx = np.array([F + x * Fx, y * Fx, Fx])
    fy = np.array([x * Fy, F + y * Fy, Fy])
    fxx = np.array([2 * Fx + x * Fxx, y * Fxx, Fxx])
    fxy = np.array([Fy + x * Fxy, Fx + y * Fxy, Fxy])
    fyy = np.array([x * Fyy, 2 * Fy + y * Fyy, Fyy])
    n = np.cross(fx, fy)
    norm = float(np.linalg.norm(n))
    if norm < 1e-15:
        raise ValueError("degenerate parametrization")
    n /= norm
    if n @ np.array([x, y, 1.0]) > 0:
        n = -n
    first = np.array([[fx @ fx, fx @ fy], [fx @ fy, fy @ fy]])
    second = np.array([[n @ fxx, n @ fxy], [n @ fxy, n @ fyy]])
    return first, second


def gaussian_curvature(m: PlanarMapping, x: float, y: float) -> float:
    first, second = fundamental_forms(m, x, y)
    return float(np.linalg.det(second) / np.linalg.det(first))


# ---------------------------------------------------------------------------
# Egomotion from the coplanarity constraint
# ---------------------------------------------------------------------------

def rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Yaw about z, then pitch about y, then roll about x: Rz Ry Rx."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]])
    return rz @ ry @ rx


def translation_direction(theta: float, phi: float) -> np.ndarray:
    """Unit translation (sin t cos p, sin t sin p, cos t)."""
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def coplanarity_residual(x, y, xp, yp, f, rot, trans_dir) -> float:
    """Triple product of the first ray, the translation, and the rotated
    second ray; zero exactly when the three are coplanar."""
    p1 = np.array([x, y, f], dtype=np.float64)
    p2 = np.array([xp, yp, f], dtype=np.float64)
    t = translation_direction(*trans_dir)
    r = rotation_matrix(*rot)
    return float(np.cross(p1, t) @ (r @ p2))


@dataclass(frozen=True)
class EgomotionResult:
    rot: tuple
    trans_dir: tuple
    residual_rms: float
    sign_resolved: bool
    degenerate: bool

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(*self.rot)

    @property
    def translation(self) -> np.ndarray:
        return translation_direction(*self.trans_dir)


def _residual_vec(params, p1s, p2s):
    alpha, beta, gamma, theta, phi = params
    t = translation_direction(theta, phi)
    r = rotation_matrix(alpha, beta, gamma)
    return np.einsum("ij,ij->i", np.cross(p1s, t), (r @ p2s.T).T)


def _jacobian(params, p1s, p2s, h=1e-7):
    cols = []
    for k in range(5):
        up = params.copy()
        dn = params.copy()
        up[k] += h
        dn[k] -= h
        cols.append((_residual_vec(up, p1s, p2s)
                     - _residual_vec(dn, p1s, p2s)) / (2 * h))
    return np.stack(cols, axis=1)


def _cheirality(rot_params, t, p1s, p2s) -> int:
    """Count correspondences whose rays intersect in front of both centers."""
    r = rotation_matrix(*rot_params)
    front = 0
    for p1, p2 in zip(p1s, p2s):
        d1 = p1 / np.linalg.norm(p1)
        d2 = r @ p2
        d2 /= np.linalg.norm(d2)
        a = np.stack([d1, -d2], axis=1)
        lhs = a.T @ a
        rhs = a.T @ t
        try:
            ab = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            continue
        if ab[0] > 0 and ab[1] > 0:
            front += 1
    return front


_START_DIRECTIONS = [
    (np.pi / 2, 0.0), (np.pi / 2, np.pi),
    (np.pi / 2, np.pi / 2), (np.pi / 2, 3 * np.pi / 2),
    (0.0, 0.0), (np.pi, 0.0),
    (float(np.arccos(1 / np.sqrt(3))), np.pi / 4),
    (float(np.pi - np.arccos(1 / np.sqrt(3))), 5 * np.pi / 4),
]


def solve_egomotion(correspondences, f: float) -> EgomotionResult:
    """Rotation and unit translation direction from >= 5 point pairs.

    Minimizes the summed squared coplanarity residual over the five
    parameters by damped Gauss-Newton from eight canonical translation
    starts, then resolves the +-T ambiguity by counting ray pairs that
    intersect in front of both centers. The translation scale is not
    recoverable and is fixed at one.
    """
    pairs = list(correspondences)
    if len(pairs) < 5:
        raise ValueError(f"need at least 5 correspondences, got {len(pairs)}")
    p1s = np.array([[x, y, f] for (x, y), _ in pairs], dtype=np.float64)
    p2s = np.array([[xp, yp, f] for _, (xp, yp) in pairs], dtype=np.float64)

    candidates = []
    for theta0, phi0 in _START_DIRECTIONS:
        params = np.array([0.0, 0.0, 0.0, theta0, phi0])
        lam = 1e-3
        cost = float(_residual_vec(params, p1s, p2s) @
                     _residual_vec(params, p1s, p2s))
        converged = False
        for _ in range(80):
            r = _residual_vec(params, p1s, p2s)
            j = _jacobian(params, p1s, p2s)
            g = j.T @ r
            hmat = j.T @ j
            stepped = False
            for _ in range(12):
                try:
                    step = np.linalg.solve(hmat + lam * np.eye(5), g)
                except np.linalg.LinAlgError:
                    lam *= 10.0
                    continue
                trial = params - step
                rt = _residual_vec(trial, p1s, p2s)
                trial_cost = float(rt @ rt)
                if trial_cost < cost:
                    params, cost = trial, trial_cost
                    lam = max(lam / 3.0, 1e-12)
                    stepped = True
                    break
                lam *= 10.0
            if not stepped:
                converged = True  # damping exhausted at a local minimum
                break
            if float(np.linalg.norm(step)) < 1e-12 or cost < 1e-28:
                converged = True
                break
        if converged:
            candidates.append((cost, params))
    if not candidates:
        raise RuntimeError("egomotion failed to converge from all starts")

    # the residual alone cannot separate the true solution from its
    # twisted twin (both zero it exactly), so physical realizability
    # ranks first: prefer the candidate with the most ray pairs meeting
    # in front of both centers, breaking ties by cost
    scored = []
    for cost, params in candidates:
        rot = tuple(float(np.arctan2(np.sin(a), np.cos(a)))
                    for a in params[:3])
        t = translation_direction(params[3], params[4])
        forward = _cheirality(rot, t, p1s, p2s)
        backward = _cheirality(rot, -t, p1s, p2s)
        count = max(forward, backward)
        scored.append((-count, cost, rot, t if forward >= backward else -t,
                       forward != backward))
    scored.sort(key=lambda row: (row[0], row[1]))
    _, cost, rot, t, sign_resolved = scored[0]
    theta = float(np.arccos(np.clip(t[2], -1.0, 1.0)))
    phi = float(np.arctan2(t[1], t[0])) % TWO_PI

    j = _jacobian(np.array([*rot, theta, phi]), p1s, p2s)
    sv = np.linalg.svd(j, compute_uv=False)
    degenerate = bool(sv[0] == 0.0 or sv[-1] / sv[0] < 1e-8)
    rms = float(np.sqrt(cost / len(pairs)))
    return EgomotionResult(rot, (theta, phi), rms, sign_resolved, degenerate)
