"""Two-frame affine estimation tests.

Independent references: integer np.roll shifts (exact, no resampling),
scipy.ndimage.affine_transform for fractional warps, and re-running the
single-start refiner for the multi-start selection rule.
"""

import numpy as np
import pytest
from scipy import ndimage

from surftrack.diffeo import (
    IDENTITY,
    AffineParams,
    clamp_center,
    estimate,
    estimate_constrained,
    newton_refine,
    residual,
)
from surftrack.gaborbank import GaborBank, token
from surftrack.raster import Image
from surftrack.synth import make_texture

BANK = GaborBank()


def warp_about(img, p, center):
    """Second frame whose patch motion about center is exactly p.

    Output pixel z takes the value of input at center + M^-1 (z - center - t),
    in (x, y) convention, so content moves forward by (M, t).
    """
    a11, a12, a21, a22, tx, ty = p
    minv = np.linalg.inv(np.array([[a11, a12], [a21, a22]]))
    m_rc = np.array([[minv[1, 1], minv[1, 0]], [minv[0, 1], minv[0, 0]]])
    c_rc = np.array([center[1], center[0]])
    t_rc = np.array([ty, tx])
    offset = c_rc - m_rc @ (c_rc + t_rc)
    moved = ndimage.affine_transform(
        img.data, m_rc, offset=offset, order=3, mode="nearest")
    return Image(np.clip(moved, 0.0, 1.0))


def test_affine_params_round_trip():
    p = AffineParams.from_array([1.1, 0.2, -0.1, 0.9, 4.0, -2.5])
    np.testing.assert_array_equal(p.to_array(), [1.1, 0.2, -0.1, 0.9, 4.0, -2.5])
    np.testing.assert_array_equal(p.matrix, [[1.1, 0.2], [-0.1, 0.9]])
    np.testing.assert_array_equal(p.translation, [4.0, -2.5])
    assert p.det == pytest.approx(1.1 * 0.9 - 0.2 * (-0.1))
    with pytest.raises(ValueError, match="6-vector"):
        AffineParams.from_array([1, 2, 3])


def test_residual_zero_on_identical_frames():
    img = make_texture(160, 11)
    r = residual(BANK, img, img, (80, 80), IDENTITY)
    assert np.abs(r).max() <= 1e-9


def test_residual_small_at_true_params():
    img = make_texture(256, 12)
    center = (128.0, 128.0)
    p = np.array([1.02, -0.03, 0.01, 0.98, 3.0, -2.0])
    moved = warp_about(img, p, center)
    r = residual(BANK, img, moved, center, p)
    assert np.linalg.norm(r) <= 2e-2 * token(BANK, img, center).norm()


def test_energy_is_recomputable_from_residual():
    img = make_texture(256, 13)
    moved = Image(np.roll(img.data, (2, -4), axis=(0, 1)))
    center = (128.0, 128.0)
    res = estimate(BANK, img, moved, center)
    r = residual(BANK, img, moved, center, res.params)
    assert res.residual_energy == pytest.approx(float(r @ r), rel=1e-9, abs=1e-18)


def test_refine_identity_pair_stops_fast():
    img = make_texture(192, 14)
    res = newton_refine(BANK, img, img, (96, 96), IDENTITY)
    assert res.converged
    assert res.iterations_used <= 2
    assert res.residual_energy <= 1e-12
    np.testing.assert_allclose(res.params.to_array(), IDENTITY, atol=1e-6)


def test_refine_zero_iterations_reports_start_energy():
    img = make_texture(192, 15)
    moved = Image(np.roll(img.data, (0, 3), axis=(0, 1)))
    center = (96.0, 96.0)
    res = newton_refine(BANK, img, moved, center, IDENTITY, max_iters=0)
    r = residual(BANK, img, moved, center, IDENTITY)
    assert res.iterations_used == 0
    assert res.residual_energy == pytest.approx(float(r @ r), rel=1e-9)


def test_refine_never_increases_energy():
    rng = np.random.default_rng(16)
    img = make_texture(256, 16)
    for _ in range(10):
        p_true = IDENTITY + np.concatenate([
            rng.uniform(-0.08, 0.08, 4), rng.uniform(-6, 6, 2)])
        moved = warp_about(img, p_true, (128, 128))
        p0 = IDENTITY + np.concatenate([
            rng.uniform(-0.05, 0.05, 4), rng.uniform(-8, 8, 2)])
        res = newton_refine(BANK, img, moved, (128.0, 128.0), p0)
        r0 = residual(BANK, img, moved, (128.0, 128.0), p0)
        assert res.residual_energy <= float(r0 @ r0) + 1e-12


def test_refine_flat_image_does_not_converge():
    img = Image(np.full((128, 128), 0.5))
    res = newton_refine(BANK, img, img, (64, 64), IDENTITY)
    assert not res.converged
    # zero Jacobian, zero damping: the normal equations cannot be solved
    assert res.diagnostic == "singular normal equations"
    np.testing.assert_array_equal(res.params.to_array(), IDENTITY)


def test_estimate_recovers_integer_roll():
    img = make_texture(256, 3)
    moved = Image(np.roll(img.data, (3, 5), axis=(0, 1)))
    res = estimate(BANK, img, moved, (128, 128))
    assert res.converged
    # content moved 5 right, 3 down; grid reads make this exact
    np.testing.assert_allclose(res.params.translation, [5.0, 3.0], atol=1e-8)
    np.testing.assert_allclose(res.params.matrix, np.eye(2), atol=1e-8)


def test_estimate_recovers_fractional_translation():
    img = make_texture(256, 17)
    p_true = np.array([1.0, 0.0, 0.0, 1.0, -12.0, 7.0])
    moved = warp_about(img, p_true, (128, 128))
    res = estimate(BANK, img, moved, (128.0, 128.0))
    assert res.converged
    np.testing.assert_allclose(res.params.translation, [-12.0, 7.0], atol=0.5)
    np.testing.assert_allclose(res.params.matrix, np.eye(2), atol=0.02)


def test_refine_recovers_rotation_and_scale():
    img = make_texture(256, 18)
    th = np.deg2rad(5.0)
    s = 1.05
    p_true = np.array([s * np.cos(th), -s * np.sin(th),
                       s * np.sin(th), s * np.cos(th), 0.0, 0.0])
    moved = warp_about(img, p_true, (128, 128))
    p0 = p_true + np.array([0.01, -0.01, 0.01, -0.01, 0.5, -0.5])
    res = newton_refine(BANK, img, moved, (128.0, 128.0), p0)
    np.testing.assert_allclose(res.params.matrix.ravel(), p_true[:4], atol=0.02)


def test_estimate_recovery_rate():
    # >= 95% of random small affines with |t| <= 20 px recovered within
    # 0.5 px and 0.02 per linear entry
    rng = np.random.default_rng(19)
    hits = 0
    trials = 100
    for k in range(trials):
        img = make_texture(256, 1000 + k)
        p_true = IDENTITY + np.concatenate([
            rng.uniform(-0.15, 0.15, 4), rng.uniform(-20, 20, 2)])
        moved = warp_about(img, p_true, (128, 128))
        res = estimate(BANK, img, moved, (128.0, 128.0))
        t_ok = np.abs(res.params.translation - p_true[4:]).max() <= 0.5
        m_ok = np.abs(res.params.matrix.ravel() - p_true[:4]).max() <= 0.02
        hits += t_ok and m_ok
    assert hits >= 95


def test_estimate_symmetry():
    rng = np.random.default_rng(20)
    img = make_texture(256, 21)
    for _ in range(3):
        p_true = IDENTITY + np.concatenate([
            rng.uniform(-0.08, 0.08, 4), rng.uniform(-10, 10, 2)])
        moved = warp_about(img, p_true, (128, 128))
        fwd = estimate(BANK, img, moved, (128.0, 128.0))
        bwd = estimate(BANK, moved, img, (128.0, 128.0))
        m1, t1 = fwd.params.matrix, fwd.params.translation
        m2, t2 = bwd.params.matrix, bwd.params.translation
        assert np.abs(m1 @ m2 - np.eye(2)).max() <= 0.05
        assert np.linalg.norm(m1 @ t2 + t1) <= 1.0


def test_estimate_equals_rescan_of_all_starts():
    img = make_texture(256, 22)
    moved = warp_about(img, np.array([1.01, 0.0, 0.0, 0.99, 6.0, -9.0]),
                       (128, 128))
    center = (128.0, 128.0)
    res = estimate(BANK, img, moved, center)
    candidates = []
    for dy in np.arange(-20.0, 21.0, 5.0):
        for dx in np.arange(-20.0, 21.0, 5.0):
            p0 = IDENTITY + np.array([0, 0, 0, 0, dx, dy])
            candidates.append(newton_refine(BANK, img, moved, center, p0))
    best = min(
        range(len(candidates)),
        key=lambda i: (candidates[i].residual_energy,
                       np.linalg.norm(candidates[i].params.to_array() - IDENTITY),
                       i))
    pick = candidates[best]
    assert res.residual_energy == pick.residual_energy
    np.testing.assert_array_equal(res.params.to_array(), pick.params.to_array())
    assert res.start_shift == pick.start_shift


def test_estimate_clamps_border_center():
    img = make_texture(256, 24)
    moved = Image(np.roll(img.data, (0, 4), axis=(0, 1)))
    res = estimate(BANK, img, moved, (2.0, 128.0))
    # estimation runs at the shifted-inward center and still sees the shift
    assert res.converged
    np.testing.assert_allclose(res.params.translation, [4.0, 0.0], atol=1e-6)
    assert clamp_center(img.data.shape, BANK, (2.0, 128.0)) == (33.0, 128.0)


def test_constrained_identity_pair():
    img = make_texture(192, 25)
    res = estimate_constrained(BANK, img, img, (96, 96))
    assert res.converged
    np.testing.assert_allclose(
        res.params.to_array(), [1, 0, 0, 1, 0, 0], atol=1e-6)


def test_constrained_matches_full_on_y_shift():
    img = make_texture(256, 26)
    p_true = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 6.0])
    moved = warp_about(img, p_true, (128, 128))
    con = estimate_constrained(BANK, img, moved, (128.0, 128.0))
    full = estimate(BANK, img, moved, (128.0, 128.0))
    assert con.converged
    assert abs(con.params.ty - full.params.ty) <= 1.0
    assert abs(con.params.a22 - full.params.a22) <= 0.04
    assert con.params.a11 == 1.0 and con.params.a12 == 0.0
    assert con.params.tx == 0.0


def test_constrained_recovers_slanted_mapping():
    # a plane slanted along y induces y' = (1 + b) y + d in a rectified
    # pair, so the analytic target is just (a22, ty) = (1 + b, d)
    img = make_texture(256, 27)
    p_true = np.array([1.0, 0.0, 0.0, 1.03, 0.0, 4.0])
    moved = warp_about(img, p_true, (128, 128))
    res = estimate_constrained(BANK, img, moved, (128.0, 128.0))
    assert res.converged
    assert res.params.a22 == pytest.approx(1.03, abs=0.02)
    assert res.params.ty == pytest.approx(4.0, abs=0.5)


def test_kernel_agrees_with_token_path():
    # the compiled route and the numpy route must walk the same trajectory
    from surftrack.diffeo import _FREE_ALL, _refine_kernel, _refine_token_path
    img = make_texture(256, 28)
    moved = warp_about(img, np.array([1.02, 0.01, -0.01, 0.97, 4.0, -6.0]),
                       (128, 128))
    center = (128.0, 128.0)
    target = token(BANK, img, center).values
    for shift in ((5.0, -5.0), (0.0, 0.0), (-10.0, 10.0)):
        p0 = IDENTITY + np.array([0, 0, 0, 0, shift[0], shift[1]])
        out = _refine_kernel(BANK, moved, center, target, p0[None, :],
                             _FREE_ALL, 10)
        pn, en, _, code = _refine_token_path(BANK, moved, center, target, p0,
                                             _FREE_ALL, 10)
        assert int(out[3][0]) == code
        np.testing.assert_allclose(out[0][0], pn, atol=1e-7)
        assert float(out[1][0]) == pytest.approx(en, rel=1e-5, abs=1e-12)


def test_energy_mode_estimate_recovers_translation():
    ebank = GaborBank(energy=True)
    img = make_texture(256, 29)
    moved = warp_about(img, np.array([1.0, 0.0, 0.0, 1.0, -7.0, 3.0]),
                       (128, 128))
    res = estimate(ebank, img, moved, (128.0, 128.0))
    assert res.converged
    np.testing.assert_allclose(res.params.translation, [-7.0, 3.0], atol=0.5)
