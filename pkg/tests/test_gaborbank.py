"""Filter bank and token tests.

Independent references: dense correlation maps for token values,
closed-form band-limited images for the duality check, and
scipy.ndimage.affine_transform for the invariance checks.
"""

import numpy as np
import pytest
from scipy import ndimage

from surftrack.gaborbank import (
    IDENTITY,
    GaborBank,
    lie_germ_token,
    token,
    warped_token,
)
from surftrack.raster import Image
from surftrack.synth import make_texture

BANK = GaborBank()


def warp_image_reference(img, p, center):
    """Move image content by p about center, with scipy as the resampler.

    Output pixel z takes the value of input at center + M^-1 (z - center - t),
    in (x, y) convention.
    """
    a11, a12, a21, a22, tx, ty = p
    minv = np.linalg.inv(np.array([[a11, a12], [a21, a22]]))
    # scipy works in (row, col) = (y, x)
    m_rc = np.array([[minv[1, 1], minv[1, 0]], [minv[0, 1], minv[0, 0]]])
    c_rc = np.array([center[1], center[0]])
    t_rc = np.array([ty, tx])
    offset = c_rc - m_rc @ (c_rc + t_rc)
    # the oracle image must be closer to the ideal warp than the sampler
    # under test, or its error dominates
    moved = ndimage.affine_transform(
        img.data, m_rc, offset=offset, order=3, mode="nearest")
    return Image(np.clip(moved, 0.0, 1.0))


def test_bank_has_18_filters():
    assert BANK.n_filters == 18
    assert BANK.side == 65
    assert len(BANK.orientations_wavelengths) == 18


def test_filters_zero_dc_and_unit_norm():
    for rows in (BANK.even, BANK.odd):
        for w in rows:
            assert abs(w.sum()) <= 1e-6 * np.abs(w).sum()
            assert np.linalg.norm(w) == pytest.approx(1.0)


def test_token_constant_image_is_zero():
    img = Image(np.full((96, 96), 0.7))
    t = token(BANK, img, (48, 48))
    assert np.abs(t.values).max() < 1e-9


def test_token_linearity():
    img = make_texture(128, 31)
    half = Image(0.5 * img.data)
    a = token(BANK, img, (64.0, 60.0))
    b = token(BANK, half, (64.0, 60.0))
    np.testing.assert_allclose(b.values, 0.5 * a.values, atol=1e-12)


def test_token_matches_dense_correlation_and_orientation_tuning():
    # horizontal grating at the middle wavelength: stripes run along x, the
    # carrier points along y (filter orientation 90 degrees); cosine phase so
    # the even filter is in phase at the center
    lam = 16.0
    ys = np.arange(128)[:, None]
    img = Image(np.tile(0.5 + 0.4 * np.cos(2 * np.pi * (ys - 64) / lam), (1, 128)))
    center = (64, 64)
    t = token(BANK, img, center)

    idx = BANK.orientations_wavelengths.index((np.pi / 2, lam))
    orth = BANK.orientations_wavelengths.index((0.0, lam))
    ref = {}
    for k in (idx, orth):
        resp = ndimage.correlate(img.data, BANK.filter_image(k),
                                 mode="constant")
        ref[k] = resp[center[1], center[0]]
        assert t.values[k] == pytest.approx(ref[k], abs=1e-9)
    factor = abs(ref[idx]) / max(abs(ref[orth]), 1e-12)
    assert factor > 1e3
    assert abs(t.values[idx]) > 1e3 * abs(t.values[orth])


def test_token_center_out_of_support():
    img = make_texture(128, 1)
    with pytest.raises(ValueError, match="out of support"):
        token(BANK, img, (-40.0, -40.0))


def test_warped_identity_equals_token():
    img = make_texture(128, 3)
    a = token(BANK, img, (64, 64))
    b = warped_token(BANK, img, (64, 64), IDENTITY)
    np.testing.assert_array_equal(a.values, b.values)


def test_warped_translation_matches_shifted_image():
    img = make_texture(256, 17)
    center = (128, 128)
    p = np.array([1.0, 0.0, 0.0, 1.0, 5.0, 0.0])
    a = warped_token(BANK, img, center, p)
    shifted = Image(np.roll(img.data, -5, axis=1))
    b = token(BANK, shifted, center)
    assert np.linalg.norm(a.values - b.values) <= 1e-3 * b.norm()


def test_warped_degenerate_affine():
    img = make_texture(128, 4)
    with pytest.raises(ValueError, match="degenerate affine"):
        warped_token(BANK, img, (64, 64), [1e-4, 0, 0, 1e-4, 0, 0])


def test_warped_majority_masked():
    img = make_texture(128, 5)
    mask = np.zeros((65, 65), dtype=bool)
    mask[:10] = True
    with pytest.raises(ValueError, match="majority of support masked"):
        warped_token(BANK, img, (64, 64), IDENTITY, support_mask=mask)


def test_half_plane_mask_is_accepted_and_changes_token():
    img = make_texture(128, 6)
    uy, ux = np.mgrid[-32:33, -32:33]
    mask = ux < 0  # strict half plane, ties unmasked
    full = token(BANK, img, (64, 64))
    left = token(BANK, img, (64, 64), support_mask=mask)
    assert np.isfinite(left.values).all()
    assert np.abs(full.values - left.values).max() > 1e-6


def band_limited_image(rng, size, n_waves=150, cutoff=0.08):
    """Random cosine mixture with wavevectors below cutoff cycles/px.

    Returns the rasterized image and the closed form, so a pulled-back
    image can be evaluated exactly at arbitrary points. Keeping the
    spectrum below the cutoff bounds the sampler's own interpolation
    error under the 1e-3 duality budget.
    """
    ang = rng.uniform(0, 2 * np.pi, n_waves)
    freq = rng.uniform(0.02, cutoff, n_waves)
    kx = freq * np.cos(ang)
    ky = freq * np.sin(ang)
    amp = 1.0 / freq
    amp /= amp.sum()
    ph = rng.uniform(0, 2 * np.pi, n_waves)

    def f(xs, ys):
        arg = 2 * np.pi * (kx * xs[..., None] + ky * ys[..., None]) + ph
        return 0.5 + (np.cos(arg) * amp).sum(-1)

    ys_, xs_ = np.mgrid[0:size, 0:size].astype(float)
    return Image(f(xs_, ys_)), f


def test_duality_against_image_side_warp():
    # <A* F, I> = <F, A o I> within 1e-3 relative over 100 random
    # (image, p) pairs. The pullback J(z) = I(center + A(z - center)) is
    # evaluated from the image's closed form, so the reference side
    # carries no resampling error at all.
    rng = np.random.default_rng(40)
    center = (96.0, 96.0)
    for _ in range(100):
        img, f = band_limited_image(rng, 192)
        p = IDENTITY + np.concatenate([
            rng.uniform(-0.05, 0.05, 4), rng.uniform(-3, 3, 2)])
        lhs = warped_token(BANK, img, center, p)
        a11, a12, a21, a22, tx, ty = p
        gy, gx = np.mgrid[64:129, 64:129].astype(float)
        pulled = np.zeros((192, 192))
        pulled[64:129, 64:129] = f(
            a11 * (gx - 96) + a12 * (gy - 96) + 96 + tx,
            a21 * (gx - 96) + a22 * (gy - 96) + 96 + ty)
        # token at an integer center reads exact grid values, so zeros
        # outside the 65x65 support never enter the inner product
        rhs = token(BANK, Image(pulled), center)
        err = np.linalg.norm(lhs.values - rhs.values)
        assert err <= 1e-3 * max(rhs.norm(), 1e-9)


def test_token_invariance_under_content_motion():
    rng = np.random.default_rng(41)
    img = make_texture(256, 29)
    center = (128.0, 128.0)
    for _ in range(20):
        p = IDENTITY + np.concatenate([
            rng.uniform(-0.04, 0.04, 4), rng.uniform(-4, 4, 2)])
        moved = warp_image_reference(img, p, center)
        a = warped_token(BANK, moved, center, p)
        b = token(BANK, img, center)
        assert np.linalg.norm(a.values - b.values) <= 2e-2 * b.norm()


def fd_jacobian(bank, img, center, p):
    jac = np.zeros((bank.n_filters, 6))
    for j in range(6):
        h = 1e-3 if j < 4 else 1e-2
        hi = np.array(p, dtype=float)
        lo = np.array(p, dtype=float)
        hi[j] += h
        lo[j] -= h
        a = warped_token(bank, img, center, hi)
        b = warped_token(bank, img, center, lo)
        jac[:, j] = (a.values - b.values) / (2 * h)
    return jac


def test_lie_germ_matches_finite_differences():
    # primary correctness gate: max entry error <= 1e-2 of max FD entry
    rng = np.random.default_rng(42)
    img = make_texture(256, 37)
    for trial in range(6):
        center = rng.uniform(70, 180, 2)
        p = IDENTITY + np.concatenate([
            rng.uniform(-0.08, 0.08, 4), rng.uniform(-6, 6, 2)])
        jac = lie_germ_token(BANK, img, center, p)
        ref = fd_jacobian(BANK, img, center, p)
        err = np.abs(jac - ref).max() / np.abs(ref).max()
        assert err <= 1e-2, f"trial {trial}: relative error {err:.2e}"


def test_lie_germ_constant_image_is_zero():
    img = Image(np.full((96, 96), 0.3))
    jac = lie_germ_token(BANK, img, (48, 48), IDENTITY)
    assert np.abs(jac).max() < 1e-9


def test_lie_germ_finite_on_random_input():
    img = make_texture(128, 51)
    jac = lie_germ_token(BANK, img, (64.0, 63.2),
                         [1.05, 0.02, -0.03, 0.97, 2.0, -1.0])
    assert jac.shape == (18, 6)
    assert np.isfinite(jac).all()


def test_energy_mode_sign_invariance():
    ebank = GaborBank(energy=True)
    img = make_texture(128, 61)
    neg = Image(1.0 - img.data)
    a = token(ebank, img, (64, 64))
    b = token(ebank, neg, (64, 64))
    np.testing.assert_allclose(a.values, b.values, atol=1e-9)
    assert (a.values >= 0).all()


def test_energy_mode_jacobian_finite_differences():
    ebank = GaborBank(energy=True)
    img = make_texture(128, 67)
    center = (64.0, 64.0)
    p = IDENTITY + np.array([0.02, -0.01, 0.01, 0.03, 1.5, -2.0])
    jac = lie_germ_token(ebank, img, center, p)
    ref = fd_jacobian(ebank, img, center, p)
    assert np.abs(jac - ref).max() / np.abs(ref).max() <= 2e-2
