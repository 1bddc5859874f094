import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etdms.spectral import (
    PeriodicGrid,
    SpectralField,
    apply_biharmonic,
    dealias,
    divergence,
    gradient,
    l2_norm_squared,
    laplacian,
    to_physical,
    to_spectral,
)

TWO_PI = 2 * np.pi


def brute_dft(values):
    # Direct O(N^4) sum, independent of numpy.fft.
    n = values.shape[0]
    j = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(j, j) / n)
    return w @ values @ w.T


def test_grid_validation():
    with pytest.raises(ValueError):
        PeriodicGrid(7)
    with pytest.raises(ValueError):
        PeriodicGrid(6)
    with pytest.raises(ValueError):
        PeriodicGrid(16, length=0.0)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        to_spectral(np.zeros((8, 8)), PeriodicGrid(16))


def test_constant_has_only_dc_mode():
    g = PeriodicGrid(16)
    c = to_spectral(np.full((16, 16), 3.0), g).coeffs
    assert c[0, 0] == pytest.approx(3.0 * 256)
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-10


def test_sin_cos_four_modes_match_brute_dft():
    g = PeriodicGrid(16, TWO_PI)
    x, y = g.coordinates
    v = np.sin(x) * np.cos(y)
    c = to_spectral(v, g).coeffs
    np.testing.assert_allclose(c, brute_dft(v), atol=1e-10)
    nz = np.argwhere(np.abs(c) > 1e-9)
    idx = {(int(g.indices[a]), int(g.indices[b])) for a, b in nz}
    assert idx == {(1, 1), (1, -1), (-1, 1), (-1, -1)}
    np.testing.assert_allclose(np.abs(c[np.abs(c) > 1e-9]), 16**2 / 4)


def test_random_field_hermitian_and_roundtrip():
    g = PeriodicGrid(32)
    v = np.random.default_rng(1).standard_normal((32, 32))
    c = to_spectral(v, g).coeffs
    flipped = np.conj(np.roll(np.flip(c), 1, axis=(0, 1)))
    np.testing.assert_allclose(c, flipped, atol=1e-12)
    np.testing.assert_allclose(to_physical(SpectralField(c, g)), v, atol=1e-12)


def test_biharmonic_eigenvalues():
    g = PeriodicGrid(32, TWO_PI)
    x, y = g.coordinates
    np.testing.assert_allclose(apply_biharmonic(to_spectral(np.sin(x), g)).to_physical(), np.sin(x), atol=1e-11)
    np.testing.assert_allclose(
        apply_biharmonic(to_spectral(np.sin(2 * x), g)).to_physical(), 16 * np.sin(2 * x), atol=1e-10
    )
    assert np.abs(apply_biharmonic(to_spectral(np.ones_like(x), g)).coeffs).max() == 0


def test_biharmonic_against_finite_differences():
    n = 256
    g = PeriodicGrid(n, TWO_PI)
    x, _ = g.coordinates
    v = np.sin(2 * x)
    h = g.spacing
    # Fourth difference along x (the field is y-independent).
    fd = (np.roll(v, -2, 0) - 4 * np.roll(v, -1, 0) + 6 * v - 4 * np.roll(v, 1, 0) + np.roll(v, 2, 0)) / h**4
    via_fft = apply_biharmonic(to_spectral(v, g)).to_physical()
    np.testing.assert_allclose(via_fft, fd, atol=16 * 2e-3)


def test_gradient_and_divergence():
    g = PeriodicGrid(32, TWO_PI)
    x, y = g.coordinates
    gx, gy = gradient(to_spectral(np.sin(x), g))
    np.testing.assert_allclose(gx.to_physical(), np.cos(x), atol=1e-12)
    np.testing.assert_allclose(gy.to_physical(), 0, atol=1e-12)
    lap = divergence(*gradient(to_spectral(np.sin(2 * y), g)))
    np.testing.assert_allclose(lap.to_physical(), -4 * np.sin(2 * y), atol=1e-11)
    cx, cy = gradient(to_spectral(np.full_like(x, 2.0), g))
    assert np.abs(cx.coeffs).max() == np.abs(cy.coeffs).max() == 0


def test_divergence_grid_mismatch():
    a = SpectralField.zeros(PeriodicGrid(16))
    b = SpectralField.zeros(PeriodicGrid(32))
    with pytest.raises(ValueError):
        divergence(a, b)
    with pytest.raises(ValueError):
        a + b


def test_laplacian_matches_div_grad_off_nyquist():
    g = PeriodicGrid(16)
    c = to_spectral(np.random.default_rng(2).standard_normal((16, 16)), g)
    a, b = laplacian(c).coeffs, divergence(*gradient(c)).coeffs
    keep = (np.abs(g.indices) < 8)[:, None] & (np.abs(g.indices) < 8)[None, :]
    np.testing.assert_allclose(a[keep], b[keep], atol=1e-10)


def test_dealias_cases():
    g = PeriodicGrid(16, TWO_PI)
    x, y = g.coordinates
    f = to_spectral(np.sin(x) * np.cos(y), g)
    np.testing.assert_allclose(dealias(f).coeffs, f.coeffs, atol=1e-13)
    nyq = to_spectral(np.cos(8 * x), g)
    assert np.abs(nyq.coeffs).max() > 0
    assert np.abs(dealias(nyq).coeffs).max() == 0


def test_dealias_white_noise_n32():
    g = PeriodicGrid(32)
    f = to_spectral(np.random.default_rng(3).standard_normal((32, 32)), g)
    kept = np.abs(dealias(f).coeffs) > 0
    j = np.abs(g.indices)
    expect = (j <= 10)[:, None] & (j <= 10)[None, :]
    np.testing.assert_array_equal(kept, expect)
    assert expect.sum() == 21**2


def test_l2_norm_parseval():
    g = PeriodicGrid(16)
    v = np.random.default_rng(4).standard_normal((16, 16))
    direct = (v**2).sum() * g.spacing**2
    assert l2_norm_squared(to_spectral(v, g).coeffs, g) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_linearity_and_translation(seed, a):
    g = PeriodicGrid(16)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, 16, 16))
    fu, fv = to_spectral(u, g), to_spectral(v, g)
    np.testing.assert_allclose(apply_biharmonic(fu * a + fv).coeffs,
                               (apply_biharmonic(fu) * a + apply_biharmonic(fv)).coeffs, atol=1e-8)
    # Grid shifts commute with every diagonal operator.
    shifted = to_spectral(np.roll(u, 3, axis=0), g)
    np.testing.assert_allclose(laplacian(shifted).to_physical(),
                               np.roll(laplacian(fu).to_physical(), 3, axis=0), atol=1e-9)
