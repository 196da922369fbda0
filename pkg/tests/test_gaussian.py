import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from torusflow.gaussian import (
    MeasureSpec,
    coefficient_weights,
    sample,
    sample_arrays,
    sigma_N,
    wick_square,
    wick_square_arrays,
)
from torusflow.spectral import FrequencyGrid, SpectralField, fractional_symbol, physical_size, sobolev_norm

# brute-force lattice sums of |n|^{2s} / (|n|^2 + |n|^{2s+2}) over 0 < |n| <= N, d = 3, s = 2.6
SIGMA_D3 = {8: 86.87537931985332, 16: 187.64925210819194, 32: 388.8328003195267, 64: 791.1095134445492}


@pytest.fixture(scope="module")
def draws():
    spec = MeasureSpec(d=2, s=2.6, k=3, N=4)
    U, V = sample_arrays(spec, 11, np.arange(10_000))
    return spec, U, V


def test_spec_validation():
    with pytest.raises(ValueError):
        MeasureSpec(k=4)
    with pytest.raises(ValueError):
        MeasureSpec(d=1)
    with pytest.raises(ValueError):
        MeasureSpec(N=0)
    with pytest.raises(ValueError):
        MeasureSpec(variant="xi")


def test_coefficients_centred(draws):
    spec, U, V = draws
    for C in (U, V):
        z = np.abs(C.mean(axis=0)) / (np.abs(C).std(axis=0) / np.sqrt(len(C)) + 1e-300)
        assert np.all(z[spec.grid.mask] < 4 * np.sqrt(2))


def test_coefficient_variances(draws):
    spec, U, V = draws
    wu, wv = coefficient_weights(spec)
    m = spec.grid.mask
    assert np.allclose(np.mean(np.abs(U) ** 2, axis=0)[m], wu[m] ** 2, rtol=0.05)
    assert np.allclose(np.mean(np.abs(V) ** 2, axis=0)[m], wv[m] ** 2, rtol=0.05)


def test_pointwise_variance_is_sigma(draws):
    spec, U, _ = draws
    ds = fractional_symbol(spec.grid, spec.s)
    x = np.real(np.sum(U * ds, axis=(1, 2)))  # (D^s u)(0)
    y = x ** 2
    se = y.std(ddof=1) / np.sqrt(len(y))
    assert abs(y.mean() - sigma_N(spec)) < 3 * se


def test_wick_square_mean_zero(draws):
    spec, U, _ = draws
    L = physical_size(spec.N, 2, 0)
    q = spec.grid.volume * wick_square_arrays(U, spec, L).mean(axis=(1, 2))
    assert abs(q.mean()) < 4 * q.std(ddof=1) / np.sqrt(len(q))


def test_sigma_values():
    assert sigma_N(MeasureSpec(d=3, s=2.6), 0) == 0
    for N, ref in SIGMA_D3.items():
        assert np.isclose(sigma_N(MeasureSpec(d=3, s=2.6, N=N)), ref, rtol=1e-13)
    spec = MeasureSpec(d=3, s=2.6)
    for N in (32, 64):
        assert abs(sigma_N(spec, 2 * N) / sigma_N(spec, N) - 2) < 0.1


def test_wick_square_examples():
    spec = MeasureSpec(d=2, s=2.6, N=3)
    g = spec.grid
    assert np.allclose(wick_square(SpectralField.zeros(g), spec), -sigma_N(spec))
    a, n = 0.7, (2, 1)
    q = wick_square(SpectralField.cosine(g, n, a), spec, size=16)
    x = np.arange(16) * 2 * np.pi / 16
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    phase = n[0] * X1 + n[1] * X2
    expect = a ** 2 * 5 ** spec.s * (1 + np.cos(2 * phase)) / 2 - sigma_N(spec)
    assert np.allclose(q, expect)
    with pytest.raises(ValueError):
        wick_square(SpectralField.cosine(FrequencyGrid(2, 5), (4, 0)), spec)


def test_determinism_and_prefix_coupling():
    spec = MeasureSpec(d=2, s=2.6, N=4)
    a = sample(spec, 5, 3).pair
    b = sample(spec, 5, 3).pair
    assert np.array_equal(a.u.coeffs, b.u.coeffs) and np.array_equal(a.v.coeffs, b.v.coeffs)
    big = sample(spec.with_(N=8), 5, 3).pair.u.resize(4)
    assert np.array_equal(big.coeffs, a.u.coeffs)
    assert a.u.is_real() and a.v.is_real()


def test_mu_variant_weights():
    spec = MeasureSpec(d=2, s=2.6, N=3, variant="mu")
    wu, wv = coefficient_weights(spec)
    br = 1 + spec.grid.norm_sq
    m = spec.grid.mask
    assert np.allclose(wu[m], br[m] ** (-(spec.s + 1) / 2))
    assert np.allclose(wv[m], br[m] ** (-spec.s / 2))


def test_sobolev_norms_tight_in_N():
    # sigma below s + 1 - d/2: the law of ||u_N||_{H^sigma} settles as N grows
    spec = MeasureSpec(d=2, s=2.6, N=16)
    sigma = spec.s + 1 - spec.d / 2 - 0.3

    def norms(N, seed):
        sp = spec.with_(N=N)
        U, _ = sample_arrays(sp, seed, np.arange(600))
        w = (1 + sp.grid.norm_sq) ** sigma
        return np.sqrt(sp.grid.volume * np.sum(w * np.abs(U) ** 2, axis=(1, 2)))

    assert stats.ks_2samp(norms(16, 1), norms(32, 2)).pvalue > 1e-3


def test_second_chaos_hypercontractivity():
    spec = MeasureSpec(d=2, s=2.6, N=8)
    L = physical_size(spec.N, 2, 0)
    x = np.arange(L) * 2 * np.pi / L
    phi = np.cos(x)[:, None] * np.ones(L)[None, :]
    vals = []
    for lo in range(0, 4000, 500):
        U, _ = sample_arrays(spec, 2, np.arange(lo, lo + 500))
        vals.append(spec.grid.volume * np.mean(wick_square_arrays(U, spec, L) * phi, axis=(1, 2)))
    X = np.concatenate(vals)
    l2 = np.sqrt(np.mean(X ** 2))
    for p in (4, 6, 8):
        assert np.mean(np.abs(X) ** p) ** (1 / p) / l2 <= p - 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 10 ** 6))
def test_samples_are_hermitian_and_reproducible(seed, index):
    spec = MeasureSpec(d=2, s=2.6, N=3)
    a = sample(spec, seed, index).pair
    assert a.u.hermitian_defect() == 0 and a.v.hermitian_defect() == 0
    assert np.isfinite(sobolev_norm(a.u, 1.0))
    b = sample(spec, seed, index).pair
    assert np.array_equal(a.u.coeffs, b.u.coeffs)
