import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import gamma as gamma_fn

from torusflow.estimates import (
    BallEvent,
    InsufficientSamples,
    McEstimate,
    _moment_norm,
    chaos_moment_growth,
    chaos_regularity,
    convolution_exponent,
    convolution_sum,
    convolution_tail,
    energy_shadow,
    exact_shell_energies,
    fit_exponent,
    partition_function,
    transport_diagnostic,
)
from torusflow.gaussian import MeasureSpec
from torusflow.importance import GaussianMixture, effective_sample_size, log_mean_exp, weighted_mean
from torusflow.spectral import FrequencyGrid


def direct_sum(n, alpha, beta, M):
    ax = np.arange(-M, M + 1)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    r2 = X ** 2 + Y ** 2 + Z ** 2
    d2 = (n[0] - X) ** 2 + (n[1] - Y) ** 2 + (n[2] - Z) ** 2
    term = (1.0 + r2) ** -alpha * (1.0 + d2) ** -beta
    return term[r2 <= M * M].sum()


def test_mc_estimate_basics():
    with pytest.raises(ValueError):
        McEstimate(1.0, -0.1, 10)
    with pytest.raises(ValueError):
        McEstimate(1.0, 0.1, 1)
    a, b = McEstimate(1.0, 0.1, 100), McEstimate(1.5, 0.1, 100)
    assert a.agrees(b, 4) and not a.agrees(b, 3)
    assert a.to_dict()["samples"] == 100


def test_moment_norm_gaussian_closed_form():
    x = np.random.default_rng(0).standard_normal(200_000)
    for p in (2, 4, 8):
        exact = (2 ** (p / 2) * gamma_fn((p + 1) / 2) / np.sqrt(np.pi)) ** (1 / p)
        m, se = _moment_norm(x, p)
        assert abs(m - exact) < 4 * se


def test_error_bar_halves_with_four_times_the_samples():
    rng = np.random.default_rng(1)
    se = [_moment_norm(rng.standard_normal(n), 4)[1] for n in (20_000, 80_000)]
    assert 1.7 < se[0] / se[1] < 2.3


def test_fit_exponent():
    p = np.array([2, 4, 8, 16])
    assert np.isclose(fit_exponent(p, 3 * (p - 1.0) ** 0.5, shift=1), 0.5)
    assert np.isclose(fit_exponent(p, p ** 1.5), 1.5)
    assert np.isnan(fit_exponent(p, -p))


def test_chaos_regularity():
    spec = MeasureSpec(d=3, s=2.6)
    assert np.isclose(chaos_regularity(spec, "holder_u"), 2.05)
    assert np.isclose(chaos_regularity(spec, "holder_v"), 1.05)
    assert np.isclose(chaos_regularity(spec, "product_field", alpha=2, beta=2), 0.45)
    with pytest.raises(ValueError):
        chaos_regularity(spec, "product_field", alpha=0.5, beta=0.5)
    with pytest.raises(ValueError):
        chaos_regularity(spec, "holder_w")


def test_chaos_growth_small_run():
    spec = MeasureSpec(d=2, s=2.6, N=8)
    with pytest.raises(InsufficientSamples):
        chaos_moment_growth(spec, "holder_u", samples=100)
    rep = chaos_moment_growth(spec, "holder_u", p_list=(2, 4, 8), samples=1200, batch=16, chunk=400)
    assert np.all(np.abs(rep.second_moment_z()) < 4.5)
    # empirical L^p norms of a fixed sample grow with p
    assert all(a.mean <= b.mean for a, b in zip(rep.raw, rep.raw[1:]))
    assert 0 < rep.exponent < 1.5
    same = chaos_moment_growth(spec, "holder_u", p_list=(2, 4, 8), samples=1200, batch=16, chunk=800)
    assert np.array_equal(same.values, rep.values)


def test_product_field_shell_energies_positive():
    spec = MeasureSpec(d=3, s=2.6, N=4)
    en = exact_shell_energies(spec, "product_field")
    assert np.all(en >= 0) and en.sum() > 0


def test_convolution_matches_direct_summation():
    for n, a, b in [((0, 0, 0), 1.0, 1.0), ((2, 1, 0), 1.0, 1.0), ((3, 0, 0), 0.8, 2.0)]:
        r = convolution_sum(n, a, b, M=12)
        assert np.isclose(r.value, direct_sum(n, a, b, 12), rtol=1e-12)
        assert np.isclose(sum(r.regions), r.value, rtol=1e-12)
    assert convolution_exponent(1, 1) == 1 and convolution_exponent(0.8, 2.0) == 1.6
    with pytest.raises(ValueError):
        convolution_sum((0, 0, 0), 0.5, 0.5)
    with pytest.raises(ValueError):
        convolution_sum((1, 0), 1, 1)


def test_convolution_tail_is_an_upper_bound():
    n = (4, 0, 0)
    small, big = convolution_sum(n, 1.0, 1.0, M=10), convolution_sum(n, 1.0, 1.0, M=40)
    assert 0 < big.value - small.value <= small.tail
    with pytest.raises(ValueError):
        convolution_tail(n, 1.0, 1.0, 3)


def test_convolution_monotone_in_exponents():
    n = (5, 0, 0)
    base = convolution_sum(n, 1.0, 1.0, M=15).value
    assert convolution_sum(n, 1.3, 1.0, M=15).value < base
    assert convolution_sum(n, 1.0, 1.3, M=15).value < base


def test_ball_event():
    g = FrequencyGrid(2, 2)
    with pytest.raises(ValueError):
        BallEvent([("w", 0.0, 1.0, "le")])
    with pytest.raises(ValueError):
        BallEvent([("u", 0.0, 1.0, "lt")])
    U = np.zeros((3,) + g.shape, dtype=complex)
    zero = (2, 2)
    U[1][zero] = 0.5 / np.sqrt(g.volume)  # ||u||_{L^2} = 0.5
    U[2][zero] = 2.0 / np.sqrt(g.volume)
    ev = BallEvent([("u", 0.0, 1.0, "le")])
    assert list(ev.contains(g, U, U)) == [True, True, False]
    assert list(BallEvent([("u", 0.0, 1.0, "ge")]).contains(g, U, U)) == [False, False, True]
    assert BallEvent().contains(g, U, U).all()


def test_partition_small():
    spec = MeasureSpec(d=2, k=3, N=2)
    rep = partition_function(spec, samples=400, seed=3)
    assert rep.Z.mean > 0 and np.isfinite(rep.Z.log_mean)
    assert rep.jensen_holds()
    ln = [rep.lp_norms[p] for p in (1, 2, 4)]
    # Lyapunov: ||e^F||_p is nondecreasing in p
    for a, b in zip(ln, ln[1:]):
        assert a.log_mean <= b.log_mean + 3 * np.hypot(a.log_std_error, b.log_std_error)
    with pytest.raises(ValueError):
        partition_function(spec, samples=10, proposal="uniform")


def test_transport_trivial_cases():
    spec = MeasureSpec(d=2, k=3, N=2)
    full = transport_diagnostic(spec, BallEvent(), 0.5, samples=200, seed=1)
    assert full.rho_A.mean == pytest.approx(1) and full.rho_flowA.mean == pytest.approx(1)
    assert full.rho_flowA_cov.mean == pytest.approx(1)
    ev = BallEvent([("u", 0.0, 6.25, "le")])
    rep = transport_diagnostic(spec, ev, 0.0, samples=400, seed=2)
    assert rep.agree(3) and rep.rho_flowA.agrees(rep.rho_A, 3)


def test_energy_shadow_small():
    spec = MeasureSpec(d=2, k=3, N=4)
    rep = energy_shadow(spec, samples=200, radius=1e9)
    assert rep.ball_fraction == 1.0
    means = [e.mean for e in rep.norms]
    assert means == sorted(means)
    assert energy_shadow(spec, samples=64, radius=0.0).ball_fraction == 0.0


def test_mixture_logpdf_matches_dense_gaussian():
    rng = np.random.default_rng(4)
    m = 3
    A = rng.standard_normal((2, m, 2, 2))
    covs = np.einsum("cmij,cmkj->cmik", A, A) + 0.5 * np.eye(2)
    means = rng.standard_normal((2, 2, m))
    mix = GaussianMixture(np.array([0.3, 0.7]), means, covs)
    X = rng.standard_normal((5, 2, m))

    def dense(c):
        # coordinates ordered (u_0, v_0, u_1, v_1, ...)
        cov = np.zeros((2 * m, 2 * m))
        for i in range(m):
            cov[2 * i:2 * i + 2, 2 * i:2 * i + 2] = covs[c, i]
        mu = means[c].T.reshape(-1)
        return stats.multivariate_normal(mu, cov).pdf(np.swapaxes(X, 1, 2).reshape(5, -1))

    expect = np.log(0.3 * dense(0) + 0.7 * dense(1))
    assert np.allclose(mix.logpdf(X), expect, rtol=1e-12)
    with pytest.raises(ValueError):
        GaussianMixture(np.array([0.5, 0.6]), means, covs)


def test_weight_helpers():
    assert np.isclose(effective_sample_size(np.zeros(50)), 50)
    assert np.isclose(effective_sample_size([0.0, -np.inf, -np.inf]), 1)
    lw = np.log(np.array([1.0, 2.0, 3.0]))
    lm, rel = log_mean_exp(lw)
    assert np.isclose(lm, np.log(2.0)) and np.isclose(rel, 1.0 / (2 * np.sqrt(3)))
    mean, _ = weighted_mean(lw, [0.0, 0.0, 1.0])
    assert np.isclose(mean, 0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(-6, 6), st.integers(-6, 6), st.integers(-6, 6), st.floats(0.8, 2.0), st.floats(0.8, 2.0))
def test_convolution_symmetry(a, b, c, alpha, beta):
    # swapping the exponents reflects n1 -> n - n1; the ball breaks that symmetry only in the tail
    n = (a, b, c)
    if 2 * alpha + 2 * beta <= 3:
        return
    r = convolution_sum(n, alpha, beta, M=14)
    s = convolution_sum(n, beta, alpha, M=14)
    assert abs(r.value - s.value) <= r.tail + s.tail
    assert r.value > 0 and r.ratio > 0
