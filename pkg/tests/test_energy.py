import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusflow.energy import (
    commutator_decomposition,
    chain_identity_check,
    dt_energy_rhs,
    energy_breakdown,
    fd_energy_derivative,
    log_cov_weight,
    remainder_shell_profile,
)
from torusflow.flow import FlowConfig
from torusflow.gaussian import MeasureSpec, sample, sigma_N
from torusflow.spectral import FrequencyGrid, PhasePair, SpectralField, from_real_coordinates, real_coordinates

TWO_PI = 2 * np.pi


def draw(spec, seed=0, index=0):
    return sample(spec, seed, index).pair


def test_zero_state():
    spec = MeasureSpec(d=2, k=3, N=4)
    e = energy_breakdown(PhasePair.zeros(spec.grid), spec)
    assert e.quadratic_part == 0 and e.wick_term == 0 and e.renormalized == 0
    assert dt_energy_rhs(PhasePair.zeros(spec.grid), spec) == 0


@pytest.mark.parametrize("k", [3, 5])
def test_constant_state_closed_form(k):
    # D^s kills constants, so the Wick factor is -sigma_N everywhere
    spec = MeasureSpec(d=2, k=k, N=4)
    g = spec.grid
    c, b = 0.8, -0.45
    vol, sig = TWO_PI ** 2, sigma_N(spec)
    p = PhasePair(SpectralField.constant(g, c), SpectralField.constant(g, b))
    e = energy_breakdown(p, spec)
    assert e.quadratic_part == pytest.approx(0.5 * (vol * c) ** 2, rel=1e-12)
    assert e.wick_term == pytest.approx(-0.5 * k * vol * sig * c ** (k - 1), rel=1e-12)
    assert e.potential_term == pytest.approx(vol * c ** (k + 1) / (k + 1), rel=1e-12)
    parts = dt_energy_rhs(p, spec, parts=True)
    assert parts["commutator_term"] == pytest.approx(0, abs=1e-12)
    expect = vol ** 2 * c * b - 0.5 * k * (k - 1) * vol * sig * b * c ** (k - 2)
    assert parts["dt_rhs"] == pytest.approx(expect, rel=1e-12)


def test_breakdown_identities():
    spec = MeasureSpec(d=2, k=3, N=8)
    e = energy_breakdown(draw(spec, 1), spec)
    a, b = e.identity_defects()
    assert a < 1e-13 and b < 1e-13


@pytest.mark.parametrize("s", [2.7, 3.3])
def test_rhs_matches_finite_differences(s):
    spec = MeasureSpec(d=2, s=s, k=3, N=8)
    for i in range(3):
        p = draw(spec, 2, i)
        exact = dt_energy_rhs(p, spec)
        fd = fd_energy_derivative(p, spec, h=1e-3)
        assert abs(exact - fd) <= 1e-6 * max(1.0, abs(exact))


def test_commutator_examples():
    g = FrequencyGrid(2, 8)
    u = from_real_coordinates(g, np.random.default_rng(0).standard_normal(len(real_coordinates(SpectralField.zeros(g)))))
    c = commutator_decomposition(SpectralField.constant(g, 2.0), u, 2.6)
    assert np.abs(c.lhs.coeffs).max() < 1e-10
    assert not c.f1.coeffs.any() and not c.f2.coeffs.any()
    with pytest.raises(ValueError):
        commutator_decomposition(SpectralField.zeros(FrequencyGrid(2, 4)), u, 2.6)


def test_commutator_remainder_is_smaller():
    # smooth low-frequency w against rough u: R carries fewer derivatives than F1
    g = FrequencyGrid(2, 32)
    w = SpectralField.cosine(g, (1, 0)) + SpectralField.cosine(g, (1, 1), 0.5)
    rng = np.random.default_rng(1)
    u = from_real_coordinates(g, rng.standard_normal(len(real_coordinates(SpectralField.zeros(g)))))
    u = SpectralField(g, u.coeffs * (1 + g.norm_sq) ** -1.0)
    c = commutator_decomposition(w, u, 2.6)
    assert c.reconstruction_defect() < 1e-12
    js = range(2, 5)
    _, f1, s1 = remainder_shell_profile(c.f1, js)
    _, rem, sr = remainder_shell_profile(c.remainder, js)
    assert np.all(rem < f1) and sr < s1


def test_cov_weight_invariant_under_linear_flow():
    # the normalised form is (1 + |n|^{2s}) (|n|^2 |u|^2 + |v|^2) per mode, which rotation preserves
    spec = MeasureSpec(d=2, k=3, N=6)
    p = draw(spec, 3)
    p = PhasePair(SpectralField(p.grid, p.u.coeffs * (p.grid.norm > 0)), SpectralField(p.grid, p.v.coeffs * (p.grid.norm > 0)))
    cfg = FlowConfig(spec, dt=1e-2, linear_only=True)
    a = log_cov_weight(p, 0.0, cfg)
    assert np.isclose(log_cov_weight(p, 0.7, cfg), a, rtol=1e-12)
    assert a < 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3, 5]), st.floats(2.6, 3.4))
def test_chain_identity_and_breakdown(index, k, s):
    spec = MeasureSpec(d=2, s=s, k=k, N=6)
    p = draw(spec, 4, index)
    assert chain_identity_check(p, spec) < 1e-10
    e = energy_breakdown(p, spec)
    assert max(e.identity_defects()) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_rhs_is_odd_in_velocity(index, lam):
    # dt_rhs is linear in v at fixed u
    spec = MeasureSpec(d=2, k=3, N=6)
    p = draw(spec, 5, index)
    q = PhasePair(p.u, SpectralField(p.grid, lam * p.v.coeffs))
    assert np.isclose(dt_energy_rhs(q, spec), lam * dt_energy_rhs(p, spec), rtol=1e-10, atol=1e-9)
