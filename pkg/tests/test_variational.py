import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusflow.gaussian import MeasureSpec
from torusflow.variational import (
    DriftFamily,
    admissible_q,
    check_q,
    drifted_terminal,
    objective,
    optimize_drift,
    potential_floor,
    potential_terms,
    q_constraints,
    simulate_paths,
)

SPEC = MeasureSpec(d=2, k=3, N=3)


def test_q_conditions():
    assert admissible_q(3) == 1 and admissible_q(5) == 2
    assert check_q(3, 1) == pytest.approx(2.0)
    c = q_constraints(5, 1)
    assert c["holder_r"] and not c["cubic_term"]
    with pytest.raises(ValueError):
        check_q(5, 1)
    assert check_q(5, 2) == pytest.approx(1 / (1 - 4 / 12))


def test_paths_share_the_terminal_draw():
    a = simulate_paths(SPEC, 1, 7, samples=5)
    b = simulate_paths(SPEC, 8, 7, samples=5)
    assert np.allclose(a.terminal(), b.terminal(), atol=1e-13)
    W = b.brownian()
    assert np.allclose(W[:, -1], b.increments.sum(axis=1))
    with pytest.raises(ValueError):
        simulate_paths(SPEC, 0, 7, samples=5)


def test_increment_variance():
    p = simulate_paths(SPEC, 4, 1, samples=2000)
    inc = p.increments
    # every increment has variance 1/M and the terminal value has variance 1
    assert abs(inc.var() * 4 - 1) < 0.03
    assert abs(inc.sum(axis=1).var() - 1) < 0.03


def test_family_shapes():
    fam = DriftFamily.build(SPEC, "piecewise_state_feedback", n_low=1, pieces=2)
    assert fam.size == 2 * len(fam.low) + 4 * fam.n_groups
    assert len(fam.low) == 5  # the zero mode and the cos/sin pairs of (1, 0), (0, 1)
    with pytest.raises(ValueError):
        fam.unpack(np.zeros(fam.size + 1))
    with pytest.raises(ValueError):
        DriftFamily.build(SPEC, "neural")
    const = DriftFamily.build(SPEC, "constant_in_time")
    assert const.pieces == 0 and const.size == 2 * len(const.low)


def test_zero_drift_objective_is_the_potential():
    path = simulate_paths(SPEC, 4, 2, samples=20)
    fam = DriftFamily.build(SPEC, "piecewise_state_feedback")
    vals = objective(path, fam, fam.zeros())
    assert np.allclose(vals, potential_terms(SPEC, path.terminal()))
    both = potential_terms(SPEC, path.terminal())
    parts = potential_terms(SPEC, path.terminal(), use_energy=False) + potential_terms(SPEC, path.terminal(), use_r=False)
    assert np.allclose(both, parts)
    with pytest.raises(ValueError):
        objective(path, fam, fam.zeros(), spec=SPEC.with_(N=4))


def test_optimiser_trace_is_monotone():
    res = optimize_drift(SPEC, M=4, iters=3, samples=100, fresh=200)
    vals = [v for _, v, _ in res.trace]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert res.trace_monotone() and not res.diverged
    assert np.isfinite(res.bound.mean) and np.isfinite(res.zero_drift.mean)


def test_potential_bounded_below():
    assert np.isfinite(potential_floor(SPEC, samples=500, batch=250))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(-2, 2))
def test_constant_drift_closed_form(seed, M, b):
    # theta = b on the low coordinates: the cost is |b|^2 / 2 and Y(1) shifts by scale * b
    path = simulate_paths(SPEC, M, seed, samples=3)
    fam = DriftFamily.build(SPEC, "constant_in_time")
    params = np.full(fam.size, b)
    Y, cost, drift = drifted_terminal(path, fam, params)
    assert np.allclose(cost, 0.5 * fam.size * b * b)
    shift = np.zeros_like(Y[0])
    shift[..., fam.low] = b
    assert np.allclose(Y, path.terminal() + path.scale * shift)
    assert drift.theta.shape == path.increments.shape


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_feedback_control_is_adapted(seed, M):
    # theta at step i only reads the state at t_i: perturbing later increments leaves it unchanged
    fam = DriftFamily.build(SPEC, "piecewise_state_feedback", pieces=2)
    params = np.random.default_rng(seed).standard_normal(fam.size) * 0.3
    path = simulate_paths(SPEC, M, seed, samples=2)
    _, _, d1 = drifted_terminal(path, fam, params)
    inc = path.increments.copy()
    inc[:, M - 1] += 1.0
    other = type(path)(path.spec, inc, path.scale, path.seed, path.indices)
    _, _, d2 = drifted_terminal(other, fam, params)
    assert np.array_equal(d1.theta, d2.theta)
