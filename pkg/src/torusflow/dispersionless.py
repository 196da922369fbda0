"""The dispersionless system u' = v, v' = -u^k: flows, period and offset times, and LIL diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from .gaussian import MeasureSpec, sample_arrays
from .spectral import FrequencyGrid, PhasePair, SpectralField, physical_size, plan


@dataclass(frozen=True)
class ScalarState:
    u: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError("state must be finite")

    def energy(self, k: int) -> float:
        return float(pointwise_hamiltonian(self.u, self.v, k))


def _check_k(k):
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    return int(k)


def pointwise_hamiltonian(u, v, k: int):
    """H = v^2/2 + u^{k+1}/(k+1), elementwise."""
    u = np.asarray(u, dtype=float)
    return 0.5 * np.asarray(v, dtype=float) ** 2 + u ** (k + 1) / (k + 1)


def _rhs(k):
    def f(t, y):
        m = y.size // 2
        return np.concatenate([y[m:], -y[:m] ** k])
    return f


def _integrate(u, v, k, t, tol, events=None):
    y0 = np.concatenate([np.ravel(u), np.ravel(v)]).astype(float)
    sol = integrate.solve_ivp(_rhs(k), (0.0, float(t)), y0, method="DOP853", rtol=tol, atol=tol,
                              events=events, dense_output=False)
    if sol.status < 0:
        raise FloatingPointError(f"integration failed: {sol.message}")
    return sol


def scalar_flow(s0: ScalarState, k: int, t: float, tol: float = 1e-10) -> ScalarState:
    """Advance one point of the dispersionless system by time t (t may be negative)."""
    k = _check_k(k)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t == 0:
        return s0
    sol = _integrate(s0.u, s0.v, k, t, tol)
    return ScalarState(float(sol.y[0, -1]), float(sol.y[1, -1]))


def pointwise_flow(u: np.ndarray, v: np.ndarray, k: int, t: float, tol: float = 1e-10):
    """Apply the scalar flow to every entry of the arrays u, v at once."""
    k = _check_k(k)
    if not tol > 0:
        raise ValueError("tol must be positive")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same shape")
    if t == 0 or u.size == 0:
        return u.copy(), v.copy()
    sol = _integrate(u, v, k, t, tol)
    m = u.size
    return sol.y[:m, -1].reshape(u.shape), sol.y[m:, -1].reshape(v.shape)


def field_flow(p0: PhasePair, k: int, t: float, tol: float = 1e-10, size: int | None = None):
    """Pointwise flow of the physical values of p0 on an L^d grid.

    Returns (pair, u_values, v_values).  The pair holds the trigonometric
    interpolant of the evolved values restricted to |n| <= (L - 1) / 2, so it is
    exact only up to the interpolation error of a non-band-limited field.
    """
    g = p0.grid
    L = physical_size(g.N) if size is None else int(size)
    pl = plan(g.d, g.N, L)
    u = pl.to_real(p0.u.coeffs)
    v = pl.to_real(p0.v.coeffs)
    u1, v1 = pointwise_flow(u, v, k, t, tol)
    M = (L - 1) // 2
    out = plan(g.d, M, L)
    grid = FrequencyGrid(g.d, M)
    pair = PhasePair(SpectralField(grid, out.from_real(u1)), SpectralField(grid, out.from_real(v1)))
    return pair, u1, v1


# ---------------------------------------------------------------- period and offset

def _alpha(k):
    return k / (k + 1)


def _prefactor(H0, k):
    return np.sqrt(2 * H0) * ((k + 1) * H0) ** (-_alpha(k))


def _check_h0(H0):
    if not (np.isfinite(H0) and H0 > 0):
        raise ValueError(f"H0 must be positive, got {H0}")


def _tail_integral(y0, a):
    """int_{y0}^1 (1 - y^2)^{-a} dy by adaptive quadrature with the endpoint weight (1 - y)^{-a}."""
    if y0 >= 1:
        return 0.0
    val, _ = integrate.quad(lambda y: (1 + y) ** (-a), y0, 1.0, weight="alg", wvar=(0.0, -a),
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return float(val)


def _tail_closed(y0, a):
    """Same integral through the regularized incomplete Beta function."""
    b = special.beta(0.5, 1 - a)
    return float(0.5 * b * special.betaincc(0.5, 1 - a, y0 * y0))


def period(H0: float, k: int, method: str = "quad") -> float:
    """Period of the orbit H(u, v) = H0: T = 4 int_0^{sqrt(2 H0)} dv / u(v)^k.

    method "quad" integrates the weakly singular kernel adaptively, "beta" uses
    the closed form (1/2) B(1/2, 1/(k+1)).
    """
    k = _check_k(k)
    _check_h0(H0)
    if k == 1:
        return 2 * np.pi
    a = _alpha(k)
    inner = _tail_integral(0.0, a) if method == "quad" else _tail_closed(0.0, a)
    return float(4 * _prefactor(H0, k) * inner)


def period_alt_exponent(H0: float, k: int) -> float:
    """Period formula with the exponent 1/(k+1) in place of k/(k+1); kept to report how far it is from the orbit time."""
    k = _check_k(k)
    _check_h0(H0)
    b = 1.0 / (k + 1)
    inner = _tail_integral(0.0, b)
    return float(4 * (2 * H0) ** (0.5 - b) / (k + 1) ** b * inner)


def delta_offset(v0_abs: float, H0: float, k: int, method: str = "quad") -> float:
    """Time to run from (u0, v0) with u0 <= 0 to (-u0, v0) through u = 0.

    Equal to 2 int_{|v0|}^{sqrt(2 H0)} dv / u(v)^k; Delta(0) = T/2, Delta(sqrt(2 H0)) = 0.
    """
    k = _check_k(k)
    _check_h0(H0)
    vmax = np.sqrt(2 * H0)
    if not (0 <= v0_abs <= vmax * (1 + 1e-14)):
        raise ValueError(f"|v0| must lie in [0, sqrt(2 H0)] = [0, {vmax}], got {v0_abs}")
    y0 = min(v0_abs / vmax, 1.0)
    if k == 1:
        return float(2 * np.arccos(y0))
    a = _alpha(k)
    inner = _tail_integral(y0, a) if method == "quad" else _tail_closed(y0, a)
    return float(2 * _prefactor(H0, k) * inner)


def return_time(H0: float, k: int, tol: float = 1e-12) -> float:
    """Period from event detection: the gap between two downward crossings of u = 0."""
    k = _check_k(k)
    _check_h0(H0)
    ev = lambda t, y: y[0]  # noqa: E731
    ev.direction = -1
    horizon = 2.6 * period(H0, k, method="beta")
    sol = _integrate(0.0, np.sqrt(2 * H0), k, horizon, tol, events=ev)
    t = sol.t_events[0]
    if len(t) < 2:
        raise FloatingPointError("fewer than two crossings detected")
    return float(t[1] - t[0])


def offset_time(u0: float, v0: float, k: int, tol: float = 1e-12) -> float:
    """Event-detected time from (u0, v0), u0 < 0, v0 >= 0, to the first crossing of u = -u0."""
    k = _check_k(k)
    if not (u0 < 0 and v0 >= 0):
        raise ValueError("need u0 < 0 and v0 >= 0")
    H0 = float(pointwise_hamiltonian(u0, v0, k))
    ev = lambda t, y: y[0] + u0  # noqa: E731
    ev.direction = 1
    ev.terminal = True
    sol = _integrate(u0, v0, k, 1.1 * period(H0, k, method="beta"), tol, events=ev)
    if not len(sol.t_events[0]):
        raise FloatingPointError("no crossing detected")
    return float(sol.t_events[0][0])


def max_bin_mass(values, bins=(10, 20, 40, 80, 160)) -> np.ndarray:
    """Largest histogram bin mass at each resolution; tends to zero for an atomless law."""
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    lo, hi = x.min(), x.max()
    return np.array([np.histogram(x, bins=b, range=(lo, hi))[0].max() / len(x) for b in bins])


def point_energies(spec: MeasureSpec, seed: int, samples: int, k: int | None = None):
    """H0 = H(u(0), v(0)) and |v(0)| at the origin for independent samples of the measure."""
    k = spec.k if k is None else k
    idx = np.arange(samples)
    U, V = sample_arrays(spec, seed, idx)
    axes = tuple(range(1, spec.d + 1))
    u0 = U.sum(axis=axes).real
    v0 = V.sum(axis=axes).real
    return pointwise_hamiltonian(u0, v0, k), np.abs(v0)


# ---------------------------------------------------------------- law of the iterated logarithm

@dataclass
class LilReport:
    h_grid: np.ndarray
    ratio_samples: np.ndarray
    fitted_exponent: float
    expected_exponent: float
    regime: int
    line_index: float
    r: int
    structure: np.ndarray
    lags: np.ndarray

    def __post_init__(self):
        if not np.all(np.diff(self.h_grid) < 0):
            raise ValueError("h_grid must be strictly decreasing")

    @property
    def error(self) -> float:
        return abs(self.fitted_exponent - self.expected_exponent)


def lil_regime(line_index: float, r: int):
    """(regime, expected increment exponent) for the r-th derivative of a line field of index s."""
    a = line_index - r
    if 0.5 < a < 1.5:
        return 1, a - 0.5
    if np.isclose(a, 1.5):
        return 2, 1.0
    raise ValueError(f"s - r = {a:g} is outside (1/2, 3/2]; choose r = {max(0, int(np.ceil(line_index - 1.5)))}")


def default_r(line_index: float) -> int:
    return 0 if line_index <= 1.5 else int(np.ceil(line_index - 1.5))


def default_h_grid(N: int, count: int = 4, lo: float = 12.0):
    """Dyadic lags 2 pi 2^{-j}, largest below 1/2, smallest with h N >= lo."""
    js = np.arange(3, 40)
    h = 2 * np.pi / 2.0 ** js
    h = h[(h < 0.5) & (h * N >= lo)]
    return h[:count]


def _normalizer(h, a, regime):
    h = np.asarray(h, dtype=float)
    ll = np.log(np.maximum(np.log(1 / h), np.e))  # floored at 1 where log log is not yet defined
    if regime == 1:
        return np.sqrt(h ** (2 * a - 1) * ll)
    return np.sqrt(h ** 2 * np.log(1 / h) * np.log(np.maximum(ll, np.e)))


def lil_statistics(spec: MeasureSpec, r: int | None = None, samples: int = 1000, h_grid=None, seed: int = 0,
                   axis: int = 0, oversample: int = 2, batch: int = 32) -> LilReport:
    """Increments of d^r v along a coordinate line through the sampled field.

    The line restriction of a d-dimensional field of index s has index s - (d-1)/2,
    and that index sets the regime.  ratio_samples[i, j] is the max over the line
    of |d^r v(x + h_j) - d^r v(x)| / normaliser(h_j); the fitted exponent is half
    the log-log slope of the empirical structure function E|increment|^2.
    """
    d, N = spec.d, spec.N
    s_line = spec.s - 0.5 * (d - 1)
    r = default_r(s_line) if r is None else int(r)
    regime, expected = lil_regime(s_line, r)
    L = 1 << int(np.ceil(np.log2(oversample * (2 * N + 1))))  # dyadic lags land on the grid
    step = 2 * np.pi / L
    h_grid = default_h_grid(N) if h_grid is None else np.asarray(h_grid, dtype=float)
    if h_grid.ndim != 1 or len(h_grid) < 2:
        raise ValueError("h_grid needs at least two lags")
    if not np.all(np.diff(h_grid) < 0):
        raise ValueError("h_grid must be strictly decreasing")
    lags = np.rint(h_grid / step).astype(int)
    if np.any(lags < 1) or np.any(np.abs(lags * step - h_grid) > 1e-9 * np.maximum(h_grid, 1)):
        raise ValueError(f"every lag must be a positive multiple of the grid step 2 pi / {L}")
    if np.any(h_grid * N < 1):
        raise ValueError(f"lags below 1/N = {1 / N:g} are not resolved by the truncated field")
    n0 = np.arange(N + 1)
    sym = (1j * n0) ** r
    other = tuple(a for a in range(1, d + 1) if a != axis + 1)
    norm = _normalizer(h_grid, s_line - r, regime)
    ratios, struct = [], np.zeros(len(h_grid))
    for lo in range(0, samples, batch):
        idx = np.arange(lo, min(lo + batch, samples))
        _, V = sample_arrays(spec, seed, idx)
        c = V.sum(axis=other)[:, N:] * sym  # coefficients of the line restriction, n0 >= 0
        H = np.zeros((len(idx), L // 2 + 1), dtype=complex)
        H[:, : N + 1] = c * L
        line = sfft.irfft(H, n=L, axis=-1)
        inc = np.stack([np.roll(line, -m, axis=-1) - line for m in lags], axis=1)
        ratios.append(np.abs(inc).max(axis=-1) / norm)
        struct += np.sum(np.mean(inc ** 2, axis=-1), axis=0)
    struct /= samples
    slope = np.polyfit(np.log(h_grid), np.log(struct), 1)[0]
    return LilReport(h_grid, np.concatenate(ratios), float(slope / 2), float(expected), regime,
                     float(s_line), r, struct, lags)


def exact_structure_function(spec: MeasureSpec, h_grid, r: int = 0, axis: int = 0) -> np.ndarray:
    """E|d^r v(x + h) - d^r v(x)|^2 along a coordinate line, summed exactly over the lattice."""
    from .gaussian import coefficient_weights

    grid = spec.grid
    _, wv = coefficient_weights(spec, grid)
    n0 = grid.wavenumbers[axis]
    var = wv ** 2 * np.abs(n0) ** (2 * r)
    return np.array([np.sum(var * 2 * (1 - np.cos(n0 * h))) for h in np.asarray(h_grid, dtype=float)])
