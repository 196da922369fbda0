"""Variational upper bound on -log Z via drift optimisation over discretised adapted controls."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .estimates import McEstimate
from .gaussian import MeasureSpec, normal_stream
from .importance import PhaseTarget, nu_draws, nu_precision
from .spectral import FrequencyGrid, PhasePair, canonical_modes, from_real_coordinates


def q_constraints(k: int, q: int) -> dict:
    """The exponent conditions on q that keep the density bounded, with exact arithmetic."""
    k, q = int(k), int(q)
    a = Fraction(k - 1, q * (k + 1))
    out = {
        "holder_r": a < 1,
        "cubic_term": Fraction(k - 2, q * (k + 1)) + Fraction(1, 2) < 1,
        "lower_terms": all(Fraction(m - 1, q * (k + 1)) + Fraction(1, 2) < 1 for m in range(1, k - 1)),
    }
    out["r"] = float(1 / (1 - a)) if a < 1 else float("inf")
    return out


def check_q(k: int, q: int) -> float:
    """Validate q for nonlinearity k; returns the conjugate exponent r."""
    c = q_constraints(k, q)
    bad = [name for name in ("holder_r", "cubic_term", "lower_terms") if not c[name]]
    if bad:
        raise ValueError(f"q={q} is not admissible for k={k}: fails {', '.join(bad)}")
    return c["r"]


def admissible_q(k: int) -> int:
    """Smallest integer q passing every condition of `q_constraints`."""
    q = 1
    while True:
        c = q_constraints(k, q)
        if c["holder_r"] and c["cubic_term"] and c["lower_terms"]:
            return q
        q += 1


# ---------------------------------------------------------------- cylindrical paths

STREAM_PATH_U, STREAM_PATH_V = 2, 3


@dataclass(frozen=True, eq=False)
class CylindricalPath:
    """Brownian increments for a batch of paths in standard real coordinates.

    increments has shape (B, M, 2, m) with variance dt per entry; the physical state
    at time t is scale * X(t) with X the (drifted) Brownian path, so Y(1) has the nu law.
    """

    spec: MeasureSpec
    increments: np.ndarray
    scale: np.ndarray
    seed: int
    indices: np.ndarray

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def batch(self) -> int:
        return self.increments.shape[0]

    def brownian(self) -> np.ndarray:
        """X(t_i) for i = 0..M, shape (B, M + 1, 2, m)."""
        B, M, two, m = self.increments.shape
        out = np.zeros((B, M + 1, two, m))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def terminal(self) -> np.ndarray:
        """Y(1) in real coordinates, shape (B, 2, m)."""
        return self.scale * self.increments.sum(axis=1)

    def fields(self, b: int = 0, step: int | None = None) -> PhasePair:
        """Y(t_step) of path b as a coefficient pair (default t = 1)."""
        X = self.brownian()[b, self.steps if step is None else step] * self.scale
        grid = self.spec.grid
        return PhasePair(from_real_coordinates(grid, X[0]), from_real_coordinates(grid, X[1]))


def simulate_paths(spec: MeasureSpec, M: int, seed: int, samples: int = 1000, start: int = 0) -> CylindricalPath:
    """M-step Brownian increments for paths start .. start + samples - 1.

    Path i reads its u and v draws from the Philox streams (seed, i, 2) and
    (seed, i, 3).  The first m draws fix W(1); the next M m fill the increments
    conditionally on that sum, so Y(1) is the same draw for every M.
    """
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    M = int(M)
    prec = nu_precision(spec)
    m = prec.shape[1]
    idx = np.arange(start, start + samples)
    inc = np.empty((samples, M, 2, m))
    for b, i in enumerate(idx):
        for f, stream in enumerate((STREAM_PATH_U, STREAM_PATH_V)):
            z = normal_stream(seed, int(i), stream, (M + 1) * m)
            w1 = z[:m]
            eta = z[m:].reshape(M, m) / np.sqrt(M)
            inc[b, :, f] = w1 / M + eta - eta.mean(axis=0)
    return CylindricalPath(spec, inc, 1.0 / np.sqrt(prec), int(seed), idx)


# ---------------------------------------------------------------- drifts

FAMILIES = ("constant_in_time", "piecewise_state_feedback")


@dataclass(frozen=True)
class DriftFamily:
    """A finite-dimensional family of adapted drifts on standard coordinates.

    constant_in_time: theta(t) = b, one constant per real coordinate of the
    low modes |n| <= n_low.
    piecewise_state_feedback: theta(t) = b - g_{piece(t)} * X(t), with gains shared
    by a field and a dyadic shell of |n| and constant on `pieces` equal time pieces.
    theta(t_i) only reads X(t_i), so every member is adapted.
    """

    name: str
    low: np.ndarray
    groups: np.ndarray
    n_groups: int
    pieces: int = 1

    @classmethod
    def build(cls, spec: MeasureSpec, name: str, n_low: float = 1.0, pieces: int = 2) -> "DriftFamily":
        if name not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {name!r}")
        rep, _ = canonical_modes(spec.d, spec.N)
        norm = np.sqrt(FrequencyGrid(spec.d, spec.N).norm_sq[rep])
        cnorm = np.concatenate([[0.0], np.repeat(norm, 2)])
        low = np.flatnonzero(cnorm <= n_low + 1e-9)
        groups = np.where(cnorm < 1, 0, np.floor(np.log2(np.maximum(cnorm, 1))).astype(int) + 1)
        if name == "constant_in_time":
            pieces = 0
        elif int(pieces) != pieces or pieces < 1:
            raise ValueError("pieces must be a positive integer")
        return cls(name, low, groups, int(groups.max()) + 1, int(pieces))

    @property
    def size(self) -> int:
        return 2 * len(self.low) + 2 * self.pieces * self.n_groups

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def unpack(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got shape {params.shape}")
        nb = 2 * len(self.low)
        bias = params[:nb].reshape(2, len(self.low))
        gains = params[nb:].reshape(self.pieces, 2, self.n_groups)
        return bias, gains

    def control(self, params, X, step: int, steps: int) -> np.ndarray:
        """theta(t_step) for states X of shape (B, 2, m)."""
        bias, gains = self.unpack(params)
        theta = np.zeros_like(X)
        theta[..., self.low] = bias
        if self.pieces:
            piece = min(step * self.pieces // steps, self.pieces - 1)
            theta = theta - gains[piece][:, self.groups] * X
        return theta


@dataclass
class DriftPath:
    """Realised controls theta(t_i) on the time grid for each path, in standard coordinates."""

    times: np.ndarray
    theta: np.ndarray
    spec: MeasureSpec

    def fields(self, b: int, i: int) -> PhasePair:
        """theta_1(t_i), theta_2(t_i) of path b as coefficient fields (standard coordinates)."""
        grid = self.spec.grid
        t = self.theta[b, i]
        return PhasePair(from_real_coordinates(grid, t[0]), from_real_coordinates(grid, t[1]))


def drifted_terminal(path: CylindricalPath, family: DriftFamily, params):
    """Run the drifted dynamics; returns (Y(1) + I(1), 1/2 int |theta|^2 dt, DriftPath)."""
    M, dt = path.steps, path.dt
    X = np.zeros((path.batch,) + path.increments.shape[2:])
    cost = np.zeros(path.batch)
    thetas = np.empty_like(path.increments)
    for i in range(M):
        th = family.control(params, X, i, M)
        thetas[:, i] = th
        cost += 0.5 * dt * np.sum(th ** 2, axis=(-2, -1))
        X = X + th * dt + path.increments[:, i]
    times = np.linspace(0.0, 1.0, M + 1)
    return path.scale * X, cost, DriftPath(times, thetas, path.spec)


def potential_terms(spec: MeasureSpec, Y, use_r: bool = True, use_energy: bool = True, batch: int = 256):
    """R(Y_1) + E(Y)^q per point; the flags are the hook that switches either term off."""
    t = PhaseTarget(spec, 1.0, batch).terms(Y)
    out = np.zeros(len(Y))
    if use_r:
        out = out + t["r_term"]
    if use_energy:
        out = out + t["hamiltonian"] ** spec.q
    return out


def objective(path: CylindricalPath, family: DriftFamily, params, spec: MeasureSpec | None = None,
              use_r: bool = True, use_energy: bool = True) -> np.ndarray:
    """Pathwise R(Y_1 + I_1) + E^q(Y + I) + 1/2 int_0^1 |theta|^2 dt at t = 1."""
    spec = path.spec if spec is None else spec
    if spec != path.spec:
        raise ValueError("path and spec describe different grids")
    if len(family.groups) != path.increments.shape[-1]:
        raise ValueError("drift family and path live on different grids")
    Y, cost, _ = drifted_terminal(path, family, params)
    return potential_terms(spec, Y, use_r, use_energy) + cost


def _mc(values) -> McEstimate:
    v = np.asarray(values, dtype=float)
    return McEstimate(float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v))), len(v))


@dataclass
class VariationalResult:
    family: str
    params: np.ndarray
    bound: McEstimate
    zero_drift: McEstimate
    trace: list
    diverged: bool = False
    message: str = ""

    def trace_monotone(self, nsigma: float = 2.0) -> bool:
        """Each trace value is at most the previous one plus nsigma standard errors."""
        return all(b[1] <= a[1] + nsigma * max(a[2], b[2]) for a, b in zip(self.trace, self.trace[1:]))


def optimize_drift(spec: MeasureSpec, M: int = 8, family: str = "piecewise_state_feedback", iters: int = 20,
                   seed: int = 0, samples: int = 1000, fresh: int = 4000, n_low: float = 1.0, pieces: int = 2,
                   fd_step: float = 1e-3, step0: float = 1.0, use_r: bool = True,
                   use_energy: bool = True) -> VariationalResult:
    """Minimise the MC objective over a drift family with common random numbers.

    Gradients are central differences on a fixed batch of `samples` paths and every
    step passes an Armijo backtracking test on that batch, so the trace is monotone
    on it.  The returned bound and the zero-drift objective are evaluated on a
    fresh batch of `fresh` paths.
    """
    fam = DriftFamily.build(spec, family, n_low, pieces)
    train = simulate_paths(spec, M, seed, samples)

    def J(p):
        return objective(train, fam, p, use_r=use_r, use_energy=use_energy)

    params = fam.zeros()
    vals = J(params)
    cur = float(vals.mean())
    trace = [(0, cur, float(vals.std(ddof=1) / np.sqrt(len(vals))))]
    diverged, message = False, ""
    step = float(step0)
    for it in range(1, iters + 1):
        grad = np.empty(fam.size)
        for j in range(fam.size):
            e = np.zeros(fam.size)
            e[j] = fd_step
            grad[j] = (J(params + e).mean() - J(params - e).mean()) / (2 * fd_step)
        if not np.all(np.isfinite(grad)):
            diverged, message = True, f"non-finite gradient at iteration {it}"
            break
        g2 = float(grad @ grad)
        if g2 == 0:
            message = "zero gradient"
            break
        accepted = False
        for _ in range(30):
            trial = params - step * grad
            tv = J(trial)
            tm = float(tv.mean())
            if np.isfinite(tm) and tm <= cur - 1e-4 * step * g2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            message = f"line search stalled at iteration {it}"
            break
        params, cur = trial, tm
        trace.append((it, cur, float(tv.std(ddof=1) / np.sqrt(len(tv)))))
        if np.max(np.abs(params)) > 1e6:
            diverged, message = True, f"parameters exploded at iteration {it}"
            break
        step *= 2.0
    test = simulate_paths(spec, M, seed, fresh, start=samples)
    bound = _mc(objective(test, fam, params, use_r=use_r, use_energy=use_energy))
    zero = _mc(objective(test, fam, fam.zeros(), use_r=use_r, use_energy=use_energy))
    return VariationalResult(family, params, bound, zero, trace, diverged, message)


def potential_floor(spec: MeasureSpec, samples: int = 100_000, seed: int = 0, batch: int = 2000) -> float:
    """Smallest R + E^q over nu draws, a spot check that the potential is bounded below."""
    lo = np.inf
    for s in range(0, samples, batch):
        X = nu_draws(spec, seed, np.arange(s, min(s + batch, samples)))
        lo = min(lo, float(potential_terms(spec, X).min()))
    return lo
