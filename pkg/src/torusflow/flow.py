"""Frequency-truncated defocusing wave flow u_tt = Laplace u - pi_N((pi_N u)^k) and its diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import MeasureSpec
from .spectral import (
    FrequencyGrid,
    PhasePair,
    SpectralField,
    from_real_coordinates,
    pair_sobolev_norm,
    physical_size,
    plan,
    real_coordinates,
)

SCHEMES = ("strang_split", "duhamel_rk4")
ABORT_THRESHOLD = 1e12


@dataclass(frozen=True)
class FlowConfig:
    spec: MeasureSpec
    dt: float = 1e-3
    scheme: str = "strang_split"
    t_final: float = 1.0
    linear_only: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not np.isfinite(self.t_final):
            raise ValueError("t_final must be finite")


class FlowAbort(RuntimeError):
    """Non-finite or exploding state; carries the last good snapshot."""

    def __init__(self, message, t, snapshot):
        super().__init__(message)
        self.t = t
        self.snapshot = snapshot


@dataclass
class Trajectory:
    times: np.ndarray
    energies: np.ndarray
    norms: np.ndarray
    snapshots: list = field(default_factory=list)
    sigma: float = 0.0

    @property
    def final(self) -> PhasePair:
        return self.snapshots[-1][1]

    def max_energy_drift(self) -> float:
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(1.0, abs(e0)))


class TruncatedWave:
    """Batched propagator on coefficient boxes of radius N_grid >= spec.N.

    Arrays have shape batch + (2 N_grid + 1,)^d.  Modes with |n| > spec.N only
    feel the linear part.
    """

    def __init__(self, spec: MeasureSpec, N_grid: int | None = None, linear_only: bool = False):
        self.spec = spec
        self.N_grid = spec.N if N_grid is None else int(N_grid)
        if self.N_grid < spec.N:
            raise ValueError("grid radius must be at least the cutoff")
        self.grid = FrequencyGrid(spec.d, self.N_grid)
        self.linear_only = linear_only
        self.omega = self.grid.norm
        N, off = spec.N, self.N_grid - spec.N
        self.inner = (Ellipsis,) + tuple(slice(off, off + 2 * N + 1) for _ in range(spec.d))
        self.L = physical_size(N, power=spec.k, N_out=N)
        self.plan = plan(spec.d, N, self.L)
        self.zero = (Ellipsis,) + (self.N_grid,) * spec.d
        self._rot_cache = {}

    # -- pieces

    def physical_u(self, U):
        return self.plan.to_real(U[self.inner] * self.plan.mask)

    def force(self, U):
        """-pi_N((pi_N u)^k) as a coefficient box."""
        out = np.zeros_like(U)
        if self.linear_only:
            return out
        x = self.physical_u(U)
        out[self.inner] = -self.plan.from_real(x ** self.spec.k)
        return out

    def _rotation(self, h):
        r = self._rot_cache.get(h)
        if r is None:
            w = self.omega
            c = np.cos(w * h)
            with np.errstate(invalid="ignore", divide="ignore"):
                sw = np.where(w > 0, np.sin(w * h) / np.where(w > 0, w, 1.0), h)
            r = (c, sw, -w * np.sin(w * h))
            if len(self._rot_cache) < 16:
                self._rot_cache[h] = r
        return r

    def linear(self, U, V, h):
        """Exact linear flow; the zero mode shears, u0 <- u0 + h v0."""
        c, sw, msw = self._rotation(h)
        return c * U + sw * V, msw * U + c * V

    # -- steps

    def strang(self, U, V, h):
        U, V = self.linear(U, V, 0.5 * h)
        V = V + h * self.force(U)
        return self.linear(U, V, 0.5 * h)

    def rk4(self, U, V, h):
        """Integrating-factor (Lawson) RK4 around the exact linear flow."""
        E = self.linear
        k1 = self.force(U)
        a = E(U, V + 0.5 * h * k1, 0.5 * h)
        k2 = self.force(a[0])
        hu, hv = E(U, V, 0.5 * h)
        k3 = self.force(hu)  # the u-component of b = E(h/2) y + h/2 (0, k2) is hu
        fu, fv = E(U, V, h)
        m3 = E(np.zeros_like(U), k3, 0.5 * h)
        k4 = self.force(fu + h * m3[0])
        e1 = E(np.zeros_like(U), k1, h)
        e23 = E(np.zeros_like(U), k2 + k3, 0.5 * h)
        return (fu + h / 6 * (e1[0] + 2 * e23[0]),
                fv + h / 6 * (e1[1] + 2 * e23[1] + k4))

    def step(self, U, V, h, scheme="strang_split"):
        if scheme == "strang_split":
            return self.strang(U, V, h)
        return self.rk4(U, V, h)

    def run(self, U, V, t, dt, scheme="strang_split", callback=None):
        """Advance to time t with steps of size at most dt (negative t runs backward)."""
        n = step_count(t, dt)
        if n == 0:
            return U, V
        h = t / n
        for i in range(n):
            U, V = self.step(U, V, h, scheme)
            if callback is not None:
                callback(i + 1, (i + 1) * h, U, V)
        return U, V

    # -- energy

    def energy(self, U, V):
        """E_N on the projected fields; batched."""
        s = self.spec
        vol = self.grid.volume
        inside = self.grid.norm_sq <= s.N ** 2
        axes = tuple(range(-s.d, 0))
        kin = 0.5 * vol * np.sum(inside * (self.grid.norm_sq * np.abs(U) ** 2 + np.abs(V) ** 2), axis=axes)
        x = self.physical_u(U)
        pot = vol * np.mean(x ** (s.k + 1), axis=axes) / (s.k + 1)
        return kin + pot


def step_count(t: float, dt: float) -> int:
    if t == 0:
        return 0
    return max(1, int(math.ceil(abs(t) / dt - 1e-9)))


def hamiltonian(p: PhasePair, spec: MeasureSpec) -> float:
    """1/2 int (|grad u_N|^2 + v_N^2) + 1/(k+1) int u_N^{k+1}."""
    eng = TruncatedWave(spec, max(spec.N, p.grid.N))
    q = p.resize(eng.N_grid)
    return float(eng.energy(q.u.coeffs, q.v.coeffs))


def _check_state(U, V, t, grid):
    bad = not (np.all(np.isfinite(U)) and np.all(np.isfinite(V)))
    if bad or max(np.abs(U).max(initial=0), np.abs(V).max(initial=0)) > ABORT_THRESHOLD:
        return True
    return False


def evolve(p0: PhasePair, cfg: FlowConfig, snapshot_every: int | None = None,
           sigma: float | None = None) -> Trajectory:
    """Trajectory of the truncated flow from p0 up to cfg.t_final.

    Energies and H^sigma x H^{sigma-1} norms are recorded at every step; snapshots at
    t = 0, every `snapshot_every` steps and at the end.
    """
    spec = cfg.spec
    if p0.grid.d != spec.d:
        raise ValueError("pair dimension does not match spec")
    eng = TruncatedWave(spec, max(spec.N, p0.grid.N), cfg.linear_only)
    p0 = p0.resize(eng.N_grid)
    grid = eng.grid
    sigma = spec.s - 0.5 if sigma is None else sigma
    n = step_count(cfg.t_final, cfg.dt)
    h = cfg.t_final / n if n else 0.0
    times = np.arange(n + 1) * h
    energies = np.empty(n + 1)
    norms = np.empty(n + 1)
    U, V = np.array(p0.u.coeffs), np.array(p0.v.coeffs)
    energies[0] = eng.energy(U, V)
    norms[0] = pair_sobolev_norm(p0, sigma)
    snaps = [(0.0, p0)]
    for i in range(1, n + 1):
        U1, V1 = eng.step(U, V, h, cfg.scheme)
        if _check_state(U1, V1, times[i], grid):
            last = PhasePair(SpectralField(grid, U), SpectralField(grid, V))
            raise FlowAbort(f"state left the finite range at t={times[i]:.6g} (step {i})", times[i - 1], last)
        U, V = U1, V1
        energies[i] = eng.energy(U, V)
        pair = PhasePair(SpectralField(grid, U), SpectralField(grid, V))
        norms[i] = pair_sobolev_norm(pair, sigma)
        if i == n or (snapshot_every and i % snapshot_every == 0):
            snaps.append((times[i], pair))
    return Trajectory(times, energies, norms, snaps, sigma)


def flow_map(p0: PhasePair, cfg: FlowConfig, t: float | None = None) -> PhasePair:
    """Phi_N(t) p0 without per-step diagnostics."""
    t = cfg.t_final if t is None else t
    eng = TruncatedWave(cfg.spec, max(cfg.spec.N, p0.grid.N), cfg.linear_only)
    p0 = p0.resize(eng.N_grid)
    U, V = eng.run(np.array(p0.u.coeffs), np.array(p0.v.coeffs), t, cfg.dt, cfg.scheme)
    if _check_state(U, V, t, eng.grid):
        raise FlowAbort("state left the finite range", t, p0)
    return PhasePair(SpectralField(eng.grid, U), SpectralField(eng.grid, V))


def linear_propagator(p0: PhasePair, t: float) -> PhasePair:
    """Closed-form free evolution cos(t|n|), sin(t|n|)/|n| (t at n = 0)."""
    w = p0.grid.norm
    c = np.cos(w * t)
    sw = np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1.0), t)
    U, V = p0.u.coeffs, p0.v.coeffs
    return PhasePair(SpectralField(p0.grid, c * U + sw * V), SpectralField(p0.grid, -w * np.sin(w * t) * U + c * V))


@dataclass
class JacobianReport:
    determinant: float
    condition: float
    dimension: int
    well_conditioned: bool


def jacobian_volume_check(p0: PhasePair, cfg: FlowConfig, h: float = 1e-4, max_dim: int = 20,
                          t: float | None = None) -> JacobianReport:
    """Determinant of the finite-difference Jacobian of the time-t flow map in real coordinates.

    Central differences at steps h and h/2 combined by Richardson extrapolation.
    """
    t = cfg.t_final if t is None else t
    spec = cfg.spec
    grid = FrequencyGrid(spec.d, spec.N)
    p0 = p0.resize(spec.N)
    x0 = np.concatenate([real_coordinates(p0.u), real_coordinates(p0.v)])
    m = len(x0)
    if m > max_dim:
        raise ValueError(f"real dimension {m} exceeds the finite-difference limit {max_dim}")
    eng = TruncatedWave(spec, spec.N, cfg.linear_only)
    half = m // 2

    def boxes(X):
        U = np.stack([from_real_coordinates(grid, x[:half]).coeffs for x in X])
        V = np.stack([from_real_coordinates(grid, x[half:]).coeffs for x in X])
        return U, V

    def coords(U, V):
        return np.stack([np.concatenate([real_coordinates(SpectralField(grid, a)), real_coordinates(SpectralField(grid, b))])
                         for a, b in zip(U, V)])

    def fd(step):
        X = np.concatenate([x0 + step * np.eye(m), x0 - step * np.eye(m)])
        U, V = boxes(X)
        U, V = eng.run(U, V, t, cfg.dt, cfg.scheme)
        Y = coords(U, V)
        return ((Y[:m] - Y[m:]) / (2 * step)).T

    J = (4 * fd(h / 2) - fd(h)) / 3
    det = float(np.linalg.det(J))
    cond = float(np.linalg.cond(J))
    return JacobianReport(det, cond, m, bool(np.isfinite(cond) and cond < 1e10))


def _pair_distance(a: PhasePair, b: PhasePair) -> float:
    du = a.u.coeffs - b.u.coeffs
    dv = a.v.coeffs - b.v.coeffs
    scale = np.sqrt(np.sum(np.abs(b.u.coeffs) ** 2 + np.abs(b.v.coeffs) ** 2))
    return float(np.sqrt(np.sum(np.abs(du) ** 2 + np.abs(dv) ** 2)) / max(scale, 1e-300))


@dataclass
class ConvergenceStudy:
    dts: np.ndarray
    errors: np.ndarray
    slope: float
    reference_dt: float


def convergence_study(p0: PhasePair, spec: MeasureSpec, t: float = 1.0, dts=(0.02, 0.01, 0.005, 0.0025),
                      scheme: str = "strang_split", ref_scheme: str = "duhamel_rk4",
                      ref_dt: float | None = None) -> ConvergenceStudy:
    """Relative error of Phi_N(t) p0 against a fine reference run; slope of log error vs log dt."""
    dts = np.asarray(sorted(dts, reverse=True), dtype=float)
    ref_dt = dts[-1] / 16 if ref_dt is None else ref_dt
    ref = flow_map(p0, FlowConfig(spec, dt=ref_dt, scheme=ref_scheme), t)
    errs = np.array([_pair_distance(flow_map(p0, FlowConfig(spec, dt=h, scheme=scheme), t), ref) for h in dts])
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return ConvergenceStudy(dts, errs, slope, float(ref_dt))


def reversibility_defect(p0: PhasePair, cfg: FlowConfig, t: float | None = None) -> float:
    """Relative distance between Phi(-t) Phi(t) p0 and p0."""
    t = cfg.t_final if t is None else t
    q = flow_map(p0, cfg, t)
    back = flow_map(q, cfg, -t)
    return _pair_distance(back, p0.resize(back.grid.N))
