"""Renormalized energy, its exact time derivative along the truncated flow, and the commutator split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowConfig, flow_map
from .gaussian import MeasureSpec, sigma_N
from .littlewood_paley import DyadicSystem, jmax_for, lp_norm, paraproduct, pj
from .spectral import (
    FrequencyGrid,
    PhasePair,
    SpectralField,
    apply_fractional_laplacian,
    derivative,
    fractional_symbol,
    physical_size,
    plan,
    weighted_pair_norm_sq,
)

# Sign convention that makes the finite-difference oracle hold; echoed into run metadata.
DT_RHS_CONVENTION = (
    "rhs = +k(k-1)/2 int Q v u^{k-2} - int D^s v (D^s u^k - k u^{k-1} D^s u) + (int u)(int v); "
    "energy = quadratic_part + wick_term"
)


@dataclass(frozen=True)
class EnergyBreakdown:
    quadratic_part: float
    wick_term: float
    potential_term: float
    r_term: float
    renormalized: float

    def identity_defects(self) -> tuple[float, float]:
        """Relative defects of renormalized = quadratic + wick and r = wick + potential."""
        a = abs(self.renormalized - self.quadratic_part - self.wick_term)
        a /= max(abs(self.renormalized), abs(self.quadratic_part), abs(self.wick_term), 1e-300)
        b = abs(self.r_term - self.wick_term - self.potential_term)
        b /= max(abs(self.r_term), abs(self.wick_term), abs(self.potential_term), 1e-300)
        return a, b


class EnergyKit:
    """Batched evaluation of the energy functionals on coefficient boxes of radius spec.N.

    All physical-space integrals use a grid with (k+1)N + 1 points per axis, which
    makes every degree-(k+1) integrand exact.
    """

    def __init__(self, spec: MeasureSpec):
        self.spec = spec
        self.grid = FrequencyGrid(spec.d, spec.N)
        self.L = physical_size(spec.N, power=spec.k, N_out=spec.N)
        self.plan = plan(spec.d, spec.N, self.L)
        self.ds = fractional_symbol(self.grid, spec.s)
        self.sigma = sigma_N(spec)
        self.vol = self.grid.volume
        self.axes = tuple(range(-spec.d, 0))
        self.zero = (Ellipsis,) + (spec.N,) * spec.d

    def mean(self, x):
        return self.vol * np.mean(x, axis=self.axes)

    def quadratic(self, U, V):
        nsq = self.grid.norm_sq
        tot = np.sum(self.ds ** 2 * np.abs(V) ** 2 + self.ds ** 2 * nsq * np.abs(U) ** 2, axis=self.axes)
        return 0.5 * (self.vol * tot + (self.vol * U[self.zero].real) ** 2)

    def gaussian_form(self, U, V):
        """Normalised nu quadratic form sum |u(n)|^2 / w_u^2 + |v(n)|^2 / w_v^2."""
        nsq = self.grid.norm_sq
        s = self.spec.s
        tot = np.sum((nsq + nsq ** (s + 1)) * np.abs(U) ** 2 + (1 + self.ds ** 2) * np.abs(V) ** 2, axis=self.axes)
        return tot + U[self.zero].real ** 2

    def terms(self, U, V, rhs: bool = False) -> dict:
        k = self.spec.k
        u = self.plan.to_real(U)
        dsu = self.plan.to_real(U * self.ds)
        Q = dsu ** 2 - self.sigma
        uk1 = u ** (k - 1)
        out = {
            "quadratic_part": self.quadratic(U, V),
            "wick_term": 0.5 * k * self.mean(Q * uk1),
            "potential_term": self.mean(uk1 * u * u) / (k + 1),
        }
        out["r_term"] = out["wick_term"] + out["potential_term"]
        out["renormalized"] = out["quadratic_part"] + out["wick_term"]
        nsq = self.grid.norm_sq
        out["hamiltonian"] = 0.5 * self.vol * np.sum(nsq * np.abs(U) ** 2 + np.abs(V) ** 2, axis=self.axes) \
            + out["potential_term"]
        if rhs:
            v = self.plan.to_real(V)
            dsv = self.plan.to_real(V * self.ds)
            uk_hat = self.plan.from_real(uk1 * u)
            ds_uk = self.plan.to_real(uk_hat * self.ds)
            out["q_term"] = 0.5 * k * (k - 1) * self.mean(Q * v * u ** (k - 2))
            out["commutator_term"] = self.mean(dsv * (ds_uk - k * uk1 * dsu))
            out["mean_term"] = (self.vol * U[self.zero].real) * (self.vol * V[self.zero].real)
            out["dt_rhs"] = out["q_term"] - out["commutator_term"] + out["mean_term"]
        return out

    def chain_terms(self, U, V):
        """(int u^k D^{2s} v, k int D^s v D^s u u^{k-1}, int D^s v (D^s u^k - k u^{k-1} D^s u))."""
        k = self.spec.k
        u = self.plan.to_real(U)
        dsu = self.plan.to_real(U * self.ds)
        dsv = self.plan.to_real(V * self.ds)
        d2sv = self.plan.to_real(V * self.ds ** 2)
        uk1 = u ** (k - 1)
        uk = uk1 * u
        ds_uk = self.plan.to_real(self.plan.from_real(uk) * self.ds)
        t1 = self.mean(uk * d2sv)
        t2 = k * self.mean(dsv * dsu * uk1)
        t3 = self.mean(dsv * (ds_uk - k * uk1 * dsu))
        return t1, t2, t3


def _boxes(p: PhasePair, spec: MeasureSpec):
    q = p.resize(spec.N)
    return q.u.coeffs, q.v.coeffs


def energy_breakdown(p: PhasePair, spec: MeasureSpec) -> EnergyBreakdown:
    """Quadratic part, Wick term, potential, R_{k,s,N} and the renormalized energy of pi_N p."""
    t = EnergyKit(spec).terms(*_boxes(p, spec))
    return EnergyBreakdown(*(float(t[name]) for name in
                             ("quadratic_part", "wick_term", "potential_term", "r_term", "renormalized")))


def renormalized_energy(p: PhasePair, spec: MeasureSpec) -> float:
    return energy_breakdown(p, spec).renormalized


def dt_energy_rhs(p: PhasePair, spec: MeasureSpec, parts: bool = False):
    """Exact d/dt of the renormalized energy along the truncated flow at p (see DT_RHS_CONVENTION)."""
    t = EnergyKit(spec).terms(*_boxes(p, spec), rhs=True)
    if parts:
        return {name: float(t[name]) for name in ("q_term", "commutator_term", "mean_term", "dt_rhs")}
    return float(t["dt_rhs"])


def chain_identity_check(p: PhasePair, spec: MeasureSpec) -> float:
    """Relative residual of int u^k D^{2s} v = k int D^s v D^s u u^{k-1} + int D^s v (D^s u^k - k u^{k-1} D^s u)."""
    t1, t2, t3 = (float(x) for x in EnergyKit(spec).chain_terms(*_boxes(p, spec)))
    scale = max(abs(t1), abs(t2), abs(t3))
    if scale == 0:
        return 0.0
    return abs(t1 - t2 - t3) / scale


def fd_energy_derivative(p: PhasePair, spec: MeasureSpec, h: float = 1e-3, dt: float | None = None,
                         scheme: str = "duhamel_rk4") -> float:
    """Central difference of the renormalized energy along the flow, Richardson-extrapolated in h."""
    dt = h / 8 if dt is None else dt
    cfg = FlowConfig(spec, dt=dt, scheme=scheme)

    def central(step):
        plus = renormalized_energy(flow_map(p, cfg, step), spec)
        minus = renormalized_energy(flow_map(p, cfg, -step), spec)
        return (plus - minus) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


# ---------------------------------------------------------------- commutator

@dataclass(frozen=True)
class CommutatorParts:
    lhs: SpectralField
    f1: SpectralField
    f2: SpectralField
    remainder: SpectralField

    def reconstruction_defect(self) -> float:
        total = self.f1.coeffs + self.f2.coeffs + self.remainder.coeffs
        scale = max(float(np.abs(self.lhs.coeffs).max(initial=0.0)), 1e-300)
        return float(np.abs(total - self.lhs.coeffs).max(initial=0.0)) / scale


def commutator_decomposition(w: SpectralField, u: SpectralField, s: float,
                             sys: DyadicSystem | None = None) -> CommutatorParts:
    """D^s(T_w u) - T_w(D^s u) = F1 + F2 + R with F1, F2 the first two Taylor terms.

    F1 = -s sum_j T_{d_j w}(d_j D^{s-2} u)
    F2 = s(s-2)/2 sum_{j,l} T_{d_j d_l w}(d_j d_l D^{s-4} u) + s/2 T_{D^2 w}(D^{s-2} u)
    All pieces live on radius N_w + N_u; R is defined by the bookkeeping.
    """
    if w.grid != u.grid:
        raise ValueError("w and u must share a grid")
    d = w.grid.d
    N_out = w.grid.N + u.grid.N

    def T(a, b):
        return paraproduct(a, b, None, N_out)

    lhs = apply_fractional_laplacian(T(w, u), s) - T(w, apply_fractional_laplacian(u, s))
    dw = [derivative(w, j) for j in range(d)]
    us2 = apply_fractional_laplacian(u, s - 2)
    us4 = apply_fractional_laplacian(u, s - 4)
    f1 = SpectralField.zeros(lhs.grid)
    for j in range(d):
        f1 = f1 + T(dw[j], derivative(us2, j))
    f1 = -s * f1
    f2 = SpectralField.zeros(lhs.grid)
    for j in range(d):
        for l in range(d):
            f2 = f2 + T(derivative(dw[j], l), derivative(derivative(us4, j), l))
    f2 = 0.5 * s * (s - 2) * f2 + 0.5 * s * T(apply_fractional_laplacian(w, 2), us2)
    rem = lhs - f1 - f2
    return CommutatorParts(lhs, f1, f2, rem)


def remainder_shell_profile(field: SpectralField, j_range=None, p: float = 1.0):
    """Shell norms ||P_j f||_{L^p} and the least-squares slope of log2 norm against j."""
    jm = jmax_for(field.grid.N)
    js = np.arange(-1, jm + 1) if j_range is None else np.asarray(list(j_range))
    norms = np.array([lp_norm(pj(field, int(j)), p) for j in js])
    ok = norms > 0
    slope = float(np.polyfit(js[ok], np.log2(norms[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return js, norms, slope


# ---------------------------------------------------------------- change of variables

def log_cov_weight(p0: PhasePair, t: float, cfg: FlowConfig) -> float:
    """-1/2 ||Phi_N(t)(pi_N p0)||^2 with the normalised (nu) quadratic form."""
    spec = cfg.spec
    q = p0.resize(spec.N)
    if t != 0:
        q = flow_map(q, cfg, t)
    return -0.5 * weighted_pair_norm_sq(q, spec.s, normalized=True)


def cov_weight(p0: PhasePair, t: float, cfg: FlowConfig) -> float:
    return float(np.exp(log_cov_weight(p0, t, cfg)))
