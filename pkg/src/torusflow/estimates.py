"""Monte-Carlo and brute-force checks: chaos moments, convolution sums, partition functions, transport."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .energy import EnergyKit
from .flow import TruncatedWave
from .gaussian import MeasureSpec, sample_arrays, weights_sq_radial
from .importance import (
    GaussianMixture,
    PhaseTarget,
    effective_sample_size,
    laplace_mixture,
    log_mean_exp,
    nu_draws,
    proposal_draws,
    pushforward,
    weighted_draws,
    weighted_mean,
)
from .littlewood_paley import ShellSpectrum, _shells
from .spectral import FrequencyGrid, fractional_symbol


class InsufficientSamples(ValueError):
    """Too few samples for the requested moment order."""


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    p: float | None = None
    ess: float | None = None
    flagged: bool = False
    log_mean: float | None = None
    log_std_error: float | None = None

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError(f"std_error must be nonnegative, got {self.std_error}")
        if self.samples < 2:
            raise ValueError("an estimate needs at least two samples")

    def agrees(self, other: "McEstimate", nsigma: float = 3.0) -> bool:
        return abs(self.mean - other.mean) <= nsigma * np.hypot(self.std_error, other.std_error)

    def to_dict(self) -> dict:
        return asdict(self)


def _moment_norm(x, p):
    """(mean |x|^p)^{1/p} and its delta-method standard error."""
    a = np.abs(np.asarray(x, dtype=float))
    scale = a.max() if a.size and a.max() > 0 else 1.0
    y = (a / scale) ** p
    m = y.mean()
    se_m = y.std(ddof=1) / np.sqrt(len(y))
    norm = scale * m ** (1.0 / p)
    se = norm * se_m / (p * m) if m > 0 else 0.0
    return float(norm), float(se)


def fit_exponent(p, values, shift: float = 0.0) -> float:
    """Least-squares slope of log(values) against log(p - shift).

    shift=1 gives the hypercontractive scale (p - 1), on which a chaos of order k
    has moments bounded by (p - 1)^{k/2} times the L^2 norm.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0) or np.any(p <= shift):
        return float("nan")
    return float(np.polyfit(np.log(p - shift), np.log(v), 1)[0])


# ---------------------------------------------------------------- chaos moments

FUNCTIONALS = ("holder_u", "holder_v", "product_field")


@dataclass
class ChaosReport:
    functional: str
    regularity: float
    p_list: tuple
    raw: list
    centered: list
    exponent: float
    exponent_log_p: float
    raw_exponent: float
    shell_mc: np.ndarray = field(repr=False)
    shell_se: np.ndarray = field(repr=False)
    shell_exact: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def estimates(self):
        return self.centered

    def second_moment_z(self) -> np.ndarray:
        """(MC - exact) / se per shell for E ||P_j X||_{L^2}^2."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.shell_se > 0, (self.shell_mc - self.shell_exact) / self.shell_se, 0.0)


def _product_parts(spec: MeasureSpec, alpha: float, beta: float):
    g = spec.grid
    a = fractional_symbol(g, spec.s - alpha)      # acts on v
    b = fractional_symbol(g, spec.s + 1 - beta)   # acts on u
    return a, b


def chaos_regularity(spec: MeasureSpec, functional: str, eps: float = 0.05, alpha: float = 2.0,
                     beta: float = 2.0, gamma: float | None = None) -> float:
    if functional == "holder_u":
        return spec.s - 0.5 - eps
    if functional == "holder_v":
        return spec.s - 1.5 - eps
    if functional == "product_field":
        if not (alpha >= 0 and beta >= 0 and alpha + beta > 1.5):
            raise ValueError("product field needs alpha, beta >= 0 and alpha + beta > 3/2")
        top = min(alpha - 1.5, beta - 1.5, alpha + beta - 3)
        if gamma is None:
            gamma = top - eps
        elif gamma >= top:
            raise ValueError(f"gamma must be below {top}")
        return float(gamma)
    raise ValueError(f"functional must be one of {FUNCTIONALS}, got {functional!r}")


def chaos_values(spec: MeasureSpec, functional: str, seed: int, start: int, count: int, eps: float = 0.05,
                 alpha: float = 2.0, beta: float = 2.0, gamma: float | None = None, batch: int = 16,
                 dtype=np.float32):
    """Hoelder norms and shell energies ||P_j X||_2^2 for samples start .. start + count - 1."""
    reg = chaos_regularity(spec, functional, eps, alpha, beta, gamma)
    d, N = spec.d, spec.N
    R = 2 * N if functional == "product_field" else N
    if functional == "product_field":
        a, b = _product_parts(spec, alpha, beta)
    sp = _chaos_spectrum(d, R, np.dtype(dtype).type)
    axes = tuple(range(-d, 0))
    factor = 2.0 ** (reg * sp.js)
    vals, energies = [], []
    for lo in range(start, start + count, batch):
        idx = np.arange(lo, min(lo + batch, start + count))
        U, V = sample_arrays(spec, seed, idx)
        if functional == "holder_u":
            H = sp.from_box(U, N)
        elif functional == "holder_v":
            H = sp.from_box(V, N)
        else:
            # product of two radius-N fields, formed on a grid that resolves radius 2N exactly
            f = sfft.irfftn(sp.from_box(V * a, N), s=(sp.L,) * d, axes=axes)
            g = sfft.irfftn(sp.from_box(U * b, N), s=(sp.L,) * d, axes=axes)
            H = sp.transform(f * g)
        vals.append(np.max(sp.sup_norms(H) * factor, axis=1))
        energies.append(spec.grid.volume * sp.energies(H))
    return np.concatenate(vals), np.concatenate(energies)


@lru_cache(maxsize=4)
def _chaos_spectrum(d, R, dtype):
    return ShellSpectrum(d, R, sfft.next_fast_len(2 * R + 2, real=True), dtype)


def exact_shell_energies(spec: MeasureSpec, functional: str, alpha: float = 2.0, beta: float = 2.0) -> np.ndarray:
    """E ||P_j X||_2^2 per shell from exact lattice sums (X = u, v or the product field)."""
    wu, wv = (w ** 2 for w in _weights(spec))
    if functional == "product_field":
        a, b = _product_parts(spec, alpha, beta)
        R = 2 * spec.N
        coeff = fftconvolve(a ** 2 * wv, b ** 2 * wu)
        coeff[np.abs(coeff) < 1e-300] = 0.0
    elif functional in ("holder_u", "holder_v"):
        R = spec.N
        coeff = wu if functional == "holder_u" else wv
    else:
        raise ValueError(f"functional must be one of {FUNCTIONALS}, got {functional!r}")
    tab = _shells(spec.d, R)
    return spec.grid.volume * np.array([np.sum(tab[j] ** 2 * coeff) for j in range(tab.shape[0])])


def chaos_moment_growth(spec: MeasureSpec, functional: str, p_list=(2, 4, 8, 16), samples: int = 10_000,
                        seed: int = 0, eps: float = 0.05, alpha: float = 2.0, beta: float = 2.0,
                        gamma: float | None = None, batch: int = 16, start: int = 0,
                        dtype=np.float32, chunk: int | None = None, mapper=map) -> ChaosReport:
    """L^p(nu) norms of a Hoelder norm of u, v or D^{s-alpha}v D^{s+1-beta}u, with a p-growth fit.

    The growth exponent is the slope of the centred L^p norms against log(p - 1);
    the slope against log p and the raw norms are kept too.  Shell-wise second
    moments E||P_j X||_2^2 are compared with exact lattice sums.  Samples are
    processed in chunks of `chunk` (a multiple of batch) through `mapper`, so a
    process pool gives the same numbers as a serial run.
    """
    p_list = tuple(int(p) for p in p_list)
    if any(p < 2 or p % 2 or p > 16 for p in p_list):
        raise ValueError("p_list must hold even integers in [2, 16]")
    if samples < 25 * max(p_list):
        raise InsufficientSamples(f"{samples} samples are too few for p = {max(p_list)} (need {25 * max(p_list)})")
    reg = chaos_regularity(spec, functional, eps, alpha, beta, gamma)
    chunk = samples if chunk is None else int(chunk)
    if chunk % batch and chunk < samples:
        raise ValueError("chunk must be a multiple of batch")
    starts = list(range(start, start + samples, chunk))
    counts = [min(chunk, start + samples - lo) for lo in starts]
    job = partial(_chaos_job, spec, functional, seed, eps, alpha, beta, gamma, batch, dtype)
    parts = list(mapper(job, list(zip(starts, counts))))
    x = np.concatenate([p[0] for p in parts])
    en = np.concatenate([p[1] for p in parts])
    xc = x - x.mean()
    raw, cen = [], []
    for p in p_list:
        m, se = _moment_norm(x, p)
        raw.append(McEstimate(m, se, len(x), p))
        m, se = _moment_norm(xc, p)
        cen.append(McEstimate(m, se, len(x), p))
    return ChaosReport(
        functional, reg, p_list, raw, cen,
        fit_exponent(p_list, [e.mean for e in cen], shift=1.0),
        fit_exponent(p_list, [e.mean for e in cen]),
        fit_exponent(p_list, [e.mean for e in raw], shift=1.0),
        en.mean(axis=0), en.std(axis=0, ddof=1) / np.sqrt(len(en)),
        exact_shell_energies(spec, functional, alpha, beta), x,
    )


def _chaos_job(spec, functional, seed, eps, alpha, beta, gamma, batch, dtype, span):
    return chaos_values(spec, functional, seed, span[0], span[1], eps, alpha, beta, gamma, batch, dtype)


def _weights(spec: MeasureSpec):
    wu2, wv2 = weights_sq_radial(spec, spec.grid.norm_sq)
    inside = spec.grid.mask
    return np.sqrt(wu2) * inside, np.sqrt(wv2) * inside


# ---------------------------------------------------------------- convolution sums

@dataclass
class ConvolutionResult:
    n: tuple
    alpha: float
    beta: float
    M: int
    value: float
    tail: float
    exponent: float
    reference: float
    regions: tuple

    @property
    def upper(self) -> float:
        return self.value + self.tail

    @property
    def ratio(self) -> float:
        """(sum + tail) / <n>^{-min(2a, 2b, 2a+2b-3) + eps}."""
        return self.upper / self.reference


def convolution_exponent(alpha: float, beta: float) -> float:
    return min(2 * alpha, 2 * beta, 2 * alpha + 2 * beta - 3)


def convolution_tail(n, alpha: float, beta: float, M: int) -> float:
    """Rigorous bound on the sum over |n1| > M of <n1>^{-2a} <n - n1>^{-2b} in d = 3.

    For |n1| > M > |n|: <n - n1> >= c <n1> with c = 1 - |n|/M, and each lattice point
    is compared with the integral of |x|^{-2a-2b} over its unit cube.
    """
    a = 2 * alpha + 2 * beta
    nn = float(np.linalg.norm(n))
    if M <= nn or M <= 1:
        raise ValueError("tail bound needs M > max(|n|, 1)")
    c = 1.0 - nn / M
    r0 = M - np.sqrt(3) / 2
    return float((1 + np.sqrt(3) / (2 * M)) ** a * 4 * np.pi * r0 ** (3 - a) / (a - 3) * c ** (-2 * beta))


def convolution_sum(n, alpha: float, beta: float, M: int = 200, eps: float = 0.05) -> ConvolutionResult:
    """Brute-force sum over the ball |n1| <= M in Z^3, its tail bound and the region split A1..A4.

    A1: |n1| > 2|n|, A2: |n1| < |n|/2, A3: |n - n1| < |n|/2, A4: the rest.
    """
    n = tuple(int(x) for x in n)
    if len(n) != 3:
        raise ValueError("convolution sums are three-dimensional")
    if not (alpha >= 0 and beta >= 0 and 2 * alpha + 2 * beta > 3):
        raise ValueError("divergent regime: need alpha, beta >= 0 and 2 alpha + 2 beta > 3")
    nn = np.linalg.norm(n)
    ax = np.arange(-M, M + 1, dtype=float)
    Y, Z = np.meshgrid(ax, ax, indexing="ij")
    yz = Y ** 2 + Z ** 2
    dyz = (n[1] - Y) ** 2 + (n[2] - Z) ** 2
    regions = np.zeros(4)
    for x in ax:
        r2 = x * x + yz
        inside = r2 <= M * M
        d2 = (n[0] - x) ** 2 + dyz
        term = np.where(inside, (1 + r2) ** (-alpha) * (1 + d2) ** (-beta), 0.0)
        a1 = r2 > 4 * nn * nn
        a2 = r2 < nn * nn / 4
        a3 = d2 < nn * nn / 4
        a4 = ~(a1 | a2 | a3)
        regions += [term[a1].sum(), term[a2].sum(), term[a3].sum(), term[a4].sum()]
    total = float(regions.sum())
    e = convolution_exponent(alpha, beta)
    ref = (1 + nn * nn) ** (0.5 * (-e + eps))
    return ConvolutionResult(n, alpha, beta, M, total, convolution_tail(n, alpha, beta, M), e, float(ref),
                             tuple(float(r) for r in regions))


# ---------------------------------------------------------------- partition function

@dataclass
class PartitionReport:
    spec: MeasureSpec
    proposal: str
    Z: McEstimate
    lp_norms: dict
    jensen_log_bound: McEstimate
    nu_Z: McEstimate
    modes: list

    def jensen_holds(self, nsigma: float = 3.0) -> bool:
        """Z + nsigma se >= exp(-E R - E E^q), compared in log space."""
        upper = self.Z.log_mean + np.log1p(nsigma * self.Z.log_std_error)
        return bool(upper >= self.jensen_log_bound.mean - nsigma * self.jensen_log_bound.std_error)


def _log_estimate(log_w, p=None, power: float = 1.0) -> McEstimate:
    """E[e^{log_w}]^{1/power} kept in log space (mean may overflow to inf; log_mean never does)."""
    lm, rel = log_mean_exp(log_w)
    ln = lm / power
    with np.errstate(over="ignore"):
        mean = float(np.exp(ln))
    return McEstimate(mean, mean * rel / power, len(log_w), p, effective_sample_size(log_w), False,
                      ln, rel / power)


def log_norm_estimate(log_w, p: float) -> McEstimate:
    """||e^F||_{L^p} = (E e^{pF})^{1/p} from log weights of e^{pF}."""
    return _log_estimate(log_w, p, p)


def partition_function(spec: MeasureSpec, samples: int = 2000, seed: int = 0, proposal: str = "laplace",
                       p_list=(1, 2, 4), batch: int = 64) -> PartitionReport:
    """Z_{s,N} = E_nu[e^{-R - E^q}] and ||e^F||_{L^p(nu)}, accumulated in log space.

    proposal="laplace" importance-samples each e^{pF} d nu from its constant-state
    Laplace mixture; proposal="nu" is plain nu sampling.  The Jensen bound
    -E_nu[R] - E_nu[E^q] and the plain nu estimate of Z always come from nu draws.
    """
    if proposal not in ("nu", "laplace"):
        raise ValueError(f"proposal must be 'nu' or 'laplace', got {proposal!r}")
    base = PhaseTarget(spec, 1.0, batch)
    nu = weighted_draws(base, seed, samples, "nu", batch=batch,
                        stats=lambda X, t: {"F": t["F"]})
    F = nu.stats["F"]
    jensen = McEstimate(float(F.mean()), float(F.std(ddof=1) / np.sqrt(len(F))), len(F), log_mean=float(F.mean()))
    nu_Z = _log_estimate(nu.log_w)
    norms, modes = {}, []
    for p in p_list:
        if proposal == "nu":
            norms[p] = log_norm_estimate(p * F, p)
            continue
        tg = PhaseTarget(spec, float(p), batch)
        mix, md = laplace_mixture(spec, float(p))
        wd = weighted_draws(tg, seed, samples, mix, batch=batch, start=(p + 1) * samples)
        norms[p] = log_norm_estimate(wd.log_w, p)
        modes.append({"p": p, "modes": [asdict(m) for m in md]})
    Z = norms[1] if 1 in norms else (nu_Z if proposal == "nu" else None)
    if Z is None:
        raise ValueError("p_list must contain 1")
    Z = McEstimate(Z.mean, Z.std_error, Z.samples, None, Z.ess, False, Z.log_mean, Z.log_std_error)
    return PartitionReport(spec, proposal, Z, norms, jensen, nu_Z, modes)


def l2_difference(spec: MeasureSpec, N_hi: int, samples: int = 1000, seed: int = 0, proposal: str = "laplace",
                  batch: int = 32) -> McEstimate:
    """||e^{F_{s,k,N}} - e^{F_{s,k,N_hi}}||_{L^2(nu)} with N = spec.N < N_hi, in log space.

    Both functionals see the same nu draw at radius N_hi (F_N reads its prefix).
    The "laplace" proposal mixes the e^{2F} Laplace mixtures at both cutoffs, the
    lower one extended by the nu law on the extra modes.
    """
    lo, hi = PhaseTarget(spec, 1.0, batch), PhaseTarget(spec.with_(N=N_hi), 1.0, batch)
    m = lo.m
    logs = []
    if proposal == "laplace":
        mix_hi, _ = laplace_mixture(hi.spec, 2.0)
        mix_lo, _ = laplace_mixture(lo.spec, 2.0)
        mix = GaussianMixture.combine([mix_hi, mix_lo.extend(hi.precision[:, m:])], [0.5, 0.5])
    elif proposal != "nu":
        raise ValueError(f"proposal must be 'nu' or 'laplace', got {proposal!r}")
    for s in range(0, samples, batch):
        idx = np.arange(s, min(s + batch, samples))
        X = nu_draws(hi.spec, seed, idx) if proposal == "nu" else proposal_draws(mix, seed, idx)
        f_hi = hi.terms(X)["F"]
        f_lo = lo.terms(X[:, :, :m])["F"]
        top = np.maximum(f_hi, f_lo)
        with np.errstate(divide="ignore"):
            log_diff = top + np.log(-np.expm1(-np.abs(f_hi - f_lo)))
        lw = 2 * log_diff
        if proposal == "laplace":
            lw = lw + hi.log_nu(X) - mix.logpdf(X)
        logs.append(lw)
    return log_norm_estimate(np.concatenate(logs), 2)


# ---------------------------------------------------------------- transport

@dataclass(frozen=True)
class BallEvent:
    """Intersection of conditions ||u or v||_{H^sigma} <= r (op "le") or >= r (op "ge")."""

    conditions: tuple = ()

    def __post_init__(self):
        conds = tuple(tuple(c) for c in self.conditions)
        for fld, sigma, r, op in conds:
            if fld not in ("u", "v") or op not in ("le", "ge") or not np.isfinite(sigma) or not r >= 0:
                raise ValueError(f"bad event condition {(fld, sigma, r, op)}")
        object.__setattr__(self, "conditions", conds)

    def contains(self, grid: FrequencyGrid, U, V) -> np.ndarray:
        axes = tuple(range(-grid.d, 0))
        out = np.ones(U.shape[: U.ndim - grid.d], dtype=bool)
        for fld, sigma, r, op in self.conditions:
            C = U if fld == "u" else V
            norm = np.sqrt(grid.volume * np.sum((1.0 + grid.norm_sq) ** sigma * np.abs(C) ** 2, axis=axes))
            out &= (norm <= r) if op == "le" else (norm >= r)
        return out


@dataclass
class TransportReport:
    t: float
    rho_A: McEstimate
    rho_flowA: McEstimate
    rho_flowA_cov: McEstimate
    p_used: float
    bound_rhs: float
    c_r: float
    proposal: str
    flagged: bool

    def z_score(self) -> float:
        a, b = self.rho_flowA, self.rho_flowA_cov
        se = np.hypot(a.std_error, b.std_error)
        return float(abs(a.mean - b.mean) / se) if se > 0 else (0.0 if a.mean == b.mean else float("inf"))

    def agree(self, nsigma: float = 3.0) -> bool:
        return self.rho_flowA.agrees(self.rho_flowA_cov, nsigma)


def _probability(log_w, h, min_ess) -> McEstimate:
    mean, se = weighted_mean(log_w, h)
    ess = effective_sample_size(log_w)
    flagged = ess < min_ess
    if flagged:
        # worst-case binomial error at the effective sample size
        se = max(se, 0.5 / np.sqrt(ess))
    return McEstimate(mean, se, len(log_w), None, ess, flagged)


def transport_diagnostic(spec: MeasureSpec, event: BallEvent, t: float, samples: int = 2000, seed: int = 0,
                         dt: float = 1e-3, scheme: str = "strang_split", proposal: str = "laplace",
                         p: float = 2.0, min_ess: float = 50.0, batch: int = 256) -> TransportReport:
    """rho_{s,N}(Phi_N(t) A) two ways, plus rho_{s,N}(A) by direct weighted sampling.

    (i) forward: draw x, weight by the rho density, test Phi_N(-t) x in A.
    (ii) change of variables: draw q, test q in A, weight by the rho density at
    Phi_N(t) q divided by the proposal density at q (Liouville: no Jacobian).
    With proposal="nu" (ii) carries exactly the factor gamma(Phi_N(t) q) / gamma(q).
    """
    target = PhaseTarget(spec, 1.0, batch)
    grid = target.grid
    eng = TruncatedWave(spec)
    if proposal == "laplace":
        mix, _ = laplace_mixture(spec)
        mix_back = pushforward(mix, spec, -t, dt, scheme) if t != 0 else mix
    elif proposal != "nu":
        raise ValueError(f"proposal must be 'nu' or 'laplace', got {proposal!r}")
    kit = EnergyKit(spec)

    def draw(lo, which):
        idx = np.arange(lo, lo + samples)
        if proposal == "nu":
            return nu_draws(spec, seed, idx)
        return proposal_draws(mix if which == 0 else mix_back, seed, idx)

    def run(X, time):
        U, V = target.boxes(X)
        out_u, out_v = [], []
        for i in range(0, len(X), batch):
            a, b = eng.run(U[i:i + batch], V[i:i + batch], time, dt, scheme)
            out_u.append(a)
            out_v.append(b)
        return np.concatenate(out_u), np.concatenate(out_v)

    # direct rho(A)
    X = draw(2 * samples, 0)
    lw = target.log_density(X) - (target.log_nu(X) if proposal == "nu" else mix.logpdf(X))
    rho_A = _probability(lw, event.contains(grid, *target.boxes(X)), min_ess)

    # (i)
    X = draw(0, 0)
    lw1 = target.log_density(X) - (target.log_nu(X) if proposal == "nu" else mix.logpdf(X))
    h1 = event.contains(grid, *run(X, -t))
    rho_i = _probability(lw1, h1, min_ess)
    U, V = target.boxes(X)
    rhs = np.concatenate([kit.terms(U[i:i + 64], V[i:i + 64], rhs=True)["dt_rhs"] for i in range(0, len(X), 64)])
    w = np.exp(lw1 - lw1.max())
    c_r = float((np.sum(w * np.abs(rhs) ** p) / w.sum()) ** (1.0 / p) / p)

    # (ii)
    Q = draw(samples, 1)
    P = target.coordinates(*run(Q, t))
    lw2 = target.log_density(P) - (target.log_nu(Q) if proposal == "nu" else mix_back.logpdf(Q))
    rho_ii = _probability(lw2, event.contains(grid, *target.boxes(Q)), min_ess)

    bound = float((max(rho_A.mean, 0.0) ** (1.0 / p) + c_r * abs(t)) ** p)
    flagged = rho_A.flagged or rho_i.flagged or rho_ii.flagged
    return TransportReport(float(t), rho_A, rho_i, rho_ii, float(p), bound, c_r, proposal, flagged)


# ---------------------------------------------------------------- energy-estimate shadow

@dataclass
class EnergyShadowReport:
    spec: MeasureSpec
    p_list: tuple
    norms: list
    exponent: float
    radius: float
    sigma: float
    ball_fraction: float


def energy_shadow(spec: MeasureSpec, p_list=(2, 4, 8), samples: int = 2000, seed: int = 0,
                  radius: float = 50.0, sigma: float | None = None, batch: int = 32) -> EnergyShadowReport:
    """E_nu[1_{B_R} |d/dt E_{s,N}|^p]^{1/p} for each p and the fitted p-exponent.

    B_R is the ball of radius R in H^sigma x H^{sigma-1}, sigma = s - 1/2 by default.
    """
    sigma = spec.s - 0.5 if sigma is None else float(sigma)
    kit = EnergyKit(spec)
    grid = kit.grid
    axes = tuple(range(-grid.d, 0))
    wu = (1.0 + grid.norm_sq) ** sigma
    wv = (1.0 + grid.norm_sq) ** (sigma - 1)
    vals, inside = [], []
    for lo in range(0, samples, batch):
        idx = np.arange(lo, min(lo + batch, samples))
        U, V = sample_arrays(spec, seed, idx)
        norm = np.sqrt(grid.volume * np.sum(wu * np.abs(U) ** 2 + wv * np.abs(V) ** 2, axis=axes))
        vals.append(kit.terms(U, V, rhs=True)["dt_rhs"])
        inside.append(norm < radius)
    x = np.concatenate(vals) * np.concatenate(inside)
    norms = []
    for p in p_list:
        m, se = _moment_norm(x, p)
        norms.append(McEstimate(m, se, len(x), p))
    return EnergyShadowReport(spec, tuple(p_list), norms, fit_exponent(p_list, [e.mean for e in norms]),
                              float(radius), sigma, float(np.mean(np.concatenate(inside))))
