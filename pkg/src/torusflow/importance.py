"""Importance sampling of the weighted measures e^{tilt F} d nu on real phase-space coordinates.

A phase-space point is stored as X of shape (2, m): row 0 holds the real
coordinates of u, row 1 those of v, both in the canonical mode order of
`boxes_to_coordinates`.  Since the canonical order is prefix-stable, a point of
radius N is a prefix of a point of radius 2N.

Under nu the coordinates are independent centred normals; the precision of
coordinate i is 1/w(0)^2 for the zero mode and 2/w(n)^2 for the real and
imaginary parts of a representative n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, ndtr

from .energy import EnergyKit
from .flow import TruncatedWave
from .gaussian import MeasureSpec, normal_stream, sample_arrays, weights_sq_radial
from .spectral import FrequencyGrid, boxes_to_coordinates, canonical_modes, coordinates_to_boxes

# counter component of the proposal stream; 0 and 1 belong to the nu sampler
STREAM_PROPOSAL = 4
LOG_2PI = np.log(2 * np.pi)


def nu_precision(spec: MeasureSpec, N: int | None = None) -> np.ndarray:
    """Per-coordinate nu precisions, shape (2, m), for the ball of radius N (default spec.N)."""
    N = spec.N if N is None else N
    rep, _ = canonical_modes(spec.d, N)
    nsq = FrequencyGrid(spec.d, N).norm_sq[rep]
    inside = nsq <= spec.N ** 2
    wu2, wv2 = weights_sq_radial(spec, nsq)
    wu0, wv0 = weights_sq_radial(spec, 0.0)
    # modes beyond the cutoff are frozen at zero under nu; give them unit precision as placeholders
    pu = np.where(inside, 2.0 / wu2, 1.0)
    pv = np.where(inside, 2.0 / wv2, 1.0)
    return np.stack([np.concatenate([[1.0 / wu0], np.repeat(pu, 2)]),
                     np.concatenate([[1.0 / wv0], np.repeat(pv, 2)])])


class PhaseTarget:
    """Unnormalised log density tilt * F + log gamma of e^{tilt F} d nu against Lebesgue measure.

    F = -R_{k,s,N}(u) - E_N(u, v)^q and gamma is the normalised nu density, so the
    normalising constant of the target is E_nu[e^{tilt F}].
    """

    def __init__(self, spec: MeasureSpec, tilt: float = 1.0, batch: int = 32):
        self.spec = spec
        self.tilt = float(tilt)
        self.batch = int(batch)
        self.kit = EnergyKit(spec)
        self.grid = self.kit.grid
        self.precision = nu_precision(spec)
        self.m = self.precision.shape[1]
        self.log_norm = 0.5 * np.sum(np.log(self.precision) - LOG_2PI)

    def boxes(self, X):
        X = np.asarray(X)
        return coordinates_to_boxes(self.grid, X[..., 0, :]), coordinates_to_boxes(self.grid, X[..., 1, :])

    def coordinates(self, U, V):
        return np.stack([boxes_to_coordinates(self.grid, U), boxes_to_coordinates(self.grid, V)], axis=-2)

    def log_nu(self, X):
        return -0.5 * np.sum(self.precision * X ** 2, axis=(-2, -1)) + self.log_norm

    def terms(self, X) -> dict:
        """Batched r_term, hamiltonian and F for points X of shape (B, 2, m)."""
        X = np.asarray(X)
        out = {"r_term": [], "hamiltonian": []}
        for i in range(0, len(X), self.batch):
            U, V = self.boxes(X[i:i + self.batch])
            t = self.kit.terms(U, V)
            out["r_term"].append(t["r_term"])
            out["hamiltonian"].append(t["hamiltonian"])
        out = {k: np.concatenate(v) if v else np.zeros(0) for k, v in out.items()}
        out["F"] = -out["r_term"] - out["hamiltonian"] ** self.spec.q
        return out

    def log_density(self, X, terms: dict | None = None):
        terms = self.terms(X) if terms is None else terms
        return self.tilt * terms["F"] + self.log_nu(X)


# ---------------------------------------------------------------- proposals

@dataclass(frozen=True)
class GaussianMixture:
    """Gaussian mixture on (2, m) points whose covariances only couple (u_i, v_i).

    weights (C,), means (C, 2, m), covs (C, m, 2, 2).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must be a probability vector")
        if self.means.shape[0] != len(w) or self.covs.shape[:2] != (len(w), self.means.shape[2]):
            raise ValueError("mixture component shapes disagree")
        chol = np.linalg.cholesky(self.covs)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_prec", np.linalg.inv(self.covs))
        object.__setattr__(self, "_logdet", 2 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=(-2, -1)))

    @property
    def dimension(self) -> int:
        return self.means.shape[2]

    @classmethod
    def diagonal(cls, weights, means, precisions):
        """Components with independent coordinates; precisions has shape (C, 2, m)."""
        P = np.asarray(precisions, dtype=float)
        covs = np.zeros(P.shape[:1] + (P.shape[2], 2, 2))
        covs[..., 0, 0] = 1.0 / P[:, 0]
        covs[..., 1, 1] = 1.0 / P[:, 1]
        return cls(np.asarray(weights, dtype=float), np.asarray(means, dtype=float), covs)

    def draw(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Points from standard normals z (B, 2, m) and uniforms u (B,)."""
        comp = np.minimum(np.searchsorted(np.cumsum(self.weights), u, side="right"), len(self.weights) - 1)
        L = self._chol[comp]                                   # (B, m, 2, 2)
        step = np.einsum("bmij,bjm->bim", L, z)
        return self.means[comp] + step

    def logpdf(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        out = []
        for c in range(len(self.weights)):
            if self.weights[c] == 0:
                continue
            r = X - self.means[c]
            quad = np.einsum("bim,mij,bjm->b", r, self._prec[c], r)
            out.append(np.log(self.weights[c]) - 0.5 * quad - 0.5 * self._logdet[c] - self.dimension * LOG_2PI)
        return logsumexp(np.stack(out), axis=0)

    def extend(self, precision_tail: np.ndarray) -> "GaussianMixture":
        """Append independent centred coordinates with the given (2, m_extra) precisions."""
        me = precision_tail.shape[1]
        C = len(self.weights)
        means = np.concatenate([self.means, np.zeros((C, 2, me))], axis=2)
        tail = np.zeros((C, me, 2, 2))
        tail[..., 0, 0] = 1.0 / precision_tail[0]
        tail[..., 1, 1] = 1.0 / precision_tail[1]
        return GaussianMixture(self.weights, means, np.concatenate([self.covs, tail], axis=1))

    @staticmethod
    def combine(mixtures, weights) -> "GaussianMixture":
        w = np.concatenate([a * m.weights for a, m in zip(weights, mixtures)])
        return GaussianMixture(w / w.sum(), np.concatenate([m.means for m in mixtures]),
                               np.concatenate([m.covs for m in mixtures]))


def constant_profile(spec: MeasureSpec, tilt: float = 1.0):
    """tilt * F + log gamma restricted to u = c, v = 0 (without the normalising constant), and its second derivative."""
    V = float(FrequencyGrid(spec.d, spec.N).volume)
    k, q = spec.k, spec.q
    sig = EnergyKit(spec).sigma

    def energy(c):
        return V * c ** (k + 1) / (k + 1)

    def ell(c):
        F = 0.5 * k * sig * V * c ** (k - 1) - energy(c) - energy(c) ** q
        return tilt * F - 0.5 * c * c

    def ell2(c):
        E0 = energy(c)
        F2 = 0.5 * k * (k - 1) * (k - 2) * sig * V * c ** (k - 3) - k * V * c ** (k - 1)
        F2 -= q * E0 ** (q - 1) * k * V * c ** (k - 1)
        if q > 1:
            F2 -= q * (q - 1) * E0 ** (q - 2) * (V * c ** k) ** 2
        return tilt * F2 - 1.0

    return ell, ell2


def constant_state_precisions(spec: MeasureSpec, c: float, tilt: float = 1.0) -> np.ndarray:
    """Hessian of -(tilt F + log gamma) at u = c, v = 0 in real coordinates, shape (2, m).

    At a constant state every quadratic form is translation invariant, so the
    Hessian is diagonal in Fourier space; it is computed term by term from the
    second-order expansion of R_{k,s,N} and E_N around the constant.
    """
    grid = FrequencyGrid(spec.d, spec.N)
    V = grid.volume
    k, q, s = spec.k, spec.q, spec.s
    sig = EnergyKit(spec).sigma
    rep, _ = canonical_modes(spec.d, spec.N)
    m = grid.norm_sq[rep]
    wu2, wv2 = weights_sq_radial(spec, m)
    E0 = V * c ** (k + 1) / (k + 1)
    dE = q * E0 ** (q - 1)
    ck1 = c ** (k - 1)
    lam_u = V * (0.5 * k * ck1 * m ** s - 0.25 * k * (k - 1) * (k - 2) * sig * c ** (k - 3) + 0.5 * k * ck1)
    lam_u = tilt * (lam_u + dE * V * (0.5 * m + 0.5 * k * ck1)) + 0.5 / wu2
    lam_v = tilt * dE * V / 2 + 0.5 / wv2
    _, ell2 = constant_profile(spec, tilt)
    wv0 = weights_sq_radial(spec, 0.0)[1]
    pu = np.concatenate([[-ell2(c)], np.repeat(4 * lam_u, 2)])
    pv = np.concatenate([[tilt * dE * V + 1.0 / wv0], np.repeat(4 * lam_v, 2)])
    return np.stack([pu, pv])


@dataclass(frozen=True)
class LaplaceMode:
    c: float
    log_peak: float
    log_evidence: float


def laplace_mixture(spec: MeasureSpec, tilt: float = 1.0, inflation: float = 1.0):
    """Mixture of Gaussians at the constant-state local maxima u = 0, +-c* of the target.

    Components are weighted by their Laplace evidence.  Returns (mixture, modes).
    """
    ell, _ = constant_profile(spec, tilt)
    sig = EnergyKit(spec).sigma
    hi = 10.0 * np.sqrt(max(sig, 1.0)) + 10.0
    res = minimize_scalar(lambda c: -ell(c), bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 500})
    cands = [0.0]
    if res.x > 1e-8 and ell(res.x) > ell(0.0):
        cands.append(float(res.x))
    modes, means, precs, logw = [], [], [], []
    m = nu_precision(spec).shape[1]
    for c in cands:
        P = constant_state_precisions(spec, c, tilt)
        if not np.all(P > 0):
            continue
        P = P / inflation ** 2
        ev = ell(c) - 0.5 * np.sum(np.log(P))
        modes.append(LaplaceMode(c, float(ell(c)), float(ev)))
        for sign in ((1.0, -1.0) if c > 0 else (1.0,)):
            mu = np.zeros((2, m))
            mu[0, 0] = sign * c
            means.append(mu)
            precs.append(P)
            logw.append(ev)
    if not means:
        raise RuntimeError("no constant-state local maximum with a positive Hessian")
    logw = np.asarray(logw)
    w = np.exp(logw - logsumexp(logw))
    return GaussianMixture.diagonal(w, np.stack(means), np.stack(precs)), modes


def pushforward(mix: GaussianMixture, spec: MeasureSpec, t: float, dt: float, scheme: str,
                rel_step: float = 1e-6) -> GaussianMixture:
    """Transport a mixture by the time-t truncated flow, linearised per (u_i, v_i) block.

    Means go through the numerical flow.  The block Jacobians come from central
    differences in which all u (resp. v) coordinates are moved at once; this is
    exact at first order when the means are constant states, because the
    linearised flow around a spatially constant orbit does not mix modes.
    """
    grid = FrequencyGrid(spec.d, spec.N)
    eng = TruncatedWave(spec)
    C, _, m = mix.means.shape

    def flow(X):
        U = coordinates_to_boxes(grid, X[:, 0])
        V = coordinates_to_boxes(grid, X[:, 1])
        U, V = eng.run(U, V, t, dt, scheme)
        return np.stack([boxes_to_coordinates(grid, U), boxes_to_coordinates(grid, V)], axis=1)

    scale = np.maximum(1.0, np.sqrt(np.max(mix.covs[..., [0, 1], [0, 1]], axis=(1, 2))))
    h = rel_step * scale
    shifts = []
    for comp in range(2):
        for sgn in (1.0, -1.0):
            e = np.zeros((C, 2, m))
            e[:, comp, :] = sgn * h[:, None]
            shifts.append(mix.means + e)
    Y = flow(np.concatenate([mix.means] + shifts))
    Y0, up, um, vp, vm = (Y[i * C:(i + 1) * C] for i in range(5))
    J = np.empty((C, m, 2, 2))
    J[..., :, 0] = np.moveaxis((up - um) / (2 * h[:, None, None]), 1, 2)
    J[..., :, 1] = np.moveaxis((vp - vm) / (2 * h[:, None, None]), 1, 2)
    covs = np.einsum("cmij,cmjk,cmlk->cmil", J, mix.covs, J)
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    return GaussianMixture(mix.weights, Y0, covs)


# ---------------------------------------------------------------- draws and weights

def proposal_draws(mix: GaussianMixture, seed: int, indices) -> np.ndarray:
    """Counter-based draws: point i uses the Philox stream (seed, i, STREAM_PROPOSAL)."""
    m = mix.dimension
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    Z = np.stack([normal_stream(seed, int(i), STREAM_PROPOSAL, 2 * m + 1) for i in idx])
    return mix.draw(Z[:, 1:].reshape(len(idx), 2, m), ndtr(Z[:, 0]))


def nu_draws(spec: MeasureSpec, seed: int, indices) -> np.ndarray:
    """Points of the nu sampler (same streams as gaussian.sample) in coordinates."""
    U, V = sample_arrays(spec, seed, indices)
    g = spec.grid
    return np.stack([boxes_to_coordinates(g, U), boxes_to_coordinates(g, V)], axis=1)


@dataclass
class WeightedDraws:
    """Log importance weights of a proposal sample and optional per-point statistics."""

    log_w: np.ndarray
    stats: dict

    @property
    def n(self) -> int:
        return len(self.log_w)

    def ess(self) -> float:
        return effective_sample_size(self.log_w)


def weighted_draws(target: PhaseTarget, seed: int, n: int, proposal="laplace", stats=None,
                   batch: int = 256, start: int = 0) -> WeightedDraws:
    """Draw n points and return log(target/proposal) plus stats(X, terms) for each batch.

    proposal: "nu" (plain nu sampling, weight e^{tilt F}), "laplace" (the constant-state
    mixture of `laplace_mixture`) or an explicit GaussianMixture.
    """
    if isinstance(proposal, str):
        if proposal == "laplace":
            proposal = laplace_mixture(target.spec, target.tilt)[0]
        elif proposal != "nu":
            raise ValueError(f"unknown proposal {proposal!r}")
    logs, collected = [], {}
    for lo in range(start, start + n, batch):
        idx = np.arange(lo, min(lo + batch, start + n))
        if isinstance(proposal, str):
            X = nu_draws(target.spec, seed, idx)
            terms = target.terms(X)
            lw = target.tilt * terms["F"]
        else:
            X = proposal_draws(proposal, seed, idx)
            terms = target.terms(X)
            lw = target.log_density(X, terms) - proposal.logpdf(X)
        logs.append(lw)
        if stats is not None:
            for key, val in stats(X, terms).items():
                collected.setdefault(key, []).append(np.asarray(val))
    return WeightedDraws(np.concatenate(logs), {k: np.concatenate(v) for k, v in collected.items()})


def effective_sample_size(log_w) -> float:
    log_w = np.asarray(log_w, dtype=float)
    return float(np.exp(2 * logsumexp(log_w) - logsumexp(2 * log_w)))


def log_mean_exp(log_w):
    """(log of the sample mean of e^{log_w}, relative standard error of that mean)."""
    log_w = np.asarray(log_w, dtype=float)
    n = len(log_w)
    top = np.max(log_w)
    w = np.exp(log_w - top)
    mean = w.mean()
    rel = float(w.std(ddof=1) / (mean * np.sqrt(n))) if n > 1 else float("inf")
    return float(top + np.log(mean)), rel


def weighted_mean(log_w, h):
    """Self-normalised estimate of E[h] and its delta-method standard error."""
    log_w = np.asarray(log_w, dtype=float)
    h = np.asarray(h, dtype=float)
    w = np.exp(log_w - np.max(log_w))
    w = w / w.sum()
    mean = float(np.sum(w * h))
    se = float(np.sqrt(np.sum(w ** 2 * (h - mean) ** 2)))
    return mean, se
