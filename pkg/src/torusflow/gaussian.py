"""Gaussian random Fourier series for the measures mu_s and nu_s, the Wick constant and Q_{s,N}."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spectral import (
    FrequencyGrid,
    PhasePair,
    SpectralField,
    canonical_modes,
    fractional_symbol,
    physical_size,
    plan,
    to_physical,
)

VARIANTS = ("mu", "nu")


@dataclass(frozen=True)
class MeasureSpec:
    """Which Gaussian measure and nonlinearity a computation uses.

    q=None resolves to the smallest admissible energy exponent for k.
    """

    d: int = 2
    s: float = 2.6
    k: int = 3
    N: int = 16
    q: int | None = None
    variant: str = "nu"

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if not (np.isfinite(self.s) and self.s > 0.5):
            raise ValueError(f"s must exceed 1/2, got {self.s}")
        if int(self.k) != self.k or self.k < 3 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd integer >= 3, got {self.k}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "s", float(self.s))
        from .variational import admissible_q, check_q

        if self.q is None:
            object.__setattr__(self, "q", admissible_q(self.k))
        else:
            if int(self.q) != self.q or self.q < 1:
                raise ValueError(f"q must be a positive integer, got {self.q}")
            object.__setattr__(self, "q", int(self.q))
            check_q(self.k, self.q)

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.d, self.N)

    def with_(self, **changes) -> "MeasureSpec":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GaussianSample:
    pair: PhasePair
    seed: int
    index: int
    spec: MeasureSpec


# ---------------------------------------------------------------- weights

def weights_sq_radial(spec: MeasureSpec, nsq):
    """(w_u^2, w_v^2) as functions of m = |n|^2."""
    m = np.asarray(nsq, dtype=float)
    s = spec.s
    if spec.variant == "mu":
        return (1.0 + m) ** (-(s + 1)), (1.0 + m) ** (-s)
    with np.errstate(divide="ignore"):
        wu = np.where(m > 0, 1.0 / (m + m ** (s + 1) + (m == 0)), 1.0)
    wv = 1.0 / (1.0 + m ** s)
    return wu, wv


def coefficient_weights(spec: MeasureSpec, grid: FrequencyGrid | None = None):
    """Standard deviations (w_u, w_v) of |u(n)|, |v(n)| on `grid`, zero for |n| > spec.N."""
    grid = spec.grid if grid is None else grid
    wu2, wv2 = weights_sq_radial(spec, grid.norm_sq)
    inside = grid.norm_sq <= spec.N ** 2
    return np.sqrt(wu2) * inside, np.sqrt(wv2) * inside


# ---------------------------------------------------------------- random numbers

def _key(seed, index):
    return np.array([int(seed) % 2 ** 64, int(index) % 2 ** 64], dtype=np.uint64)


def normal_stream(seed: int, index: int, component: int, count: int, step: int = 0) -> np.ndarray:
    """Standard normals for (seed, sample index, component, step).

    The Philox key is (seed, index); component and step select disjoint counter
    ranges.  Prefixes are stable: the first m draws never depend on `count`.
    """
    bg = np.random.Philox(key=_key(seed, index), counter=np.array([0, 0, step, component], dtype=np.uint64))
    return np.random.Generator(bg).standard_normal(count)


def gaussian_coefficients(grid: FrequencyGrid, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Hermitian coefficient box from real standard normals z in canonical order.

    z[0] drives the zero mode, (z[2r+1] + i z[2r+2])/sqrt(2) the r-th representative.
    `z` may carry leading batch axes.
    """
    rep, neg = canonical_modes(grid.d, grid.N)
    batch = z.shape[:-1]
    c = np.zeros(batch + grid.shape, dtype=np.complex128)
    g = (z[..., 1::2] + 1j * z[..., 2::2]) / np.sqrt(2.0)
    idx = (Ellipsis,) + rep
    c[idx] = g * w[rep]
    c[(Ellipsis,) + neg] = np.conj(c[idx])
    zero = (Ellipsis,) + (grid.N,) * grid.d
    c[zero] = z[..., 0] * w[(grid.N,) * grid.d]
    return c


def n_real_modes(d: int, N: int) -> int:
    rep, _ = canonical_modes(d, N)
    return 1 + 2 * len(rep[0])


def sample_arrays(spec: MeasureSpec, seed: int, indices, N_grid: int | None = None):
    """Batch of coefficient boxes (U, V), shape (len(indices),) + box, on radius N_grid >= spec.N."""
    N_grid = spec.N if N_grid is None else N_grid
    grid = FrequencyGrid(spec.d, N_grid)
    wu, wv = coefficient_weights(spec, grid)
    count = n_real_modes(spec.d, spec.N)
    full = n_real_modes(spec.d, N_grid)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    zu = np.zeros((len(indices), full))
    zv = np.zeros((len(indices), full))
    for b, i in enumerate(indices):
        zu[b, :count] = normal_stream(seed, i, 0, count)
        zv[b, :count] = normal_stream(seed, i, 1, count)
    return gaussian_coefficients(grid, wu, zu), gaussian_coefficients(grid, wv, zv)


def sample(spec: MeasureSpec, seed: int, index: int = 0, N_grid: int | None = None) -> GaussianSample:
    """One draw of (u, v): u(n) = g_n w_u(n), v(n) = h_n w_v(n) for |n| <= N."""
    U, V = sample_arrays(spec, seed, [index], N_grid)
    grid = FrequencyGrid(spec.d, spec.N if N_grid is None else N_grid)
    pair = PhasePair(SpectralField(grid, U[0]), SpectralField(grid, V[0]))
    return GaussianSample(pair, int(seed), int(index), spec)


# ---------------------------------------------------------------- Wick constant

def lattice_shell_counts(d: int, N: int) -> np.ndarray:
    """counts[m] = #{n in Z^d : |n|^2 = m} for 0 <= m <= N^2 (exact integers)."""
    top = N * N
    sq = np.arange(-N, N + 1) ** 2
    one = np.bincount(sq, minlength=top + 1)[: top + 1].astype(np.int64)
    out = one
    for _ in range(d - 1):
        out = np.convolve(out, one)[: top + 1]
    return out


def sigma_N(spec: MeasureSpec, N: int | None = None) -> float:
    """sum over 0 < |n| <= N of |n|^{2s} w_u(n)^2, the variance of D^s u_N at a point."""
    N = spec.N if N is None else N
    if N == 0:
        return 0.0
    counts = lattice_shell_counts(spec.d, N)
    m = np.arange(1, N * N + 1, dtype=float)
    wu2, _ = weights_sq_radial(spec, m)
    return float(np.sum(counts[1:] * m ** spec.s * wu2))


def wick_square(f: SpectralField, spec: MeasureSpec, size: int | None = None) -> np.ndarray:
    """(D^s f)^2 - sigma_N on a physical grid exact for the square."""
    if f.support_radius() > spec.N + 1e-12:
        raise ValueError(f"field has modes beyond the cutoff N={spec.N}")
    g = f.grid
    if size is None:
        size = physical_size(g.N, power=2, N_out=0)
    dsf = SpectralField(g, f.coeffs * fractional_symbol(g, spec.s))
    vals = to_physical(dsf, size)
    return np.real(vals) ** 2 - sigma_N(spec)


def wick_square_arrays(U: np.ndarray, spec: MeasureSpec, L: int) -> np.ndarray:
    """Batched version on coefficient boxes U of radius spec.N."""
    pl = plan(spec.d, spec.N, L)
    ds = pl.to_real(U * fractional_symbol(spec.grid, spec.s))
    return ds ** 2 - sigma_N(spec)
