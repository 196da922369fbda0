"""Dyadic blocks, paraproducts, Besov and Hoelder norms on the torus lattice."""
from __future__ import annotations

import csv
import itertools
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .spectral import (
    TWO_PI,
    FrequencyGrid,
    SpectralField,
    plan,
)

# chi = 1 on |xi| <= R0, chi = 0 on |xi| >= R1
R0 = 0.75
R1 = 4.0 / 3.0


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi(r):
    """Radial low-frequency bump."""
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - R0) / (R1 - R0))


def annulus(r):
    """phi(xi) = chi(xi/2) - chi(xi), supported in 3/4 <= |xi| <= 8/3."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2) - chi(r)


def shell_symbol(r, j: int):
    """psi_j(r): chi for j = -1, annulus(2^-j r) for j >= 0."""
    if j < -1:
        return np.zeros_like(np.asarray(r, dtype=float))
    if j == -1:
        return chi(r)
    return annulus(np.asarray(r, dtype=float) / 2.0 ** j)


def low_symbol(r, j: int):
    """Symbol of S_j = sum_{k <= j-1} P_k, which telescopes to chi(2^-j r)."""
    if j <= -1:
        return np.zeros_like(np.asarray(r, dtype=float))
    return chi(np.asarray(r, dtype=float) / 2.0 ** j)


def jmax_for(N: float) -> int:
    """Largest shell index whose symbol meets the ball |n| <= N; the shells up to it sum to 1 there."""
    j = -1
    while R0 * 2.0 ** (j + 1) < N:
        j += 1
    return j


def shell_radius(j: int) -> float:
    """Outer radius of the support of psi_j."""
    return R1 * 2.0 ** (j + 1)


@lru_cache(maxsize=None)
def _shells(d: int, N: int) -> np.ndarray:
    g = FrequencyGrid(d, N)
    jm = jmax_for(N)
    tab = np.stack([shell_symbol(g.norm, j) for j in range(-1, jm + 1)])
    tab.flags.writeable = False
    return tab


class DyadicSystem:
    """Littlewood-Paley symbols on the lattice of radius N."""

    def __init__(self, d: int, N: int):
        self.grid = FrequencyGrid(d, N)
        self.d, self.N = d, N
        self.jmax = jmax_for(N)

    def __repr__(self):
        return f"DyadicSystem(d={self.d}, N={self.N}, jmax={self.jmax})"

    @property
    def shells(self) -> np.ndarray:
        """Array of shape (jmax + 2,) + box with psi_j at index j + 1."""
        return _shells(self.d, self.N)

    chi = staticmethod(chi)
    chitilde = staticmethod(annulus)

    def partition_defect(self) -> float:
        total = self.shells.sum(axis=0)
        return float(np.max(np.abs(total - 1.0)[self.grid.mask]))

    def to_csv(self, path, header: str | None = None) -> None:
        """Symbol table rows (n_1..n_d, j, psi_j(n)) for lattice points where psi_j != 0."""
        lat = self.grid.lattice
        idx = tuple((lat + self.N).T)
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow([f"n{i + 1}" for i in range(self.d)] + ["j", "psi"])
            for j in range(-1, self.jmax + 1):
                vals = self.shells[j + 1][idx]
                for n, val in zip(lat[vals != 0], vals[vals != 0]):
                    w.writerow(list(n) + [j, repr(float(val))])


def _symbol_on(grid: FrequencyGrid, j: int) -> np.ndarray:
    jm = jmax_for(grid.N)
    if j > jm:
        return np.zeros(grid.shape)
    return _shells(grid.d, grid.N)[j + 1]


def pj(f: SpectralField, j: int, sys: DyadicSystem | None = None) -> SpectralField:
    """Dyadic block P_j f."""
    top = max(jmax_for(f.grid.N), sys.jmax if sys is not None else -1)
    if not -1 <= j <= top:
        raise ValueError(f"shell index {j} outside [-1, {top}]")
    return SpectralField(f.grid, f.coeffs * _symbol_on(f.grid, j))


def sj(f: SpectralField, j: int, sys: DyadicSystem | None = None) -> SpectralField:
    """S_j f = sum of the blocks below j."""
    if j <= -1:
        return SpectralField.zeros(f.grid)
    if j > jmax_for(f.grid.N):
        return f
    return SpectralField(f.grid, f.coeffs * low_symbol(f.grid.norm, j) * f.grid.mask)


def _pairs_sum(a: SpectralField, b: SpectralField, terms, N_out: int | None) -> SpectralField:
    """sum over (sym_a, sym_b) in terms of (sym_a a)(sym_b b), exact on radius N_out."""
    if a.grid.d != b.grid.d:
        raise ValueError("dimension mismatch")
    d = a.grid.d
    if N_out is None:
        N_out = a.grid.N + b.grid.N
    L = sfft.next_fast_len(a.grid.N + b.grid.N + N_out + 1, real=True)
    real = a.is_real() and b.is_real()
    pa, pb, po = plan(d, a.grid.N, L), plan(d, b.grid.N, L), plan(d, N_out, L)
    fwd_a = pa.to_real if real else pa.to_complex
    fwd_b = pb.to_real if real else pb.to_complex
    acc = None
    for sa, sb in terms:
        if not np.any(sa * a.coeffs) or not np.any(sb * b.coeffs):
            continue
        prod = fwd_a(a.coeffs * sa) * fwd_b(b.coeffs * sb)
        acc = prod if acc is None else acc + prod
    out = FrequencyGrid(d, N_out)
    if acc is None:
        return SpectralField.zeros(out)
    c = po.from_real(acc) if real else po.from_complex(acc)
    return SpectralField(out, c)


def paraproduct(a: SpectralField, b: SpectralField, sys: DyadicSystem | None = None,
                N_out: int | None = None) -> SpectralField:
    """T_a b = sum_j (S_{j-1} a)(P_j b), exact, on radius N_out (default N_a + N_b)."""
    if sys is not None and (a.grid != sys.grid or b.grid != sys.grid):
        raise ValueError("paraproduct operands must live on the system's grid")
    jm = jmax_for(b.grid.N)
    terms = [(low_symbol(a.grid.norm, j - 1) * a.grid.mask, _symbol_on(b.grid, j)) for j in range(1, jm + 1)]
    return _pairs_sum(a, b, terms, N_out)


def resonant(a: SpectralField, b: SpectralField, sys: DyadicSystem | None = None,
             N_out: int | None = None) -> SpectralField:
    """Pi(a, b) = sum over |j - j'| <= 1 of (P_j a)(P_j' b)."""
    ja, jb = jmax_for(a.grid.N), jmax_for(b.grid.N)
    terms = []
    for j in range(-1, ja + 1):
        for jj in range(max(-1, j - 1), min(jb, j + 1) + 1):
            terms.append((_symbol_on(a.grid, j), _symbol_on(b.grid, jj)))
    return _pairs_sum(a, b, terms, N_out)


# ---------------------------------------------------------------- norms

def lp_norm(f: SpectralField, p: float, oversample: int = 4) -> float:
    """L^p(T^d) norm by the trapezoid rule.

    Even integer p: exact grid for the band-limited integrand. p = inf: maximum on
    an `oversample`-times refined grid. Other p: trapezoid on the refined grid.
    """
    if not (p >= 1):
        raise ValueError(f"p must be in [1, inf], got {p}")
    R = int(np.ceil(f.support_radius()))
    if R == 0:
        c0 = abs(f.coeffs[(f.grid.N,) * f.grid.d])
        return float(c0 if np.isinf(p) else c0 * TWO_PI ** (f.grid.d / p))
    g = f.resize(R)
    if np.isfinite(p) and p == int(p) and int(p) % 2 == 0:
        L = sfft.next_fast_len(int(p) * R + 1, real=True)
    else:
        L = sfft.next_fast_len(oversample * (2 * R + 1), real=True)
    pl = plan(g.grid.d, R, L)
    vals = np.abs(pl.to_real(g.coeffs) if g.is_real() else pl.to_complex(g.coeffs))
    if np.isinf(p):
        return float(vals.max())
    return float((TWO_PI ** g.grid.d * np.mean(vals ** p)) ** (1.0 / p))


def besov_norm(f: SpectralField, s: float, p: float, q: float, sys: DyadicSystem | None = None,
               oversample: int = 4) -> float:
    """l^q over shells j >= -1 of 2^{sj} ||P_j f||_{L^p}."""
    if not (p >= 1) or not (q >= 1):
        raise ValueError(f"Besov indices must satisfy p, q in [1, inf]; got p={p}, q={q}")
    jm = jmax_for(f.grid.N)
    terms = np.array([2.0 ** (s * j) * lp_norm(pj(f, j), p, oversample) for j in range(-1, jm + 1)])
    if np.isinf(q):
        return float(terms.max())
    return float(np.sum(terms ** q) ** (1.0 / q))


def holder_norm(f: SpectralField, s: float, sys: DyadicSystem | None = None, oversample: int = 4) -> float:
    """C^s = B^s_{inf, inf}."""
    return besov_norm(f, s, np.inf, np.inf, sys, oversample)


def bernstein_check(f: SpectralField, j: int, p: float, q: float, direction: str = "reverse") -> float:
    """Bernstein ratio for the block P_j f, p <= q.

    direction="reverse": ||P_j f||_p / (2^{dj(1/p-1/q)} ||P_j f||_q)
    direction="standard": ||P_j f||_q / (2^{dj(1/p-1/q)} ||P_j f||_p)
    Both are bounded in j on the torus; the standard one is the sharp statement.
    """
    if p > q:
        raise ValueError("Bernstein check needs p <= q")
    g = pj(f, j)
    a, b = lp_norm(g, p), lp_norm(g, q)
    scale = 2.0 ** (f.grid.d * max(j, 0) * (1.0 / p - 1.0 / q))
    if direction == "reverse":
        return a / (scale * b)
    if direction == "standard":
        return b / (scale * a)
    raise ValueError(f"unknown direction {direction!r}")


class ShellSpectrum:
    """Shell symbols on the half spectrum of an rfftn grid of side L, for fields of radius R.

    Works directly on H = rfftn(values) (H = L^d * coefficients), so per-shell
    quantities of a physical-space product never pass through a coefficient box.
    """

    def __init__(self, d: int, R: int, L: int, dtype=np.float32, oversample: float = 1.0):
        if L < 2 * R + 2:
            raise ValueError(f"grid side {L} cannot hold radius {R}")
        self.d, self.R, self.L = d, R, L
        self.dtype = dtype
        self.cdtype = np.complex64 if dtype == np.float32 else np.complex128
        ks = [np.fft.fftfreq(L, 1.0 / L)] * (d - 1) + [np.arange(L // 2 + 1, dtype=float)]
        K = np.meshgrid(*ks, indexing="ij")
        r = np.sqrt(sum(k * k for k in K))
        inside = r <= R + 1e-9
        self.jmax = jmax_for(R)
        self.js = np.arange(-1, self.jmax + 1)
        mult = np.full(K[-1].shape, 2.0)
        mult[..., 0] = 1.0
        if L % 2 == 0:
            mult[..., -1] = 1.0
        sym = np.stack([shell_symbol(r, int(j)) * inside for j in self.js])
        self.energy_table = (sym ** 2 * mult).astype(dtype)
        self.pieces = []
        for j in self.js:
            Rj = int(min(R, np.ceil(shell_radius(int(j)))))
            Lj = sfft.next_fast_len(int(np.ceil(oversample * (2 * Rj + 2))), real=True)
            blocks = _block_pairs(d, Rj, L, Lj)
            small = [np.arange(-Rj, Rj + 1) % Lj] * (d - 1) + [np.arange(Rj + 1)]
            full = [np.arange(-Rj, Rj + 1) % L] * (d - 1) + [np.arange(Rj + 1)]
            symbol = np.zeros((Lj,) * (d - 1) + (Lj // 2 + 1,), dtype=dtype)
            symbol[np.ix_(*small)] = sym[j + 1][np.ix_(*full)] * (Lj / L) ** d
            self.pieces.append((Lj, blocks, symbol))

    def transform(self, values) -> np.ndarray:
        """Half spectrum of real physical values (leading batch axes allowed)."""
        axes = tuple(range(-self.d, 0))
        return sfft.rfftn(np.asarray(values, dtype=self.dtype), axes=axes)

    def from_box(self, C: np.ndarray, N: int) -> np.ndarray:
        """Half spectrum on this grid of coefficient boxes of radius N (batch axis first)."""
        d, L = self.d, self.L
        H = np.zeros((C.shape[0],) + (L,) * (d - 1) + (L // 2 + 1,), dtype=self.cdtype)
        idx = [np.arange(-N, N + 1) % L] * (d - 1) + [np.arange(N + 1)]
        H[(slice(None),) + np.ix_(*idx)] = C[(Ellipsis,) + (slice(None),) * (d - 1) + (slice(N, None),)] * L ** d
        return H

    def energies(self, H) -> np.ndarray:
        """sum_n psi_j(n)^2 |c(n)|^2 per shell, shape (batch, shells)."""
        p2 = (H.real ** 2 + H.imag ** 2).reshape(H.shape[0], -1)
        tab = self.energy_table.reshape(len(self.js), -1)
        return (p2 @ tab.T).astype(float) / float(self.L) ** (2 * self.d)

    def sup_norms(self, H) -> np.ndarray:
        """max_x |P_j f(x)| per shell on the minimal grid of each shell, shape (batch, shells)."""
        B = H.shape[0]
        d = self.d
        out = np.empty((B, len(self.js)))
        for i, (Lj, blocks, symbol) in enumerate(self.pieces):
            if Lj == self.L:
                Hj = H * symbol
            else:
                Hj = np.zeros((B,) + symbol.shape, dtype=self.cdtype)
                for dst, src in blocks:
                    Hj[(slice(None),) + dst] = H[(slice(None),) + src]
                Hj *= symbol
            vals = sfft.irfftn(Hj, s=(Lj,) * d, axes=tuple(range(-d, 0))).reshape(B, -1)
            out[:, i] = np.maximum(vals.max(axis=1), -vals.min(axis=1))
        return out


def _block_pairs(d, R, L, Lj):
    """(destination, source) slice tuples copying |k_i| <= R from a side-L half spectrum to side Lj."""
    pos, neg = (slice(0, R + 1), slice(0, R + 1)), (slice(Lj - R, Lj), slice(L - R, L))
    out = []
    for combo in itertools.product((pos, neg), repeat=d - 1):
        dst = tuple(c[0] for c in combo) + (slice(0, R + 1),)
        src = tuple(c[1] for c in combo) + (slice(0, R + 1),)
        out.append((dst, src))
    return out


def shell_sup_norms(U: np.ndarray, d: int, N: int, dtype=np.float64, oversample: float = 1.0) -> np.ndarray:
    """max_x |P_j f(x)| for every shell j and every field in the batch U (leading axis).

    Each shell is evaluated on the smallest grid resolving its support, refined by
    `oversample`.  Returns shape (batch, jmax + 2).
    """
    L = sfft.next_fast_len(2 * N + 2, real=True)
    sp = _shell_spectrum(d, N, L, np.dtype(dtype).type, float(oversample))
    return sp.sup_norms(sp.from_box(U, N))


@lru_cache(maxsize=8)
def _shell_spectrum(d, N, L, dtype, oversample=1.0):
    return ShellSpectrum(d, N, L, dtype, oversample)
