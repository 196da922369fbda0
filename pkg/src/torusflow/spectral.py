"""Lattices, Fourier coefficient fields, transforms and Sobolev-type norms on the torus.

Conventions: the torus is [0, 2pi)^d with volume (2pi)^d, and coefficients are
f(n) = (2pi)^-d * integral of f(x) e^{-i n.x}.  A field of radius N stores its
coefficients in a dense centred box of side 2N+1, zero outside the ball |n| <= N.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sfft

TWO_PI = 2.0 * np.pi


class AliasingError(ValueError):
    """Physical grid too coarse for an exact (de-aliased) evaluation."""


@lru_cache(maxsize=None)
def _grid_arrays(d: int, N: int):
    ax = np.arange(-N, N + 1)
    ks = np.meshgrid(*([ax] * d), indexing="ij")
    nsq = sum(k * k for k in ks)
    mask = nsq <= N * N
    out = {
        "k": tuple(ks),
        "nsq": nsq,
        "norm": np.sqrt(nsq),
        "mask": mask,
        "lattice": np.argwhere(mask) - N,
    }
    for a in out["k"]:
        a.flags.writeable = False
    for key in ("nsq", "norm", "mask", "lattice"):
        out[key].flags.writeable = False
    return out


@dataclass(frozen=True)
class FrequencyGrid:
    """Lattice points n in Z^d with Euclidean |n| <= N."""

    d: int
    N: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"cutoff must be a nonnegative integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def volume(self) -> float:
        return TWO_PI ** self.d

    @property
    def wavenumbers(self) -> tuple:
        """Component arrays n_1, ..., n_d on the box."""
        return _grid_arrays(self.d, self.N)["k"]

    @property
    def norm_sq(self) -> np.ndarray:
        return _grid_arrays(self.d, self.N)["nsq"]

    @property
    def norm(self) -> np.ndarray:
        return _grid_arrays(self.d, self.N)["norm"]

    @property
    def mask(self) -> np.ndarray:
        return _grid_arrays(self.d, self.N)["mask"]

    @property
    def lattice(self) -> np.ndarray:
        """(K, d) array of ball points in lexicographic order."""
        return _grid_arrays(self.d, self.N)["lattice"]

    def bracket(self) -> np.ndarray:
        """<n> = sqrt(1 + |n|^2)."""
        return np.sqrt(1.0 + self.norm_sq)

    def box_index(self, n) -> tuple:
        n = tuple(int(c) for c in n)
        if len(n) != self.d:
            raise ValueError(f"mode {n} has wrong dimension for d={self.d}")
        return tuple(c + self.N for c in n)


@lru_cache(maxsize=None)
def canonical_modes(d: int, N: int):
    """Half-lattice representatives ordered by (|n|^2, lexicographic).

    Returns box index arrays (rep, neg): `rep` lists one representative of each
    pair {n, -n} (first nonzero coordinate positive), `neg` the partner.  Because
    the order is by |n|^2 first, the list for radius N is a prefix of the list for
    any larger radius.
    """
    lat = _grid_arrays(d, N)["lattice"]
    nz = lat[np.any(lat != 0, axis=1)]
    first = nz[np.arange(len(nz)), np.argmax(nz != 0, axis=1)]
    reps = nz[first > 0]
    nsq = np.sum(reps * reps, axis=1)
    order = np.lexsort(tuple(reps[:, i] for i in range(d - 1, -1, -1)) + (nsq,))
    reps = reps[order]
    rep = tuple((reps + N).T)
    neg = tuple((-reps + N).T)
    return rep, neg


class SpectralField:
    """Fourier coefficients of a field on the d-torus, immutable after construction."""

    __slots__ = ("grid", "coeffs")

    def __init__(self, grid: FrequencyGrid, coeffs):
        c = np.array(coeffs, dtype=np.complex128)
        if c.shape != grid.shape:
            raise ValueError(f"coefficient array shape {c.shape} does not match grid {grid.shape}")
        if np.any(c[~grid.mask] != 0):
            raise ValueError("coefficients outside the ball |n| <= N must vanish")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        c.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", c)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    def __repr__(self):
        return f"SpectralField(d={self.grid.d}, N={self.grid.N})"

    @classmethod
    def zeros(cls, grid: FrequencyGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: FrequencyGrid, c: float) -> "SpectralField":
        a = np.zeros(grid.shape, dtype=np.complex128)
        a[(grid.N,) * grid.d] = c
        return cls(grid, a)

    @classmethod
    def plane_wave(cls, grid: FrequencyGrid, n, amplitude: complex = 1.0) -> "SpectralField":
        """amplitude * e^{i n.x} (not real unless n = 0)."""
        a = np.zeros(grid.shape, dtype=np.complex128)
        a[grid.box_index(n)] = amplitude
        return cls(grid, a)

    @classmethod
    def cosine(cls, grid: FrequencyGrid, n, amplitude: float = 1.0) -> "SpectralField":
        """amplitude * cos(n.x)."""
        a = np.zeros(grid.shape, dtype=np.complex128)
        a[grid.box_index(n)] += amplitude / 2
        a[grid.box_index([-c for c in n])] += amplitude / 2
        return cls(grid, a)

    @classmethod
    def from_lattice(cls, grid: FrequencyGrid, values) -> "SpectralField":
        values = np.asarray(values, dtype=np.complex128)
        a = np.zeros(grid.shape, dtype=np.complex128)
        a[tuple((grid.lattice + grid.N).T)] = values
        return cls(grid, a)

    def lattice_values(self) -> np.ndarray:
        return self.coeffs[tuple((self.grid.lattice + self.grid.N).T)]

    def coefficient(self, n) -> complex:
        return complex(self.coeffs[self.grid.box_index(n)])

    def hermitian_defect(self) -> float:
        flipped = np.conj(self.coeffs[(slice(None, None, -1),) * self.grid.d])
        return float(np.max(np.abs(self.coeffs - flipped), initial=0.0))

    def is_real(self, rtol: float = 1e-12) -> bool:
        scale = float(np.max(np.abs(self.coeffs), initial=0.0))
        return self.hermitian_defect() <= rtol * scale

    def support_radius(self) -> float:
        nz = self.coeffs != 0
        if not nz.any():
            return 0.0
        return float(self.grid.norm[nz].max())

    def resize(self, N: int) -> "SpectralField":
        """Embed in (or project onto) the grid of radius N."""
        new = FrequencyGrid(self.grid.d, N)
        if N == self.grid.N:
            return self
        a = np.zeros(new.shape, dtype=np.complex128)
        m = min(N, self.grid.N)
        src = tuple(slice(self.grid.N - m, self.grid.N + m + 1) for _ in range(self.grid.d))
        dst = tuple(slice(N - m, N + m + 1) for _ in range(self.grid.d))
        a[dst] = self.coeffs[src]
        a[~new.mask] = 0
        return SpectralField(new, a)

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def _check(self, other):
        if not isinstance(other, SpectralField) or other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class PhasePair:
    """Position/velocity pair (u, v) on a shared grid."""

    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must share a grid")

    @property
    def grid(self) -> FrequencyGrid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: FrequencyGrid) -> "PhasePair":
        z = SpectralField.zeros(grid)
        return cls(z, z)

    def resize(self, N: int) -> "PhasePair":
        return PhasePair(self.u.resize(N), self.v.resize(N))

    def __add__(self, other):
        return PhasePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return PhasePair(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar):
        return PhasePair(self.u * scalar, self.v * scalar)

    __rmul__ = __mul__


# ---------------------------------------------------------------- multipliers

def apply_multiplier(f: SpectralField, symbol: np.ndarray) -> SpectralField:
    return SpectralField(f.grid, np.where(f.grid.mask, f.coeffs * symbol, 0))


def project_dirichlet(f: SpectralField, M: float) -> SpectralField:
    """Keep the modes with |n| <= M."""
    if M < 0:
        raise ValueError("cutoff must be nonnegative")
    return SpectralField(f.grid, np.where(f.grid.norm_sq <= M * M, f.coeffs, 0))


def fractional_symbol(grid: FrequencyGrid, s: float) -> np.ndarray:
    """|n|^s with the zero mode set to 0."""
    if not np.isfinite(s):
        raise ValueError(f"exponent must be finite, got {s}")
    norm = grid.norm
    out = np.zeros(grid.shape)
    nz = norm > 0
    out[nz] = norm[nz] ** s
    return out


def apply_fractional_laplacian(f: SpectralField, s: float) -> SpectralField:
    """D^s f = |nabla|^s f, zero mode killed for every s."""
    return apply_multiplier(f, fractional_symbol(f.grid, s))


def derivative(f: SpectralField, axis: int) -> SpectralField:
    return apply_multiplier(f, 1j * f.grid.wavenumbers[axis])


# ---------------------------------------------------------------- norms

def l2_inner(f: SpectralField, g: SpectralField) -> complex:
    """integral of f * conj(g) by Parseval."""
    f._check(g)
    return complex(f.grid.volume * np.vdot(g.coeffs, f.coeffs))


def weighted_pair_norm_sq(p: PhasePair, s: float, normalized: bool = False) -> float:
    """int (D^s v)^2 + int (D^{s+1} u)^2 + int |grad u|^2 + int v^2 + (int u)^2.

    With normalized=True every integral is replaced by the average over the torus,
    which turns the quantity into the exact quadratic form of the nu measure.
    """
    g = p.grid
    nsq = g.norm_sq
    ds = fractional_symbol(g, s) ** 2
    ds1 = fractional_symbol(g, s + 1) ** 2
    au = np.abs(p.u.coeffs) ** 2
    av = np.abs(p.v.coeffs) ** 2
    total = float(np.sum(ds * av + ds1 * au + nsq * au + av))
    mean_u = p.u.coeffs[(g.N,) * g.d].real
    if normalized:
        return total + mean_u ** 2
    return g.volume * total + (g.volume * mean_u) ** 2


def sobolev_norm(f: SpectralField, sigma: float) -> float:
    """(int |<nabla>^sigma f|^2)^{1/2} with <n> = sqrt(1 + |n|^2)."""
    w = (1.0 + f.grid.norm_sq) ** sigma
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(f.coeffs) ** 2)))


def pair_sobolev_norm(p: PhasePair, sigma: float) -> float:
    """Norm on H^sigma x H^{sigma-1}."""
    return float(np.hypot(sobolev_norm(p.u, sigma), sobolev_norm(p.v, sigma - 1)))


# ---------------------------------------------------------------- transforms

def physical_size(N: int, power: int = 1, N_out: int | None = None) -> int:
    """Smallest fast FFT size giving exact coefficients up to N_out of a power-`power` product."""
    if N_out is None:
        N_out = N
    return sfft.next_fast_len(power * N + N_out + 1, real=True)


class _Plan:
    def __init__(self, d: int, N: int, L: int):
        if L < 2 * N + 1:
            raise AliasingError(f"grid size {L} cannot hold modes up to radius {N}")
        self.d, self.N, self.L = d, N, L
        idx = np.arange(-N, N + 1) % L
        self.half = np.ix_(*([idx] * (d - 1)), np.arange(N + 1))
        self.full = np.ix_(*([idx] * d))
        self.axes = tuple(range(-d, 0))
        self.mask = _grid_arrays(d, N)["mask"]
        self.scale = float(L) ** d

    def to_real(self, c: np.ndarray) -> np.ndarray:
        batch = c.shape[: c.ndim - self.d]
        H = np.zeros(batch + (self.L,) * (self.d - 1) + (self.L // 2 + 1,), dtype=np.complex128)
        H[(Ellipsis,) + self.half] = c[..., self.N:]
        return sfft.irfftn(H, s=(self.L,) * self.d, axes=self.axes) * self.scale

    def to_complex(self, c: np.ndarray) -> np.ndarray:
        batch = c.shape[: c.ndim - self.d]
        H = np.zeros(batch + (self.L,) * self.d, dtype=np.complex128)
        H[(Ellipsis,) + self.full] = c
        return sfft.ifftn(H, axes=self.axes) * self.scale

    def from_real(self, values: np.ndarray) -> np.ndarray:
        F = sfft.rfftn(values, axes=self.axes)
        pos = F[(Ellipsis,) + self.half] / self.scale
        out = np.empty(pos.shape[:-1] + (2 * self.N + 1,), dtype=np.complex128)
        out[..., self.N:] = pos
        flip = (Ellipsis,) + (slice(None, None, -1),) * self.d
        out[..., : self.N] = np.conj(pos[..., 1:][flip])
        # the n_d = 0 plane is Hermitian only up to round-off; symmetrize it exactly
        plane = out[..., self.N]
        pflip = (Ellipsis,) + (slice(None, None, -1),) * (self.d - 1)
        out[..., self.N] = 0.5 * (plane + np.conj(plane[pflip]))
        out *= self.mask
        return out

    def from_complex(self, values: np.ndarray) -> np.ndarray:
        F = sfft.fftn(values, axes=self.axes)
        return F[(Ellipsis,) + self.full] / self.scale * self.mask


@lru_cache(maxsize=128)
def plan(d: int, N: int, L: int) -> _Plan:
    return _Plan(d, N, L)


def to_physical(f: SpectralField, size: int | None = None, *, oversample: int | None = None,
                power: int = 1) -> np.ndarray:
    """Grid values f(2 pi j / L) on an L^d grid.

    `power` declares the degree of the pointwise product the values will enter;
    the grid must then have at least (power + 1) N + 1 points per axis.
    """
    N = f.grid.N
    need = (power + 1) * N + 1
    if size is None:
        size = oversample * (2 * N + 1) if oversample else sfft.next_fast_len(need, real=True)
    if oversample is not None and oversample < 1:
        raise ValueError("oversample must be >= 1")
    if size < need:
        raise AliasingError(f"grid size {size} < {need} needed for power {power} at radius {N}")
    pl = plan(f.grid.d, N, size)
    if f.is_real():
        return pl.to_real(f.coeffs)
    return pl.to_complex(f.coeffs)


def from_physical(values: np.ndarray, grid: FrequencyGrid) -> SpectralField:
    """Coefficients on `grid` of the trigonometric interpolant of grid values."""
    values = np.asarray(values)
    L = values.shape[0]
    if values.shape != (L,) * grid.d:
        raise ValueError(f"values must be an L^{grid.d} array")
    pl = plan(grid.d, grid.N, L)
    if np.iscomplexobj(values):
        return SpectralField(grid, pl.from_complex(values))
    return SpectralField(grid, pl.from_real(values))


def multiply(*fields: SpectralField, N_out: int | None = None) -> SpectralField:
    """Exact product of fields (no aliasing), returned on radius N_out (default: sum of radii)."""
    d = fields[0].grid.d
    if any(f.grid.d != d for f in fields):
        raise ValueError("dimension mismatch")
    total = sum(f.grid.N for f in fields)
    if N_out is None:
        N_out = total
    L = sfft.next_fast_len(total + N_out + 1, real=True)
    real = all(f.is_real() for f in fields)
    vals = None
    for f in fields:
        pl = plan(d, f.grid.N, L)
        x = pl.to_real(f.coeffs) if real else pl.to_complex(f.coeffs)
        vals = x if vals is None else vals * x
    out = FrequencyGrid(d, N_out)
    pl = plan(d, N_out, L)
    c = pl.from_real(vals) if real else pl.from_complex(vals)
    return SpectralField(out, c)


def integrate(values: np.ndarray, d: int | None = None) -> float:
    """Trapezoid integral over the torus of grid values (exact for band-limited data)."""
    d = values.ndim if d is None else d
    return TWO_PI ** d * float(np.mean(values, axis=tuple(range(-d, 0))))


# ---------------------------------------------------------------- real coordinates

def boxes_to_coordinates(grid: FrequencyGrid, C: np.ndarray) -> np.ndarray:
    """Batched real coordinates (Re c(0), Re c(n), Im c(n), ...) over canonical representatives."""
    rep, _ = canonical_modes(grid.d, grid.N)
    c = C[(Ellipsis,) + rep]
    out = np.empty(C.shape[: C.ndim - grid.d] + (1 + 2 * c.shape[-1],))
    out[..., 0] = C[(Ellipsis,) + (grid.N,) * grid.d].real
    out[..., 1::2] = c.real
    out[..., 2::2] = c.imag
    return out


def coordinates_to_boxes(grid: FrequencyGrid, X: np.ndarray) -> np.ndarray:
    """Inverse of `boxes_to_coordinates`; Hermitian boxes with leading batch axes."""
    rep, neg = canonical_modes(grid.d, grid.N)
    X = np.asarray(X, dtype=float)
    C = np.zeros(X.shape[:-1] + grid.shape, dtype=np.complex128)
    z = X[..., 1::2] + 1j * X[..., 2::2]
    C[(Ellipsis,) + rep] = z
    C[(Ellipsis,) + neg] = np.conj(z)
    C[(Ellipsis,) + (grid.N,) * grid.d] = X[..., 0]
    return C


def real_coordinates(f: SpectralField) -> np.ndarray:
    """Real vector (Re f(0), Re f(n), Im f(n) for canonical representatives n) of a real field."""
    return boxes_to_coordinates(f.grid, f.coeffs)


def from_real_coordinates(grid: FrequencyGrid, x: np.ndarray) -> SpectralField:
    return SpectralField(grid, coordinates_to_boxes(grid, x))


# ---------------------------------------------------------------- field files

FIELD_MAGIC = b"TFLD"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sHBIdQ32s")


def write_field(path, f: SpectralField, s_tag: float = float("nan"), config_hash: str = "") -> None:
    """Binary field file: header (magic, version, d, N, s-tag, count, config hash)
    then little-endian float64 (re, im) pairs in lexicographic lattice order."""
    vals = f.lattice_values()
    h = config_hash.encode("ascii")[:32].ljust(32, b"\0")
    body = np.empty(2 * len(vals), dtype="<f8")
    body[0::2] = vals.real
    body[1::2] = vals.imag
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, f.grid.d, f.grid.N, s_tag, len(vals), h))
        fh.write(body.tobytes())


def read_field(path):
    """Returns (field, header dict)."""
    raw = Path(path).read_bytes()
    magic, version, d, N, s_tag, count, h = _HEADER.unpack_from(raw, 0)
    if magic != FIELD_MAGIC:
        raise ValueError(f"{path}: not a field file")
    if version != FIELD_VERSION:
        raise ValueError(f"{path}: unsupported field format version {version}")
    grid = FrequencyGrid(d, N)
    if count != len(grid.lattice):
        raise ValueError(f"{path}: coefficient count {count} does not match radius {N}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=2 * count)
    f = SpectralField.from_lattice(grid, body[0::2] + 1j * body[1::2])
    header = {"version": version, "d": d, "N": N, "s_tag": s_tag,
              "config_hash": h.rstrip(b"\0").decode("ascii")}
    return f, header
