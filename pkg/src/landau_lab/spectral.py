"""Periodic-box pseudospectral machinery.

Fields live on an ``n**3`` grid covering ``[0, l)**3``. Spectral data is the
real-to-complex transform over the last three axes with the forward transform
carrying ``1/n**3``, so the zero mode is the mean and
``mean(|f|**2) == sum over the full spectrum of |f_hat|**2``.

Scalars have shape ``(n, n, n)``; vectors ``(3, n, n, n)``. All operators
broadcast over a leading component axis.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

_WORKERS_ENV = "LANDAU_LAB_THREADS"


def _workers() -> int | None:
    value = os.environ.get(_WORKERS_ENV)
    return int(value) if value else None


def rfft3(a: np.ndarray) -> np.ndarray:
    return sfft.rfftn(a, axes=(-3, -2, -1), norm="forward", workers=_workers())


def irfft3(a: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(a, s=(n, n, n), axes=(-3, -2, -1), norm="forward", workers=_workers())


def fft3(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, axes=(-3, -2, -1), norm="forward", workers=_workers())


def ifft3(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, axes=(-3, -2, -1), norm="forward", workers=_workers())


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` cells per axis on a box of side ``l``."""

    n: int
    l: float = 2 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")
        if self.l <= 0:
            raise ValueError("box length must be positive")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def h(self) -> float:
        return self.l / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def volume(self) -> float:
        return self.l**3

    @property
    def center(self) -> np.ndarray:
        return np.full(3, self.l / 2)

    @cached_property
    def coords(self) -> np.ndarray:
        """Grid point coordinates, shape ``(3, n, n, n)``."""
        x = np.arange(self.n) * self.h
        return np.array(np.meshgrid(x, x, x, indexing="ij"))

    @cached_property
    def centered_coords(self) -> np.ndarray:
        """Coordinates relative to the box center (which is a grid point)."""
        return self.coords - self.center[:, None, None, None]

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.centered_coords**2, axis=0))

    @cached_property
    def _index(self) -> tuple[np.ndarray, np.ndarray]:
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        return full, half

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Wavevectors for first derivatives, shape ``(3, n, n, n//2+1)``.

        The Nyquist component is zeroed so odd-order operators map real
        fields to real fields.
        """
        full, half = self._index
        scale = 2 * np.pi / self.l
        full = np.where(np.abs(full) == self.n // 2, 0.0, full) * scale
        half = np.where(np.abs(half) == self.n // 2, 0.0, half) * scale
        return np.array(np.meshgrid(full, full, half, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|**2 including Nyquist components (used by the Laplacian)."""
        full, half = self._index
        scale = 2 * np.pi / self.l
        kx, ky, kz = np.meshgrid(full * scale, full * scale, half * scale, indexing="ij")
        return kx**2 + ky**2 + kz**2

    @cached_property
    def k2_first(self) -> np.ndarray:
        """|k|**2 of the first-derivative wavevectors, 1 at the zero mode."""
        k2 = np.sum(self.wavenumbers**2, axis=0)
        k2[k2 == 0] = 1.0
        return k2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        full, half = self._index
        cut = self.dealias_fraction * self.n / 2
        mx = np.abs(full) < cut
        mz = np.abs(half) < cut
        return mx[:, None, None] & mx[None, :, None] & mz[None, None, :]

    @cached_property
    def hermitian_weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w, (self.n, self.n, self.n // 2 + 1))

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)


class Field:
    """A real scalar or 3-vector field in physical or spectral representation.

    Fields are value-like: operators return new instances and never mutate.
    """

    __array_priority__ = 1000

    def __init__(self, grid: Grid, data: np.ndarray, spectral: bool = False):
        data = np.asarray(data)
        expected = grid.spectral_shape if spectral else grid.physical_shape
        if data.shape[-3:] != expected or data.ndim not in (3, 4):
            raise ValueError(f"array shape {data.shape} does not match grid {expected}")
        if data.ndim == 4 and data.shape[0] != 3:
            raise ValueError("vector fields must have 3 components")
        self.grid = grid
        self.data = data
        self.spectral_rep = spectral

    @classmethod
    def zeros(cls, grid: Grid, vector: bool = True) -> Field:
        shape = ((3,) if vector else ()) + grid.physical_shape
        return cls(grid, np.zeros(shape))

    @property
    def is_vector(self) -> bool:
        return self.data.ndim == 4

    @property
    def ncomp(self) -> int:
        return 3 if self.is_vector else 1

    @property
    def representation(self) -> str:
        return "spectral" if self.spectral_rep else "physical"

    def to_spectral(self) -> Field:
        if self.spectral_rep:
            return self
        return Field(self.grid, rfft3(self.data), spectral=True)

    def to_physical(self) -> Field:
        if not self.spectral_rep:
            return self
        return Field(self.grid, irfft3(self.data, self.grid.n), spectral=False)

    @property
    def values(self) -> np.ndarray:
        return self.to_physical().data

    @property
    def coefficients(self) -> np.ndarray:
        return self.to_spectral().data

    def _binary(self, other, op):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            if other.spectral_rep != self.spectral_rep:
                other = other.to_spectral() if self.spectral_rep else other.to_physical()
            return Field(self.grid, op(self.data, other.data), self.spectral_rep)
        return Field(self.grid, op(self.data, other), self.spectral_rep)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            raise TypeError("use physical-space products explicitly")
        return Field(self.grid, self.data * scalar, self.spectral_rep)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return Field(self.grid, -self.data, self.spectral_rep)

    def __repr__(self):
        kind = "vector" if self.is_vector else "scalar"
        return f"Field({kind}, n={self.grid.n}, l={self.grid.l:g}, {self.representation})"


# -- multipliers on raw spectral arrays ---------------------------------------


def grad_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    return 1j * grid.wavenumbers * f_hat[None]


def div_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    return 1j * np.sum(grid.wavenumbers * v_hat, axis=0)


def laplacian_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    return -grid.k2 * f_hat


def curl_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    k = grid.wavenumbers
    return 1j * np.array([
        k[1] * v_hat[2] - k[2] * v_hat[1],
        k[2] * v_hat[0] - k[0] * v_hat[2],
        k[0] * v_hat[1] - k[1] * v_hat[0],
    ])


def leray_hat(grid: Grid, v_hat: np.ndarray) -> np.ndarray:
    k = grid.wavenumbers
    kdotv = np.sum(k * v_hat, axis=0) / grid.k2_first
    return v_hat - k * kdotv[None]


def dealias_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    return f_hat * grid.dealias_mask


def inverse_laplacian_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    out = -f_hat / k2
    out[..., 0, 0, 0] = 0.0
    return out


def riesz_double_hat(grid: Grid, i: int, j: int, f_hat: np.ndarray) -> np.ndarray:
    k = grid.wavenumbers
    out = k[i] * k[j] / grid.k2_first * f_hat
    out[..., 0, 0, 0] = 0.0
    return out


def heat_hat(grid: Grid, f_hat: np.ndarray, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("heat propagation time must be nonnegative")
    if tau == 0:
        return f_hat.copy()
    return f_hat * np.exp(-grid.k2 * tau)


def tensor_divergence_hat(grid: Grid, u: np.ndarray, w: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Spectral ``div(u (x) w)`` with ``(div(u (x) w))_i = d_j(u_j w_i)``.

    ``u`` and ``w`` are physical vector arrays.
    """
    k = grid.wavenumbers
    out = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    for i in range(3):
        flux = rfft3(u * w[i][None])
        if dealias:
            flux *= grid.dealias_mask
        out[i] = 1j * np.sum(k * flux, axis=0)
    return out


def symmetric_divergence_hat(grid: Grid, u: np.ndarray, w: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Spectral ``div(u (x) w + w (x) u)`` using the six independent products."""
    k = grid.wavenumbers
    pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    prod = np.empty((6,) + grid.physical_shape)
    for m, (i, j) in enumerate(pairs):
        prod[m] = u[i] * w[j] + u[j] * w[i]
    flux = rfft3(prod)
    if dealias:
        flux *= grid.dealias_mask
    t = {}
    for m, (i, j) in enumerate(pairs):
        t[i, j] = t[j, i] = flux[m]
    return 1j * np.array([sum(k[j] * t[i, j] for j in range(3)) for i in range(3)])


# -- Field-level operations ---------------------------------------------------


def spectral_derivatives(f: Field, which: str) -> Field:
    """Gradient, divergence or Laplacian by exact Fourier multipliers."""
    g = f.grid
    c = f.coefficients
    if which == "gradient":
        if f.is_vector:
            raise ValueError("gradient expects a scalar field")
        return Field(g, grad_hat(g, c), spectral=True)
    if which == "divergence":
        if not f.is_vector:
            raise ValueError("divergence expects a vector field")
        return Field(g, div_hat(g, c), spectral=True)
    if which == "laplacian":
        return Field(g, laplacian_hat(g, c), spectral=True)
    raise ValueError(f"unknown derivative {which!r}")


def gradient(f: Field) -> Field:
    return spectral_derivatives(f, "gradient")


def divergence(f: Field) -> Field:
    return spectral_derivatives(f, "divergence")


def laplacian(f: Field) -> Field:
    return spectral_derivatives(f, "laplacian")


def curl(f: Field) -> Field:
    return Field(f.grid, curl_hat(f.grid, f.coefficients), spectral=True)


def vector_gradient(f: Field) -> np.ndarray:
    """Physical ``d_j f_i`` as an array of shape ``(3, 3, n, n, n)`` indexed [i, j]."""
    g = f.grid
    c = f.coefficients
    return irfft3(1j * g.wavenumbers[None, :] * c[:, None], g.n)


def leray_project(f: Field) -> Field:
    """Projection onto divergence-free fields; the mean mode is left untouched."""
    return Field(f.grid, leray_hat(f.grid, f.coefficients), spectral=True)


def riesz_double(i: int, j: int, f: Field) -> Field:
    """Apply ``lap^{-1} d_i d_j``, the multiplier ``k_i k_j / |k|**2`` (zero mean output)."""
    return Field(f.grid, riesz_double_hat(f.grid, i, j, f.coefficients), spectral=True)


def dealias(f: Field) -> Field:
    return Field(f.grid, dealias_hat(f.grid, f.coefficients), spectral=True)


def heat_propagate(f: Field, tau: float) -> Field:
    return Field(f.grid, heat_hat(f.grid, f.coefficients, tau), spectral=True)


def advect(u: Field, w: Field, dealiased: bool = True) -> Field:
    """Conservation-form ``div(u (x) w)``; equals ``(u . grad) w`` for solenoidal ``u``."""
    g = u.grid
    return Field(g, tensor_divergence_hat(g, u.values, w.values, dealiased), spectral=True)


def max_divergence(f: Field) -> float:
    return float(np.max(np.abs(divergence(f).values)))


def inner(f: Field, g: Field) -> float:
    """L2 pairing on the box by midpoint quadrature."""
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


def spectral_l2_norm(f: Field) -> float:
    """L2 norm computed from the coefficients (Parseval)."""
    c = f.coefficients
    w = f.grid.hermitian_weight
    total = np.sum(w * np.abs(c) ** 2)
    return float(np.sqrt(total * f.grid.volume))


def resample(f: Field, grid: Grid) -> Field:
    """Spectral injection/truncation onto another grid with the same box."""
    if not np.isclose(grid.l, f.grid.l):
        raise ValueError("resampling requires the same box length")
    src = f.coefficients
    n_src, n_dst = f.grid.n, grid.n
    lead = src.shape[:-3]
    out = np.zeros(lead + grid.spectral_shape, dtype=complex)
    m = min(n_src, n_dst) // 2
    # modes strictly inside both Nyquist limits
    idx = np.r_[0:m, -m + 1:0]
    src_sel = src[..., idx[:, None, None], idx[None, :, None], np.arange(m)[None, None, :]]
    out[..., idx[:, None, None], idx[None, :, None], np.arange(m)[None, None, :]] = src_sel
    return Field(grid, out, spectral=True)


def random_solenoidal(grid: Grid, rng: np.random.Generator, k_peak: float = 2.0,
                      amplitude: float = 1.0) -> Field:
    """Smooth random divergence-free field with a Gaussian-shaped spectrum.

    Spectral content decays like ``exp(-(|k|/k_peak)**2)`` in units of the
    fundamental wavenumber, so fields are resolved to machine precision for
    modest ``k_peak``. Normalized to unit L3 norm times ``amplitude``.
    """
    k0 = 2 * np.pi / grid.l
    shape = (3, grid.n, grid.n, grid.n)
    noise = rng.standard_normal(shape)
    c = rfft3(noise)
    envelope = np.exp(-grid.k2 / (k_peak * k0) ** 2)
    c = leray_hat(grid, c * envelope * grid.dealias_mask)
    c[..., 0, 0, 0] = 0.0
    v = irfft3(c, grid.n)
    scale = np.sum(np.sqrt(np.sum(v**2, axis=0)) ** 3 * grid.cell_volume) ** (1 / 3)
    return Field(grid, v * (amplitude / scale))


def localized_scalar(grid: Grid, rng: np.random.Generator, n_bumps: int = 3,
                     width: float | None = None) -> Field:
    """Smooth scalar built from random Gaussian bumps well inside the box."""
    width = width if width is not None else grid.l / 12
    x = grid.centered_coords
    f = np.zeros(grid.physical_shape)
    for _ in range(n_bumps):
        c = rng.uniform(-grid.l / 8, grid.l / 8, size=3)
        s = width * rng.uniform(0.7, 1.4)
        a = rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
        r2 = np.sum((x - c[:, None, None, None]) ** 2, axis=0)
        f += a * np.exp(-r2 / (2 * s * s))
    return Field(grid, f)


# -- snapshot files -----------------------------------------------------------

_MAGIC = b"LLFIELD1"
_HEADER = struct.Struct("<8sqdqq")


def write_field(path: str | os.PathLike, f: Field) -> None:
    """Write a field snapshot: fixed header then little-endian float64, x fastest.

    Header: magic ``LLFIELD1``, int64 n, float64 l, int64 representation
    (0 physical, 1 spectral), int64 component count. Spectral data is written
    as interleaved (real, imag) pairs over the half spectrum.
    """
    data = f.data if f.is_vector else f.data[None]
    if f.spectral_rep:
        body = np.stack([data.real, data.imag], axis=-1)
        # x fastest: reverse the spatial axes, keep (re, im) innermost
        body = np.transpose(body, (0, 3, 2, 1, 4))
    else:
        body = np.transpose(data, (0, 3, 2, 1))
    header = _HEADER.pack(_MAGIC, f.grid.n, f.grid.l, int(f.spectral_rep), f.ncomp)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(body, dtype="<f8").tobytes())


def read_field(path: str | os.PathLike, dealias_fraction: float = 2.0 / 3.0) -> Field:
    raw = Path(path).read_bytes()
    magic, n, l, rep, ncomp = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a field snapshot")
    grid = Grid(int(n), float(l), dealias_fraction)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if rep:
        nz = n // 2 + 1
        body = body.reshape(ncomp, nz, n, n, 2).transpose(0, 3, 2, 1, 4)
        data = body[..., 0] + 1j * body[..., 1]
    else:
        data = body.reshape(ncomp, n, n, n).transpose(0, 3, 2, 1)
    data = np.ascontiguousarray(data)
    if ncomp == 1:
        data = data[0]
    return Field(grid, data, spectral=bool(rep))
