"""Position/momentum grids and the lattice Fourier transform.

The infinite lattice ``hZ^d`` is replaced by ``N^d`` sites with periodic
identification.  Arrays live on a flat row-major multi-index layout: site
``n = (n_1, ..., n_d)`` with ``n_j in [-N/2, N/2)`` sits at flat index
``sum_j (n_j + N/2) * N**(d-1-j)``.  The same layout is used for the dual
torus momenta ``2*pi*k/(N*h)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

SITE_BUDGET = 2**22


@dataclass(frozen=True)
class LatticeGrid:
    """Periodic truncation of ``hZ^d`` to ``N^d`` sites."""

    h: float
    N: int
    d: int = 1
    budget: int = field(default=SITE_BUDGET, compare=False)

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError(f"lattice spacing must be positive, got {self.h}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N}")
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N**self.d > self.budget:
            raise ValueError(f"N^d = {self.N**self.d} exceeds the site budget {self.budget}")

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def box(self) -> float:
        """Physical period ``L = N h``."""
        return self.N * self.h

    @property
    def dxi(self) -> float:
        """Torus momentum spacing ``2 pi / (N h)``."""
        return 2 * math.pi / (self.N * self.h)

    @property
    def period(self) -> float:
        """Momentum period ``2 pi / h``."""
        return 2 * math.pi / self.h

    def indices(self) -> NDArray[np.int64]:
        """Integer multi-indices in ``[-N/2, N/2)^d``, shape ``(N^d, d)``."""
        axis = np.arange(-self.N // 2, self.N // 2)
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def positions(self) -> NDArray[np.float64]:
        return self.h * self.indices().astype(float)

    def momenta(self) -> NDArray[np.float64]:
        return self.dxi * self.indices().astype(float)

    def flat_index(self, multi: NDArray[np.int64]) -> NDArray[np.int64]:
        """Flat index of multi-indices (wrapped periodically into the window)."""
        multi = np.asarray(multi)
        wrapped = np.mod(multi + self.N // 2, self.N)
        return np.ravel_multi_index(tuple(np.moveaxis(wrapped, -1, 0)), (self.N,) * self.d)


@dataclass(frozen=True)
class GalerkinGrid:
    """Uniform momentum grid ``{k dxi : |k dxi|_inf <= cutoff}`` for the continuum."""

    cutoff: float
    dxi: float
    d: int = 1

    def __post_init__(self) -> None:
        if not (self.cutoff > 0 and self.dxi > 0):
            raise ValueError("cutoff and step must be positive")
        ratio = self.cutoff / self.dxi
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"cutoff/step must be an integer, got {ratio}")

    @property
    def K(self) -> int:
        return int(round(self.cutoff / self.dxi))

    @property
    def size(self) -> int:
        return (2 * self.K + 1) ** self.d

    def indices(self) -> NDArray[np.int64]:
        axis = np.arange(-self.K, self.K + 1)
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def momenta(self) -> NDArray[np.float64]:
        return self.dxi * self.indices().astype(float)

    @classmethod
    def commensurate(cls, lattice: LatticeGrid, cutoff: float) -> "GalerkinGrid":
        """Galerkin grid sharing the torus spacing, covering at least ``cutoff``."""
        K = int(math.ceil(cutoff / lattice.dxi - 1e-9))
        return cls(cutoff=K * lattice.dxi, dxi=lattice.dxi, d=lattice.d)


def _check_size(arr: NDArray, grid: LatticeGrid) -> NDArray:
    arr = np.asarray(arr)
    if arr.shape[0] != grid.size:
        raise ValueError(f"expected {grid.size} samples, got {arr.shape[0]}")
    return arr


def forward_transform(u: NDArray, grid: LatticeGrid) -> NDArray[np.complex128]:
    """Lattice Fourier transform sampled on the torus momentum grid.

    ``f(xi) = (2 pi)^{-d/2} h^d sum_n u(hn) exp(-i h n . xi)``.  Unitary between
    ``h^d sum |u|^2`` and ``dxi^d sum |f|^2``.  Extra trailing axes of ``u`` are
    transformed independently.
    """
    u = _check_size(u, grid)
    shape = (grid.N,) * grid.d
    cube = u.reshape(shape + u.shape[1:])
    axes = tuple(range(grid.d))
    f = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(cube, axes=axes), axes=axes), axes=axes)
    f *= (2 * math.pi) ** (-grid.d / 2) * grid.h**grid.d
    return f.reshape(u.shape)


def inverse_transform(f: NDArray, grid: LatticeGrid) -> NDArray[np.complex128]:
    """Exact inverse of :func:`forward_transform`."""
    f = _check_size(f, grid)
    shape = (grid.N,) * grid.d
    cube = f.reshape(shape + f.shape[1:])
    axes = tuple(range(grid.d))
    u = np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(cube, axes=axes), axes=axes), axes=axes)
    u *= (2 * math.pi) ** (grid.d / 2) / grid.h**grid.d
    return u.reshape(f.shape)


def lattice_norm(u: NDArray, grid: LatticeGrid) -> float:
    return float(np.sqrt(grid.h**grid.d * np.sum(np.abs(u) ** 2)))


def torus_norm(f: NDArray, grid: LatticeGrid) -> float:
    return float(np.sqrt(grid.dxi**grid.d * np.sum(np.abs(f) ** 2)))


def reduce_to_torus(xi: NDArray, h: float) -> NDArray:
    """Shift real parts into the fundamental domain ``[-pi/h, pi/h)``."""
    period = 2 * math.pi / h
    xi = np.asarray(xi)
    re = np.real(xi)
    shift = period * np.floor((re + period / 2) / period)
    return xi - shift


def torus_distance(xi: NDArray, eta: NDArray, grid: LatticeGrid) -> NDArray[np.float64]:
    """Periodic Euclidean distance on ``h^{-1} T^d``; trailing axis is the component."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    period = grid.period
    diff = np.mod(xi - eta + period / 2, period) - period / 2
    # the half-period point is equidistant both ways; report the positive value
    diff = np.abs(diff)
    return np.sqrt(np.sum(diff**2, axis=-1))


def shift_offsets(d: int, radius: int) -> NDArray[np.int64]:
    """All integer vectors ``m`` with ``|m|_inf <= radius``."""
    axis = range(-radius, radius + 1)
    return np.array(list(itertools.product(axis, repeat=d)), dtype=np.int64)
