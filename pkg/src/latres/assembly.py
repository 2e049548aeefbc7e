"""Dense matrices of the distorted lattice and continuum Hamiltonians.

Both live in momentum space.  The lattice operator acts on samples over the
torus grid ``2 pi k / (N h)``; the continuum reference is a Galerkin
(Nystrom) truncation on a uniform momentum box.  Kernel entries are
``w * (2 pi)^{-d/2} J^{1/2}(xi) K(Phi(xi) - Phi(eta)) J^{1/2}(eta)`` with
``K = F_h V_h`` (periodised transform) on the lattice and ``K = V^`` in the
continuum, ``w`` the grid cell volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from latres.distortion import (
    DistortionSpec,
    kinetic_symbol_continuum,
    kinetic_symbol_lattice,
    phi,
    smooth_step,
    sqrt_jacobian,
)
from latres.grid import GalerkinGrid, LatticeGrid, shift_offsets
from latres.potentials import MollifierSpec, PotentialSpec, poisson_sum


@dataclass(eq=False)
class OperatorMatrix:
    """Dense operator with the grid it lives on and how it was built."""

    entries: NDArray[np.complex128]
    grid: LatticeGrid | GalerkinGrid
    provenance: dict
    dist: DistortionSpec | None = None
    reassemble: Callable[[complex], "OperatorMatrix"] | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def theta(self) -> complex:
        return complex(self.dist.theta) if self.dist is not None else 0j

    def hermitian_defect(self) -> float:
        a = self.entries
        return float(np.max(np.abs(a - a.conj().T)) / max(np.max(np.abs(a)), 1e-300))


def _pairwise(values: NDArray) -> NDArray:
    return values[:, None, :] - values[None, :, :]


def assemble_lattice(
    pot: PotentialSpec,
    dist: DistortionSpec,
    grid: LatticeGrid,
    moll: MollifierSpec | None = None,
    rel_tol: float = 1e-12,
    max_shell: int = 16,
    kinetic: bool = True,
) -> OperatorMatrix:
    """Distorted lattice Hamiltonian ``H_{h,theta}`` on the torus momentum grid.

    With ``kinetic=False`` only the potential kernel is assembled.
    """
    if pot.d != grid.d or dist.d != grid.d:
        raise ValueError("potential, field and grid dimensions differ")
    dist.require_admissible(pot.c0, pot.delta0)
    h = grid.h
    xi = grid.momenta()
    diag = kinetic_symbol_lattice(dist, h, xi) if kinetic else np.zeros(grid.size)
    mat = np.diag(diag.astype(complex))
    tail = 0.0
    shells = 0
    if pot.label != "zero":
        p = phi(dist, xi, h=h)
        sj = sqrt_jacobian(dist, xi, h=h)
        args = _pairwise(p)
        res = poisson_sum(pot, h, args, moll=moll, rel_tol=rel_tol, max_shell=max_shell)
        weight = grid.dxi**grid.d * (2 * math.pi) ** (-grid.d / 2)
        mat = mat + weight * sj[:, None] * res.values * sj[None, :]
        tail, shells = res.tail_bound, res.shells
    prov = {
        "kind": "lattice",
        "potential": pot.describe(),
        "mollifier": moll.label if moll is not None else None,
        "distortion": dist.params(),
        "h": h,
        "N": grid.N,
        "kinetic": kinetic,
        "d": grid.d,
        "poisson_shells": shells,
        "poisson_tail_bound": tail,
        "quadrature_weight": grid.dxi**grid.d,
    }

    def again(theta: complex) -> OperatorMatrix:
        return assemble_lattice(pot, dist.with_theta(theta), grid, moll, rel_tol, max_shell, kinetic)

    return OperatorMatrix(mat, grid, prov, dist, again)


def assemble_continuum(
    pot: PotentialSpec, dist: DistortionSpec, grid: GalerkinGrid, kinetic: bool = True
) -> OperatorMatrix:
    """Galerkin truncation of the distorted continuum Hamiltonian ``H_theta``."""
    if pot.d != grid.d or dist.d != grid.d:
        raise ValueError("potential, field and grid dimensions differ")
    dist.require_admissible(pot.c0, pot.delta0)
    R = dist.field.support_radius
    if complex(dist.theta) != 0 and math.isfinite(R) and grid.cutoff < R:
        raise ValueError(f"Galerkin cutoff {grid.cutoff} below the distortion support {R}")
    xi = grid.momenta()
    diag = kinetic_symbol_continuum(dist, xi) if kinetic else np.zeros(grid.size)
    mat = np.diag(diag.astype(complex))
    if pot.label != "zero":
        p = phi(dist, xi)
        sj = sqrt_jacobian(dist, xi)
        kern = pot.evaluate_hat(_pairwise(p))
        weight = grid.dxi**grid.d * (2 * math.pi) ** (-grid.d / 2)
        mat = mat + weight * sj[:, None] * kern * sj[None, :]
    prov = {
        "kind": "continuum",
        "potential": pot.describe(),
        "distortion": dist.params(),
        "cutoff": grid.cutoff,
        "dxi": grid.dxi,
        "d": grid.d,
        "quadrature_weight": grid.dxi**grid.d,
    }

    def again(theta: complex) -> OperatorMatrix:
        return assemble_continuum(pot, dist.with_theta(theta), grid, kinetic)

    return OperatorMatrix(mat, grid, prov, dist, again)


def position_space_lattice(pot: PotentialSpec, grid: LatticeGrid, potential: NDArray | None = None) -> NDArray:
    """Periodic nearest-neighbour stencil ``T_h + V_h`` in position space (dense)."""
    from latres.potentials import restrict_to_lattice

    v = restrict_to_lattice(pot, grid) if potential is None else np.asarray(potential)
    n = grid.size
    idx = grid.indices()
    mat = np.diag(2.0 * grid.d / grid.h**2 + v).astype(complex)
    for axis in range(grid.d):
        for step in (1, -1):
            nb = idx.copy()
            nb[:, axis] += step
            mat[np.arange(n), grid.flat_index(nb)] -= 1.0 / grid.h**2
    return mat


BUMP_HALF_WIDTH = 1.5 * math.pi


@dataclass(frozen=True)
class EmbeddingFilter:
    """Band-limited filter with ``2 pi sum_m |phi_hat(t + 2 pi m)|^2 = 1`` per axis.

    ``phi_hat(t) = (2 pi)^{-1/2} B(t) / sqrt(sum_m B(t + 2 pi m)^2)`` with ``B`` a
    smooth bump supported in ``|t| < 3 pi / 2``; flat on ``|t| <= pi / 2``.
    """

    d: int = 1
    half_width: float = BUMP_HALF_WIDTH

    def __post_init__(self) -> None:
        if not (math.pi < self.half_width < 2 * math.pi):
            raise ValueError("bump half-width must lie in (pi, 2 pi)")

    def _bump(self, t: NDArray) -> NDArray:
        s = np.asarray(t, dtype=float) / self.half_width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def phi_hat_1d(self, t: NDArray) -> NDArray:
        t = np.asarray(t, dtype=float)
        b = self._bump(t)
        denom = sum(self._bump(t + 2 * math.pi * m) ** 2 for m in range(-2, 3))
        out = np.zeros_like(t)
        nz = b > 0
        out[nz] = b[nz] / np.sqrt(denom[nz])
        return out / math.sqrt(2 * math.pi)

    def phi_hat(self, t: NDArray) -> NDArray:
        t = np.asarray(t, dtype=float)
        if self.d == 1 and (t.ndim == 0 or t.shape[-1] != 1):
            t = t[..., None]
        return np.prod(self.phi_hat_1d(t), axis=-1)

    @property
    def support(self) -> float:
        return self.half_width

    @property
    def flat_radius(self) -> float:
        return 2 * math.pi - self.half_width


def _check_commensurate(filt: EmbeddingFilter, lattice: LatticeGrid, target: GalerkinGrid) -> None:
    if target.d != lattice.d or filt.d != lattice.d:
        raise ValueError("embedding dimensions differ")
    if abs(target.dxi - lattice.dxi) > 1e-12 * lattice.dxi:
        raise ValueError(f"incommensurate grids: dxi {target.dxi} vs torus {lattice.dxi}")
    if target.cutoff < filt.support / lattice.h - 1e-12:
        raise ValueError("Galerkin box does not cover the filter support")


def _embed_1d(filt: EmbeddingFilter, lattice: LatticeGrid, target: GalerkinGrid) -> NDArray:
    """1D factor of the embedding as a dense (Galerkin x torus) matrix."""
    k = np.arange(-target.K, target.K + 1)
    cols = np.mod(k + lattice.N // 2, lattice.N)
    vals = math.sqrt(2 * math.pi) * filt.phi_hat_1d(lattice.h * lattice.dxi * k)
    mat = np.zeros((k.size, lattice.N))
    mat[np.arange(k.size), cols] = vals
    return mat


def embedding_matrix(filt: EmbeddingFilter, lattice: LatticeGrid, target: GalerkinGrid) -> NDArray:
    """Dense matrix of ``I~_h`` from torus samples to Galerkin samples."""
    _check_commensurate(filt, lattice, target)
    one = _embed_1d(filt, lattice, target)
    mat = one
    for _ in range(lattice.d - 1):
        mat = np.kron(mat, one)
    return mat


def embed_apply(filt: EmbeddingFilter, f_h: NDArray, lattice: LatticeGrid, target: GalerkinGrid) -> NDArray:
    """``(2 pi)^{d/2} phi_hat(h xi) f_h(xi)`` with ``f_h`` extended periodically."""
    _check_commensurate(filt, lattice, target)
    f_h = np.asarray(f_h)
    if f_h.shape[0] != lattice.size:
        raise ValueError("torus sample count mismatch")
    gidx = target.indices()
    src = lattice.flat_index(gidx)
    weight = (2 * math.pi) ** (lattice.d / 2) * filt.phi_hat(lattice.h * target.momenta())
    return weight.reshape((-1,) + (1,) * (f_h.ndim - 1)) * f_h[src]


def embed_adjoint(filt: EmbeddingFilter, f: NDArray, lattice: LatticeGrid, target: GalerkinGrid) -> NDArray:
    """``(2 pi)^{d/2} sum_m conj(phi_hat(h xi + 2 pi m)) f(xi + 2 pi m / h)`` on the torus."""
    _check_commensurate(filt, lattice, target)
    f = np.asarray(f)
    if f.shape[0] != target.size:
        raise ValueError("Galerkin sample count mismatch")
    gidx = target.indices()
    dst = lattice.flat_index(gidx)
    weight = (2 * math.pi) ** (lattice.d / 2) * np.conj(filt.phi_hat(lattice.h * target.momenta()))
    out = np.zeros((lattice.size,) + f.shape[1:], dtype=np.result_type(f, complex))
    np.add.at(out, dst, weight.reshape((-1,) + (1,) * (f.ndim - 1)) * f)
    return out


def partition_defect(filt: EmbeddingFilter, t: NDArray) -> NDArray:
    """``(2 pi)^d sum_m |phi_hat(t + 2 pi m)|^2 - 1`` at sample points ``t``."""
    t = np.asarray(t, dtype=float)
    if filt.d == 1 and (t.ndim == 0 or t.shape[-1] != 1):
        t = t[..., None]
    total = np.zeros(t.shape[:-1])
    for m in shift_offsets(filt.d, 2):
        total += np.abs(filt.phi_hat(t + 2 * math.pi * m)) ** 2
    return (2 * math.pi) ** filt.d * total - 1.0


__all__ = [
    "OperatorMatrix",
    "EmbeddingFilter",
    "assemble_lattice",
    "assemble_continuum",
    "embed_apply",
    "embed_adjoint",
    "embedding_matrix",
    "partition_defect",
    "position_space_lattice",
    "smooth_step",
]
