"""Momentum-space complex distortion ``xi -> xi + theta v(xi)``.

Vector fields are represented through their value ``v(xi)`` and the
eigenvalues of their Jacobian ``Dv(xi)``; for every catalog field ``Dv`` is
symmetric with a closed-form spectrum, which makes ``J = det(I + theta Dv)``
and its square root cheap and branch-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from latres.grid import GalerkinGrid, LatticeGrid

SAFETY = 1.1


def _bump_exp(s: NDArray) -> NDArray:
    out = np.zeros_like(s, dtype=float)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _bump_exp_prime(s: NDArray) -> NDArray:
    out = np.zeros_like(s, dtype=float)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smooth_step(t: NDArray) -> NDArray:
    """Cutoff equal to 1 on ``|t| <= 1``, 0 on ``|t| >= 2``, ``C^inf`` in between."""
    a = np.abs(np.asarray(t, dtype=float))
    f_in = _bump_exp(2.0 - a)
    f_out = _bump_exp(a - 1.0)
    return f_in / (f_in + f_out)


def smooth_step_prime(t: NDArray) -> NDArray:
    """Derivative of :func:`smooth_step` with respect to ``|t|``."""
    a = np.abs(np.asarray(t, dtype=float))
    f_in, g_in = _bump_exp(2.0 - a), _bump_exp_prime(2.0 - a)
    f_out, g_out = _bump_exp(a - 1.0), _bump_exp_prime(a - 1.0)
    denom = (f_in + f_out) ** 2
    # d/da [f_in/(f_in+f_out)] with f_in' = -g_in, f_out' = g_out
    return -(g_in * f_out + f_in * g_out) / denom


class VectorField:
    """Base class: ``v`` on R^d (or on the torus for lattice-native fields)."""

    label: str = "field"
    d: int = 1
    lattice_native: bool = False

    def value(self, xi: NDArray) -> NDArray:
        raise NotImplementedError

    def dv_eigs(self, xi: NDArray) -> NDArray:
        """Eigenvalues of ``Dv(xi)``, shape ``xi.shape``."""
        raise NotImplementedError

    @property
    def sup_norm(self) -> float:
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    @property
    def support_radius(self) -> float:
        return math.inf

    def params(self) -> dict:
        return {"label": self.label, "d": self.d}


@dataclass(frozen=True, eq=False)
class CutoffDilationField(VectorField):
    """``v(xi) = xi * chi(|xi| / sqrt(E0))``: pure dilation below the energy window."""

    E0: float
    d: int = 1
    label: str = field(default="cutoff-dilation", init=False)

    def __post_init__(self) -> None:
        if not self.E0 > 0:
            raise ValueError("energy window E0 must be positive")

    @property
    def scale(self) -> float:
        return math.sqrt(self.E0)

    def value(self, xi: NDArray) -> NDArray:
        xi = np.asarray(xi, dtype=float)
        r = np.linalg.norm(xi, axis=-1, keepdims=True)
        return xi * smooth_step(r / self.scale)

    def dv_eigs(self, xi: NDArray) -> NDArray:
        xi = np.asarray(xi, dtype=float)
        t = np.linalg.norm(xi, axis=-1) / self.scale
        chi = smooth_step(t)
        radial = chi + t * smooth_step_prime(t)
        out = np.repeat(chi[..., None], xi.shape[-1], axis=-1)
        out[..., 0] = radial
        return out

    @cached_property
    def _profile(self) -> tuple[float, float]:
        t = np.linspace(0.0, 2.0, 200_001)
        chi = smooth_step(t)
        lip = max(np.max(np.abs(chi + t * smooth_step_prime(t))), np.max(chi))
        sup = np.max(t * chi) * self.scale
        return float(lip), float(sup)

    @property
    def lipschitz(self) -> float:
        return SAFETY * self._profile[0]

    @property
    def sup_norm(self) -> float:
        return SAFETY * self._profile[1]

    @property
    def support_radius(self) -> float:
        return 2.0 * self.scale

    def params(self) -> dict:
        return {"label": self.label, "d": self.d, "E0": self.E0}


@dataclass(frozen=True, eq=False)
class SineField(VectorField):
    """Lattice field ``(sin h xi_1, ..., sin h xi_d)``."""

    h: float
    d: int = 1
    label: str = field(default="lattice-sine", init=False)
    lattice_native: bool = field(default=True, init=False)

    def value(self, xi: NDArray) -> NDArray:
        return np.sin(self.h * np.asarray(xi, dtype=float))

    def dv_eigs(self, xi: NDArray) -> NDArray:
        return self.h * np.cos(self.h * np.asarray(xi, dtype=float))

    @property
    def lipschitz(self) -> float:
        return self.h

    @property
    def sup_norm(self) -> float:
        return 1.0

    def params(self) -> dict:
        return {"label": self.label, "d": self.d, "h": self.h}


FIELDS = {"cutoff-dilation": CutoffDilationField, "lattice-sine": SineField}


def make_field(label: str, **params) -> VectorField:
    try:
        cls = FIELDS[label]
    except KeyError:
        raise ValueError(f"unknown vector field {label!r}; known: {sorted(FIELDS)}") from None
    return cls(**params)


class InadmissibleDistortion(ValueError):
    pass


@dataclass(frozen=True)
class DistortionSpec:
    """A vector field together with the complex distortion parameter."""

    field: VectorField
    theta: complex = 0j

    @property
    def E0(self) -> float | None:
        return getattr(self.field, "E0", None)

    @property
    def d(self) -> int:
        return self.field.d

    def with_theta(self, theta: complex) -> "DistortionSpec":
        return DistortionSpec(self.field, complex(theta))

    def admissible(self, c0: float = 1.0, delta0: float = math.inf) -> bool:
        """Admissible ``theta`` range for a potential class ``(c0, delta0)``."""
        th = complex(self.theta)
        lip, sup = self.field.lipschitz, self.field.sup_norm
        cone = lip * (c0 * abs(th.real) + abs(th.imag)) < c0
        strip = sup * abs(th.imag) < delta0 if math.isfinite(delta0) else True
        return bool(cone and strip)

    def require_admissible(self, c0: float = 1.0, delta0: float = math.inf) -> None:
        if not self.admissible(c0, delta0):
            raise InadmissibleDistortion(
                f"theta={self.theta} inadmissible for field {self.field.label} "
                f"(Lip={self.field.lipschitz:.4g}, sup={self.field.sup_norm:.4g}, "
                f"c0={c0}, delta0={delta0})"
            )

    def params(self) -> dict:
        th = complex(self.theta)
        return {"field": self.field.params(), "theta": [th.real, th.imag]}


def _as_points(xi: NDArray, d: int) -> NDArray:
    xi = np.asarray(xi, dtype=float)
    if d == 1 and (xi.ndim == 0 or xi.shape[-1] != 1):
        xi = xi[..., None]
    return xi


def _field_sum(spec: DistortionSpec, xi: NDArray, h: float | None, what: str) -> NDArray:
    f = spec.field
    fn = f.value if what == "value" else f.dv_eigs
    if h is None or f.lattice_native:
        return fn(xi)
    # periodised field on the torus h^{-1} T^d
    period = 2 * math.pi / h
    R = f.support_radius
    reach = int(math.ceil((R + period / 2) / period)) if math.isfinite(R) else 0
    if not math.isfinite(R):
        raise ValueError("periodisation needs a compactly supported field")
    out = np.zeros(xi.shape, dtype=float)
    from latres.grid import shift_offsets

    for m in shift_offsets(xi.shape[-1], reach):
        out += fn(xi + period * m)
    return out


def _check_theta(spec: DistortionSpec) -> None:
    th = complex(spec.theta)
    if spec.field.lipschitz * (abs(th.real) + abs(th.imag)) >= 1.0:
        raise InadmissibleDistortion(
            f"|theta| Lip(v) >= 1 (theta={th}, Lip={spec.field.lipschitz:.4g})"
        )


def phi(spec: DistortionSpec, xi: NDArray, h: float | None = None) -> NDArray[np.complex128]:
    """Distortion map ``xi + theta v(xi)``; with ``h`` the periodised ``v_h`` is used.

    The trailing axis of ``xi`` holds the components (it may be omitted in 1D).
    """
    _check_theta(spec)
    x = _as_points(xi, spec.d)
    return x + complex(spec.theta) * _field_sum(spec, x, h, "value")


def jacobian(spec: DistortionSpec, xi: NDArray, h: float | None = None) -> NDArray[np.complex128]:
    """``det(I + theta Dv(xi))``."""
    _check_theta(spec)
    x = _as_points(xi, spec.d)
    lam = _field_sum(spec, x, h, "dv")
    return np.prod(1.0 + complex(spec.theta) * lam, axis=-1)


def sqrt_jacobian(spec: DistortionSpec, xi: NDArray, h: float | None = None) -> NDArray[np.complex128]:
    """Square root of the Jacobian continued from 1 at ``theta = 0``.

    Each factor ``1 + theta*lambda`` has positive real part when
    ``|theta| Lip(v) < 1``, so the product of principal roots is the continuous
    branch along the segment ``[0, theta]``.
    """
    _check_theta(spec)
    x = _as_points(xi, spec.d)
    lam = _field_sum(spec, x, h, "dv")
    factors = 1.0 + complex(spec.theta) * lam
    assert np.all(factors.real > 0), "Jacobian factor crossed the branch cut"
    return np.prod(np.sqrt(factors), axis=-1)


def kinetic_symbol_continuum(spec: DistortionSpec, xi: NDArray) -> NDArray[np.complex128]:
    """``sum_j Phi_j(xi)^2``."""
    p = phi(spec, xi)
    return np.sum(p * p, axis=-1)


def kinetic_symbol_lattice(spec: DistortionSpec, h: float, xi: NDArray) -> NDArray[np.complex128]:
    """``2 h^-2 sum_j (1 - cos(h Phi_{h,j}(xi)))`` with complex cosine."""
    p = phi(spec, xi, h=h)
    return 2.0 / h**2 * np.sum(1.0 - np.cos(h * p), axis=-1)


@dataclass(frozen=True)
class ResonanceRegion:
    """``{Im z > -2 delta0 |Re z|^{1/2}, -2 arctan(c0) < arg z < pi/2}``."""

    delta0: float
    c0: float

    def contains(self, z: NDArray) -> NDArray[np.bool_]:
        z = np.asarray(z, dtype=complex)
        arg = np.angle(z)
        if math.isfinite(self.delta0):
            parabola = z.imag > -2 * self.delta0 * np.sqrt(np.abs(z.real))
        else:
            parabola = np.ones(z.shape, dtype=bool)
        sector = (arg > -2 * math.atan(self.c0)) & (arg < math.pi / 2)
        return parabola & sector & (z != 0)

    def boundary_margin(self, z: NDArray) -> NDArray[np.float64]:
        """Angular distance from the sector edges (radians)."""
        arg = np.angle(np.asarray(z, dtype=complex))
        return np.minimum(arg + 2 * math.atan(self.c0), math.pi / 2 - arg)


class EssentialCurve:
    """Sampled image of the distorted kinetic symbol with a distance evaluator."""

    def __init__(self, points: NDArray[np.complex128], ordered: bool):
        self.points = np.asarray(points, dtype=complex).ravel()
        self.ordered = ordered
        self._tree = cKDTree(np.column_stack([self.points.real, self.points.imag]))

    def distance(self, z: NDArray) -> NDArray[np.float64]:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if not self.ordered:
            dist, _ = self._tree.query(np.column_stack([z.real, z.imag]))
            return dist
        a, b = self.points[:-1], self.points[1:]
        ab = b - a
        denom = np.where(np.abs(ab) > 0, np.abs(ab) ** 2, 1.0)
        out = np.empty(z.shape, dtype=float)
        for i, zi in enumerate(z):
            t = np.clip(np.real((zi - a) * np.conj(ab)) / denom, 0.0, 1.0)
            out[i] = np.min(np.abs(a + t * ab - zi))
        return out

    def local_gap(self, z: NDArray) -> NDArray[np.float64]:
        """Spacing of curve samples nearest to ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        pts = np.column_stack([z.real, z.imag])
        if self.ordered:
            _, idx = self._tree.query(pts)
            n = len(self.points)
            lo = np.abs(self.points[idx] - self.points[np.maximum(idx - 1, 0)])
            hi = np.abs(self.points[idx] - self.points[np.minimum(idx + 1, n - 1)])
            return np.maximum(lo, hi)
        near = self._tree.data[self._tree.query(pts)[1]]
        d2, _ = self._tree.query(near, k=2)
        return d2[:, 1]


def essential_curve(spec: DistortionSpec, grid: LatticeGrid | GalerkinGrid) -> EssentialCurve:
    """Image of the grid under the (lattice or continuum) distorted symbol."""
    xi = grid.momenta()
    if isinstance(grid, LatticeGrid):
        values = kinetic_symbol_lattice(spec, grid.h, xi)
    else:
        values = kinetic_symbol_continuum(spec, xi)
    if grid.d == 1:
        # close the torus loop so the polyline has no artificial gap
        if isinstance(grid, LatticeGrid):
            values = np.append(values, values[0])
        return EssentialCurve(values, ordered=True)
    return EssentialCurve(values, ordered=False)
