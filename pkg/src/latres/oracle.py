"""Independent position-space references.

These use second-order finite differences on an interval, a different
discretization family from the momentum-space kernels in ``assembly``, so
agreement between the two is evidence rather than a tautology.  Results are
Richardson-extrapolated (order 2) over nested grids and carry the last
refinement change as their declared tolerance.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from latres.potentials import MollifierSpec, PotentialSpec

ORACLE_VERSION = 1


@dataclass
class OracleResult:
    """Reference values with the self-convergence tolerance they were obtained at."""

    values: list
    method: str
    resolution: dict
    declared_tolerance: float
    levels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["values"] = [_encode(v) for v in self.values]
        out["levels"] = [[_encode(v) for v in lvl] for lvl in self.levels]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OracleResult":
        return cls(
            values=[_decode(v) for v in data["values"]],
            method=data["method"],
            resolution=data["resolution"],
            declared_tolerance=float(data["declared_tolerance"]),
            levels=[[_decode(v) for v in lvl] for lvl in data.get("levels", [])],
        )


def _encode(v):
    v = complex(v)
    return [v.real, v.imag]


def _decode(v):
    z = complex(v[0], v[1])
    return z.real if z.imag == 0 else z


def refinement_sizes(M: int, levels: int) -> list[int]:
    """Nested interior point counts ``(M + 1) 2^k - 1`` (grid step halves each time)."""
    return [(M + 1) * 2**k - 1 for k in range(levels)]


def _richardson(levels: list[NDArray]) -> tuple[NDArray, float]:
    """Order-2 extrapolation of matched value tracks; tolerance is the last change."""
    if len(levels) < 2:
        return levels[-1], math.inf
    ext = [(4 * levels[k] - levels[k - 1]) / 3 for k in range(1, len(levels))]
    if len(ext) == 1:
        return ext[-1], float(np.max(np.abs(levels[-1] - levels[-2]), initial=0.0))
    return ext[-1], float(np.max(np.abs(ext[-1] - ext[-2]), initial=0.0))


def _match(reference: NDArray, candidates: NDArray) -> NDArray:
    """Nearest candidate to each reference value."""
    if reference.size == 0:
        return reference.copy()
    idx = np.argmin(np.abs(candidates[None, :] - reference[:, None]), axis=1)
    return candidates[idx]


# complex scaling -------------------------------------------------------------


def _require_entire(pot: PotentialSpec) -> Callable[[NDArray], NDArray]:
    if pot.d != 1:
        raise ValueError("complex-scaling oracle is one-dimensional")
    if pot.v_x is None or not pot.analytic or math.isfinite(pot.delta0) or pot.singular_exponent:
        raise ValueError(f"{pot.label}: potential does not continue to the rotated ray")
    return lambda z: np.asarray(pot.v_x(np.asarray(z, dtype=complex)[:, None]), dtype=complex)


def _scaled_operator(V: Callable, alpha: float, box: float, M: int) -> sparse.csc_matrix:
    x = np.linspace(-box, box, M + 2)[1:-1]
    dx = x[1] - x[0]
    rot = np.exp(-2j * alpha)
    main = 2 * rot / dx**2 + V(np.exp(1j * alpha) * x)
    off = np.full(M - 1, -rot / dx**2)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csc")


def _near(A: sparse.csc_matrix, target: complex, k: int) -> NDArray:
    k = min(k, A.shape[0] - 2)
    vals = sparse_linalg.eigs(A, k=k, sigma=target, return_eigenvectors=False)
    return np.asarray(vals)


def _in_sector(z: NDArray, alpha: float, margin: float, zmax: float) -> NDArray[np.bool_]:
    return (np.angle(z) > -2 * alpha + margin) & (np.abs(z) < zmax)


def resonances_1d_complex_scaling(
    pot: PotentialSpec,
    alpha: float,
    box: float,
    M: int,
    targets: Sequence[complex] | None = None,
    levels: int = 3,
    margin: float = 0.03,
    zmax: float = 40.0,
    discovery_points: int = 1600,
) -> OracleResult:
    """Eigenvalues of ``-e^{-2i alpha} u'' + V(e^{i alpha} x) u`` off the rotated ray.

    Dirichlet conditions at ``+-box``; ``M`` interior points on the coarsest
    level.  Candidates are found by a dense solve on a coarse discovery grid
    (or taken from ``targets``) and followed by shift-invert on each level.
    """
    if not 0 < alpha < math.pi / 4:
        raise ValueError(f"rotation angle must lie in (0, pi/4), got {alpha}")
    V = _require_entire(pot)
    if targets is None:
        A0 = _scaled_operator(V, alpha, box, discovery_points).toarray()
        found = linalg.eigvals(A0)
        targets = np.sort_complex(found[_in_sector(found, alpha, margin, zmax)])
    targets = np.asarray(list(targets), dtype=complex)
    tracks = []
    for n in refinement_sizes(M, levels):
        A = _scaled_operator(V, alpha, box, n)
        row = np.empty(targets.size, dtype=complex)
        for j, t in enumerate(targets):
            row[j] = _near(A, t, 1)[0]
        tracks.append(row)
        targets = row
    keep = _in_sector(tracks[-1], alpha, margin, zmax)
    tracks = [t[keep] for t in tracks]
    values, tol = _richardson(tracks)
    order = np.argsort(values.real)
    return OracleResult(
        values=[complex(v) for v in values[order]],
        method="complex_scaling_fd2",
        resolution={"alpha": alpha, "box": box, "M": refinement_sizes(M, levels), "pot": pot.describe()},
        declared_tolerance=tol,
        levels=[[complex(v) for v in t[order]] for t in tracks],
    )


# bound states -----------------------------------------------------------------


def _substitution_power(exponent: float) -> int:
    """Integer ``q`` with ``q (1 - a) - 1`` a non-negative integer (``y = s^q`` smooths ``|y|^-a``)."""
    for q in range(1, 33):
        r = q * (1 - exponent) - 1
        if r >= -1e-12 and abs(r - round(r)) < 1e-12:
            return q
    raise ValueError(f"no polynomial substitution removes |x|^-{exponent}")


def mollified_values(
    pot: PotentialSpec,
    moll: MollifierSpec,
    scale: float,
    x: NDArray,
    nodes: int = 400,
    near_nodes: int = 1200,
) -> NDArray[np.float64]:
    """``(phi_eps * V)(x)`` by position-space quadrature for ``V = |x|^-a g(x)``.

    Away from the singularity the integrand ``phi(t) V(x - eps t)`` is smooth
    and the trapezoid rule in ``t`` is spectrally accurate.  Near it the
    substitution ``y = +-s^q`` turns ``|y|^-a dy`` into a polynomial weight and
    Gauss-Legendre handles both halves.
    """
    if pot.d != 1 or moll.d != 1 or moll.phi_x is None:
        raise ValueError("position-space mollification needs a 1D kernel with phi_x")
    a = pot.singular_exponent
    g = pot.v_x_regular if pot.v_x_regular is not None else pot.v_x

    def V(y: NDArray) -> NDArray:
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            return np.abs(y) ** (-a) * g(y[..., None]) if a else g(y[..., None])

    def phi(t: NDArray) -> NDArray:
        return np.asarray(moll.phi_x(np.asarray(t)[..., None]), dtype=float)

    x = np.asarray(x, dtype=float)
    reach = moll.extent
    out = np.empty_like(x)
    far = np.abs(x) > (reach + 1) * scale
    t = np.linspace(-reach, reach, nodes + 1)
    w = np.full(t.size, t[1] - t[0])
    w[[0, -1]] *= 0.5
    for start in range(0, int(far.sum()), 4096):
        xs = x[far][start : start + 4096]
        vals = V(xs[:, None] - scale * t[None, :]) @ (phi(t) * w)
        out[np.flatnonzero(far)[start : start + 4096]] = vals
    near = ~far
    if np.any(near):
        q = _substitution_power(a) if a else 1
        top = ((2 * reach + 1) * scale) ** (1.0 / q)
        s, ws = np.polynomial.legendre.leggauss(near_nodes)
        s = 0.5 * top * (s + 1)
        ws = 0.5 * top * ws
        y = s**q
        jac = q * s ** (q - 1) * (y ** (-a) if a else 1.0)
        gy = g(y[:, None])
        gm = g(-y[:, None])
        xs = x[near]
        k_plus = phi((xs[:, None] - y[None, :]) / scale) / scale
        k_minus = phi((xs[:, None] + y[None, :]) / scale) / scale
        out[near] = k_plus @ (ws * jac * gy) + k_minus @ (ws * jac * gm)
    return out


def _fd_levels(
    values_at: Callable[[NDArray], NDArray], box: float, M: int, levels: int, upper: float, count: int | None
) -> list[NDArray]:
    sizes = refinement_sizes(M, levels)
    x_fine = np.linspace(-box, box, sizes[-1] + 2)[1:-1]
    v_fine = values_at(x_fine)
    out = []
    for k, n in enumerate(sizes):
        stride = 2 ** (levels - 1 - k)
        v = v_fine[stride - 1 :: stride]
        dx = 2 * box / (n + 1)
        main = 2 / dx**2 + v
        off = np.full(n - 1, -1 / dx**2)
        if count is not None:
            vals = linalg.eigh_tridiagonal(main, off, eigvals_only=True, select="i", select_range=(0, count - 1))
        else:
            vals = linalg.eigh_tridiagonal(main, off, eigvals_only=True, select="v", select_range=(-1e300, upper))
        out.append(np.sort(vals))
    n_common = min(len(v) for v in out)
    return [v[:n_common] for v in out]


def bound_states_1d(
    pot: PotentialSpec | Callable[[NDArray], NDArray],
    moll: MollifierSpec | None = None,
    box: float = 20.0,
    M: int = 20000,
    scale: float | None = None,
    levels: int = 3,
    upper: float = 0.0,
    count: int | None = None,
) -> OracleResult:
    """Dirichlet finite-difference eigenvalues of ``-u'' + V u`` below ``upper``.

    ``pot`` may be a catalog entry or a plain callable ``V(x)``.  Singular
    entries need a mollifier and a fixed ``scale``; the smoothed potential is
    computed once on the finest grid and subsampled on the coarser ones.
    ``count`` selects the lowest eigenvalues by index instead of by value.
    """
    if isinstance(pot, PotentialSpec):
        if pot.d != 1:
            raise ValueError("bound-state oracle is one-dimensional")
        if pot.v_x is None:
            if moll is None or scale is None:
                raise ValueError(f"{pot.label} is singular; pass a mollifier and scale")
            values_at = lambda x: mollified_values(pot, moll, scale, x)  # noqa: E731
        elif moll is not None and scale is not None:
            values_at = lambda x: mollified_values(pot, moll, scale, x)  # noqa: E731
        else:
            values_at = lambda x: np.asarray(pot.v_x(x[:, None]), dtype=float)  # noqa: E731
        label = pot.describe()
    else:
        values_at = lambda x: np.asarray(pot(x), dtype=float)  # noqa: E731
        label = {"label": getattr(pot, "__name__", "callable")}
    tracks = _fd_levels(values_at, box, M, levels, upper, count)
    values, tol = _richardson(tracks)
    return OracleResult(
        values=[float(v) for v in values],
        method="dirichlet_fd2",
        resolution={
            "box": box,
            "M": refinement_sizes(M, levels),
            "pot": label,
            "mollifier": moll.label if moll is not None else None,
            "scale": scale,
        },
        declared_tolerance=tol,
        levels=[[float(v) for v in t] for t in tracks],
    )


def mollifier_refined_ground_state(
    pot: PotentialSpec,
    moll: MollifierSpec,
    scales: Sequence[float] = (0.04, 0.02, 0.01),
    box: float = 10.0,
    M: int = 8000,
    levels: int = 3,
) -> OracleResult:
    """Ground state of a singular potential: FD per scale, then order-2 extrapolation in the scale.

    Scales must halve.  The declared tolerance combines the scale-refinement
    change with the largest finite-difference tolerance.
    """
    scales = list(scales)
    if len(scales) < 2 or any(abs(b / a - 0.5) > 1e-12 for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must form a halving sequence of length >= 2")
    per_scale, fd_tol = [], 0.0
    for eps in scales:
        res = bound_states_1d(pot, moll, box=box, M=M, scale=eps, levels=levels, count=1)
        per_scale.append(np.array([res.values[0]]))
        fd_tol = max(fd_tol, res.declared_tolerance)
    values, tol = _richardson(per_scale)
    return OracleResult(
        values=[float(values[0])],
        method="dirichlet_fd2_mollifier_refined",
        resolution={"box": box, "M": refinement_sizes(M, levels), "scales": scales, "mollifier": moll.label},
        declared_tolerance=tol + fd_tol,
        levels=[[float(v[0])] for v in per_scale],
    )


# small utilities --------------------------------------------------------------


def brute_resolvent_entry(A: NDArray, z: complex, u1: NDArray, u2: NDArray) -> complex:
    """``<u1, (z - A)^{-1} u2>`` by a direct solve (``A`` at most 64 x 64)."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] > 64:
        raise ValueError("brute resolvent needs a square matrix of dimension <= 64")
    shifted = z * np.eye(A.shape[0]) - A
    if np.linalg.cond(shifted) > 1e14:
        raise ValueError(f"z={z} lies in the spectrum")
    return complex(np.vdot(u1, np.linalg.solve(shifted, u2)))


def direct_lattice_sum(pot: PotentialSpec, h: float, zeta: NDArray, x_max: float | None = None) -> NDArray:
    """``(2 pi)^{-1/2} h sum_n V(hn) exp(-i h n zeta)`` over ``|hn| <= x_max`` (1D)."""
    if pot.d != 1 or pot.v_x is None:
        raise ValueError("direct lattice sum needs a regular 1D potential")
    reach = pot.x_extent if x_max is None else x_max
    n = np.arange(-int(math.ceil(reach / h)), int(math.ceil(reach / h)) + 1)
    v = np.asarray(pot.v_x((h * n)[:, None]), dtype=float)
    zeta = np.asarray(zeta, dtype=complex)
    phase = np.exp(-1j * h * np.multiply.outer(zeta, n))
    return (2 * math.pi) ** -0.5 * h * (phase @ v)


# cache ------------------------------------------------------------------------


def default_cache_dir() -> Path:
    return Path(os.environ.get("LATRES_CACHE", Path.home() / ".cache" / "latres"))


def cache_key(method: str, payload: dict) -> str:
    blob = json.dumps({"method": method, "version": ORACLE_VERSION, **payload}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def cached(method: str, payload: dict, compute: Callable[[], OracleResult], cache_dir: Path | None = None) -> OracleResult:
    """Return a stored result for ``(method, payload)`` or compute and store it."""
    root = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    key = cache_key(method, payload)
    path = root / f"{key}.json"
    if path.exists():
        return OracleResult.from_dict(json.loads(path.read_text())["result"])
    result = compute()
    root.mkdir(parents=True, exist_ok=True)
    record = {"key": key, "method": method, "payload": payload, "result": result.to_dict()}
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(record, sort_keys=True, indent=1, default=str))
    tmp.replace(path)
    return result
