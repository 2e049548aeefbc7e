"""Eigenvalues, resonance identification, contour counting and operator norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from latres.assembly import OperatorMatrix
from latres.distortion import DistortionSpec, EssentialCurve, ResonanceRegion, essential_curve


class EigenSolverError(RuntimeError):
    """Dense eigensolution failed or returned pairs with large residuals."""


class ContourError(ValueError):
    """The counting contour meets the spectrum or the essential curve."""


class MultiplicityError(RuntimeError):
    """Trace of the contour projection did not settle on an integer."""


class NormIterationError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""


def _entries(A: OperatorMatrix | NDArray) -> NDArray:
    return A.entries if isinstance(A, OperatorMatrix) else np.asarray(A)


def eigen_all(A: OperatorMatrix | NDArray, vectors: bool = False, residual_tol: float = 1e-8):
    """All eigenvalues of a dense square matrix (and right eigenvectors on request).

    With ``vectors`` the residuals ``|Av - lambda v| / |v|`` are checked against
    ``residual_tol * max(1, |A|_1)``.
    """
    a = _entries(A)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise EigenSolverError("matrix has non-finite entries")
    try:
        if not vectors:
            return linalg.eigvals(a, check_finite=False)
        w, v = linalg.eig(a, check_finite=False)
    except linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}") from exc
    res = np.linalg.norm(a @ v - v * w, axis=0) / np.linalg.norm(v, axis=0)
    bound = residual_tol * max(1.0, float(np.linalg.norm(a, 1)))
    if np.any(res > bound):
        raise EigenSolverError(f"eigenpair residual {res.max():.3e} above {bound:.3e}")
    return w, v


class ResolventTrace:
    """``tr (zeta - A)^{-1}`` at many points, O(n^2) each after one Hessenberg reduction.

    Uses ``tr (zeta - A)^{-1} = d/dzeta log det(zeta - H)`` with the derivative
    carried through a partially pivoted LU of the Hessenberg form ``H``.
    """

    def __init__(self, A: OperatorMatrix | NDArray):
        a = np.asarray(_entries(A), dtype=complex)
        self.n = a.shape[0]
        self.H = linalg.hessenberg(a, check_finite=False)
        self.scale = max(1.0, float(np.max(np.abs(a))))

    def __call__(self, zeta: NDArray) -> NDArray[np.complex128]:
        zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
        H, n = self.H, self.n
        out = np.zeros(zeta.shape, dtype=complex)
        # pending pivot row (value and zeta-derivative) over columns j..n-1
        r = np.broadcast_to(-H[0], (zeta.size, n)).copy()
        r[:, 0] += zeta
        dr = np.zeros_like(r)
        dr[:, 0] = 1.0
        for j in range(n - 1):
            s = np.broadcast_to(-H[j + 1, j:], (zeta.size, n - j)).copy()
            s[:, 1] += zeta
            ds = np.zeros_like(s)
            ds[:, 1] = 1.0
            rj = r[:, : n - j]
            drj = dr[:, : n - j]
            swap = np.abs(s[:, 0]) > np.abs(rj[:, 0])
            top = np.where(swap[:, None], s, rj)
            dtop = np.where(swap[:, None], ds, drj)
            low = np.where(swap[:, None], rj, s)
            dlow = np.where(swap[:, None], drj, ds)
            piv, dpiv = top[:, 0], dtop[:, 0]
            if np.any(piv == 0):
                raise ContourError("contour node hits an eigenvalue")
            out += dpiv / piv
            ell = low[:, 0] / piv
            dell = (dlow[:, 0] - ell * dpiv) / piv
            r = low[:, 1:] - ell[:, None] * top[:, 1:]
            dr = dlow[:, 1:] - dell[:, None] * top[:, 1:] - ell[:, None] * dtop[:, 1:]
        if np.any(r[:, 0] == 0):
            raise ContourError("contour node hits an eigenvalue")
        return out + dr[:, 0] / r[:, 0]


@dataclass
class RieszDiagnostics:
    nodes: int
    trace: complex
    integrality_defect: float
    rank: int | None = None


def riesz_multiplicity(
    A: OperatorMatrix | NDArray,
    center: complex,
    radius: float,
    Q: int = 32,
    eigenvalues: NDArray | None = None,
    curve: EssentialCurve | None = None,
    tol: float = 1e-6,
    q_cap: int = 8192,
    tracer: ResolventTrace | None = None,
) -> tuple[int, RieszDiagnostics]:
    """Algebraic multiplicity inside ``|zeta - center| = radius`` from the Riesz projection trace.

    The trapezoid rule on the circle gives
    ``tr P = (1/Q) sum_q r e^{i phi_q} tr (zeta_q - A)^{-1}``; ``Q`` doubles
    (reusing nodes) until ``tr P`` is within ``tol`` of an integer.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if eigenvalues is not None:
        ev = np.asarray(eigenvalues, dtype=complex)
        scale = max(1.0, float(np.max(np.abs(ev)))) if ev.size else 1.0
        gap = np.abs(np.abs(ev - center) - radius)
        if ev.size and gap.min() < 1e-8 * scale:
            raise ContourError(f"circle passes within {gap.min():.2e} of an eigenvalue")
    if curve is not None:
        pts = center + radius * np.exp(2j * math.pi * np.arange(256) / 256)
        if curve.distance(np.array([center]))[0] <= radius or np.min(curve.distance(pts)) == 0:
            raise ContourError("circle meets the essential curve")
    tracer = tracer if tracer is not None else ResolventTrace(A)

    def partial(q: int, offset: float) -> complex:
        phases = np.exp(1j * (2 * math.pi * (np.arange(q) + offset) / q))
        return complex(np.sum(radius * phases * tracer(center + radius * phases)))

    q = Q
    acc = partial(q, 0.0)
    while True:
        trace = acc / q
        k = int(round(trace.real))
        defect = abs(trace - k)
        if defect < tol:
            return k, RieszDiagnostics(q, trace, defect)
        if 2 * q > q_cap:
            a = _entries(A)
            rank = _projection_rank(a, center, radius, min(q, 256)) if a.shape[0] <= 512 else None
            raise MultiplicityError(
                f"trace {trace:.6g} not integral after {q} nodes (rank cross-check {rank})"
            )
        # new nodes sit halfway between the old ones
        acc += partial(q, 0.5) * 1.0
        q *= 2


def _projection_rank(a: NDArray, center: complex, radius: float, q: int) -> int:
    """Rank of the quadrature projection from singular values above 1/2."""
    n = a.shape[0]
    P = np.zeros((n, n), dtype=complex)
    for t in range(q):
        w = radius * np.exp(2j * math.pi * t / q)
        P += w * np.linalg.inv((center + w) * np.eye(n) - a)
    P /= q
    return int(np.sum(np.linalg.svd(P, compute_uv=False) > 0.5))


@dataclass
class ResonanceItem:
    z: complex
    multiplicity: int
    curve_distance: float
    theta_deviation: float | None = None
    doubling_deviation: float | None = None
    boundary: bool = False

    @property
    def residuals(self) -> tuple[float, float | None, float | None]:
        return (self.curve_distance, self.theta_deviation, self.doubling_deviation)

    def to_dict(self) -> dict:
        return {
            "re": self.z.real,
            "im": self.z.imag,
            "multiplicity": self.multiplicity,
            "curve_distance": self.curve_distance,
            "theta_deviation": self.theta_deviation,
            "doubling_deviation": self.doubling_deviation,
            "boundary": self.boundary,
        }


@dataclass
class ResonanceSet:
    items: list[ResonanceItem]
    region: ResonanceRegion
    context: dict
    contours: list[tuple[complex, float, int]] = field(default_factory=list)
    thresholds: dict = field(default_factory=dict)

    def values(self) -> NDArray[np.complex128]:
        return np.array([it.z for it in self.items], dtype=complex)

    def total_multiplicity(self, center: complex, radius: float) -> int:
        return sum(it.multiplicity for it in self.items if abs(it.z - center) < radius)

    def nearest(self, z: complex) -> ResonanceItem | None:
        if not self.items:
            return None
        return min(self.items, key=lambda it: abs(it.z - z))

    def to_dict(self) -> dict:
        return {
            "items": [it.to_dict() for it in self.items],
            "context": self.context,
            "thresholds": self.thresholds,
            "contours": [[c.real, c.imag, r, k] for c, r, k in self.contours],
        }


def _clusters(z: NDArray, tol: float) -> list[list[int]]:
    order = np.argsort(z.real)
    groups: list[list[int]] = []
    for i in order:
        for g in groups:
            if np.min(np.abs(z[g] - z[i])) <= tol:
                g.append(int(i))
                break
        else:
            groups.append([int(i)])
    return groups


def identify_resonances(
    A: OperatorMatrix,
    dist: DistortionSpec | None = None,
    region: ResonanceRegion | None = None,
    stability_probe: complex | None = None,
    eigenvalues: NDArray | None = None,
    window: Callable[[NDArray], NDArray] | None = None,
    eps_factor: float = 5.0,
    tol_theta: float = 1e-4,
    tol_cluster: float | None = None,
    multiplicity: bool = True,
    Q: int = 32,
) -> ResonanceSet:
    """Discrete eigenvalues of a distorted matrix that qualify as resonances.

    Kept eigenvalues lie in ``region``, sit farther than ``eps_factor`` local
    curve gaps from the essential curve, and (with ``stability_probe``) reappear
    within ``tol_theta`` in the operator reassembled at the probe parameter.
    ``window`` is an optional extra mask on candidate energies.
    """
    dist = dist if dist is not None else A.dist
    if dist is None:
        raise ValueError("distortion spec required")
    if region is None:
        region = ResonanceRegion(delta0=math.inf, c0=1.0)
    ev = np.asarray(eigen_all(A) if eigenvalues is None else eigenvalues, dtype=complex)
    curve = essential_curve(dist, A.grid)
    d_curve = curve.distance(ev) if ev.size else np.zeros(0)
    eps_ess = eps_factor * curve.local_gap(ev) if ev.size else np.zeros(0)
    keep = region.contains(ev) & (d_curve > eps_ess)
    if window is not None:
        keep &= np.asarray(window(ev), dtype=bool)
    scale = max(1.0, float(np.max(np.abs(ev)))) if ev.size else 1.0
    if tol_cluster is None:
        tol_cluster = 1e-8 * scale
    theta_dev = np.full(ev.shape, np.nan)
    if stability_probe is not None and np.any(keep):
        if A.reassemble is None:
            raise ValueError("stability probe needs a reassembling operator")
        probe_ev = eigen_all(A.reassemble(stability_probe))
        cand = np.flatnonzero(keep)
        theta_dev[cand] = np.min(np.abs(ev[cand][:, None] - probe_ev[None, :]), axis=1)
        keep[cand] &= theta_dev[cand] < tol_theta
    idx = np.flatnonzero(keep)
    # tolerance grows to the observed spread of near-coincident eigenvalues
    groups = [[int(idx[i]) for i in g] for g in _clusters(ev[idx], tol_cluster)] if idx.size else []
    margin = region.boundary_margin(ev)
    tracer = ResolventTrace(A) if multiplicity and groups else None
    items, contours = [], []
    for g in groups:
        z = complex(np.mean(ev[g]))
        others = np.delete(ev, g)
        sep = float(np.min(np.abs(others - z))) if others.size else scale
        radius = min(0.5 * sep, 0.5 * float(np.min(d_curve[g])))
        count = len(g)
        if tracer is not None and radius > 1e-6 * scale:
            count, _ = riesz_multiplicity(A, z, radius, Q=Q, tracer=tracer)
            contours.append((z, radius, count))
        boundary = bool(np.any(d_curve[g] <= 2 * eps_ess[g]) or np.any(margin[g] < 0.02))
        dev = float(np.nanmax(theta_dev[g])) if np.any(np.isfinite(theta_dev[g])) else None
        items.append(ResonanceItem(z, max(count, 1), float(np.min(d_curve[g])), dev, None, boundary))
    items.sort(key=lambda it: (it.z.real, it.z.imag))
    grid = A.grid
    context = {
        "h": getattr(grid, "h", "continuum"),
        "theta": [dist.theta.real, dist.theta.imag] if isinstance(dist.theta, complex) else [float(dist.theta), 0.0],
        "potential": A.provenance.get("potential", {}).get("label"),
    }
    thresholds = {"eps_factor": eps_factor, "tol_theta": tol_theta, "tol_cluster": tol_cluster, "Q": Q}
    return ResonanceSet(items, region, context, contours, thresholds)


def doubling_deviation(
    coarse: ResonanceSet, fine: ResonanceSet, targets: Sequence[complex] | None = None
) -> list[float]:
    """Distance from each coarse item (or target) to the nearest item of the refined set."""
    pts = [it.z for it in coarse.items] if targets is None else list(targets)
    out = []
    for z in pts:
        near = fine.nearest(z)
        out.append(math.inf if near is None else abs(near.z - z))
    return out


def opnorm_difference(
    A,
    B,
    rtol: float = 1e-6,
    maxiter: int = 5000,
    seed: int = 0,
) -> float:
    """Largest singular value of ``A - B`` by power iteration on ``(A - B)^* (A - B)``.

    ``A`` and ``B`` are dense arrays or objects with ``matvec``/``rmatvec`` and ``shape``.
    """
    def ops(M):
        if hasattr(M, "matvec"):
            return M.shape, M.matvec, M.rmatvec
        M = np.asarray(M)
        return M.shape, (lambda v: M @ v), (lambda v: M.conj().T @ v)

    sa, fa, ra = ops(A)
    sb, fb, rb = ops(B)
    if tuple(sa) != tuple(sb):
        raise ValueError(f"shape mismatch {sa} vs {sb}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(sa[1]) + 1j * rng.standard_normal(sa[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(maxiter):
        w = fa(v) - fb(v)
        u = ra(w) - rb(w)
        new = math.sqrt(max(float(np.real(np.vdot(v, u))), 0.0))
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0
        if abs(new - est) <= rtol * new:
            return new
        est, v = new, u / nu
    raise NormIterationError(f"power iteration stalled at {est:.6e} after {maxiter} steps")
