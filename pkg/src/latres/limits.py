"""Continuum-limit experiments: h-sweeps, track matching, rate fits, norm measurements."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from latres.assembly import (
    EmbeddingFilter,
    assemble_continuum,
    assemble_lattice,
    embedding_matrix,
)
from latres.distortion import (
    CutoffDilationField,
    DistortionSpec,
    ResonanceRegion,
    jacobian,
    kinetic_symbol_continuum,
    kinetic_symbol_lattice,
)
from latres.grid import GalerkinGrid, LatticeGrid
from latres.potentials import MollifierSpec, PotentialSpec, majorant_check
from latres.spectra import eigen_all, identify_resonances, opnorm_difference


class ReferenceInconsistencyError(RuntimeError):
    """Two independent references disagree beyond their declared tolerances."""


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    max_residual: float
    points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "max_residual": self.max_residual, "points": self.points}


def fit_rate(h: Sequence[float], err: Sequence[float], floor: float = 0.0) -> RateFit:
    """Least-squares slope of ``log err`` against ``log h``.

    Points with ``err <= floor`` are dropped (they sit at the solver's noise
    level).  At least three points must survive.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    keep = np.isfinite(err) & (err > floor) & (err > 0)
    if keep.sum() < 3:
        raise ValueError(f"rate fit needs >= 3 usable rungs, got {int(keep.sum())}")
    x, y = np.log(h[keep]), np.log(err[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.max(np.abs(resid))), int(keep.sum()))


def check_ladder(ladder: Sequence[tuple[float, int]]) -> list[tuple[float, int]]:
    """Rungs sorted by decreasing ``h``; repeated spacings are rejected."""
    out = sorted(((float(h), int(n)) for h, n in ladder), key=lambda r: -r[0])
    hs = [h for h, _ in out]
    if not out:
        raise ValueError("ladder is empty")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError(f"ladder spacings must be distinct, got {hs}")
    return out


def fixed_box_ladder(hs: Sequence[float], box: float) -> list[tuple[float, int]]:
    """Rungs ``(h, N)`` with ``N h = box`` (``N`` rounded to an even integer)."""
    out = []
    for h in hs:
        n = int(round(box / h))
        n += n % 2
        out.append((float(h), n))
    return out


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class TrackPoint:
    h: float
    N: int
    z: complex
    err: float | None
    multiplicity: int = 1


@dataclass
class Track:
    track_id: str
    points: list[TrackPoint]
    reference: complex | None = None
    rate: RateFit | None = None
    ambiguous: bool = False
    monotone: bool | None = None

    def errors(self) -> NDArray:
        return np.array([p.err if p.err is not None else np.nan for p in self.points], dtype=float)

    def to_dict(self) -> dict:
        return {
            "id": self.track_id,
            "points": [
                {"h": p.h, "N": p.N, "re": p.z.real, "im": p.z.imag, "err": p.err, "multiplicity": p.multiplicity}
                for p in self.points
            ],
            "reference": None if self.reference is None else [self.reference.real, self.reference.imag],
            "rate": None if self.rate is None else self.rate.slope,
            "residual": None if self.rate is None else self.rate.max_residual,
            "ambiguous": self.ambiguous,
            "monotone": self.monotone,
        }


@dataclass
class ConvergenceReport:
    """Tracks along an h-ladder with their references and fitted rates."""

    ladder: list[dict]
    tracks: list[Track]
    reference: dict
    disk_counts: list[int] = field(default_factory=list)
    threshold_rung: float | None = None
    provenance: dict = field(default_factory=dict)
    stability: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ladder": self.ladder,
            "tracks": [t.to_dict() for t in self.tracks],
            "reference": self.reference,
            "disk_counts": self.disk_counts,
            "threshold_rung": self.threshold_rung,
            "provenance": self.provenance,
            "stability": self.stability,
        }

    def csv_rows(self) -> list[dict]:
        rows = []
        for t in self.tracks:
            for p in t.points:
                rows.append(
                    {
                        "track_id": t.track_id,
                        "h": p.h,
                        "N": p.N,
                        "re_z": p.z.real,
                        "im_z": p.z.imag,
                        "abs_err": "" if p.err is None else p.err,
                        "multiplicity": p.multiplicity,
                    }
                )
        return rows


def _finish_track(track: Track, floor: float) -> Track:
    err = track.errors()
    if np.all(np.isfinite(err)) and err.size:
        track.monotone = bool(np.all(np.diff(err) < 0))
        try:
            track.rate = fit_rate([p.h for p in track.points], err, floor=floor)
        except ValueError:
            track.rate = None
    return track


def track_limit(track: Track, order: float = 2.0) -> tuple[complex, float]:
    """Extrapolated limit of a track from its last two rungs and the last observed change.

    Returns ``(estimate, tolerance)`` with the tolerance equal to the change
    between the last two rungs, which bounds the extrapolation correction.
    """
    if len(track.points) < 2:
        raise ValueError("limit estimate needs two rungs")
    a, b = track.points[-2], track.points[-1]
    ratio = (a.h / b.h) ** order
    est = (ratio * b.z - a.z) / (ratio - 1)
    return complex(est), float(abs(b.z - a.z))


def _threshold(counts: list[int], hs: list[float]) -> float | None:
    """Largest h from which the disk count stays constant to the end of the ladder."""
    if not counts:
        return None
    k = len(counts) - 1
    while k > 0 and counts[k - 1] == counts[-1]:
        k -= 1
    return hs[k]


def default_distortion(d: int = 1) -> DistortionSpec:
    """Undistorted operator (``theta = 0``) with a unit-window dilation field."""
    return DistortionSpec(CutoffDilationField(E0=1.0, d=d), 0j)


def sweep_resonances(
    pot: PotentialSpec,
    dist: DistortionSpec,
    ladder: Sequence[tuple[float, int]],
    moll: MollifierSpec | None = None,
    region: ResonanceRegion | None = None,
    references: Sequence[complex] | None = None,
    reference_info: dict | None = None,
    window: Callable[[NDArray], NDArray] | None = None,
    gamma_factor: float = 0.1,
    eps_factor: float = 5.0,
    disk_radius: float = 0.5,
    probe: complex | None = None,
    probe_rungs: str = "finest",
    multiplicity: bool = True,
    jobs: int = 1,
    floor: float = 1e-12,
) -> ConvergenceReport:
    """Resonances along an h-ladder, matched into tracks and compared with references.

    Tracks start from ``references`` when given (oracle or continuum values) and
    otherwise from the finest rung's resonances.  On each rung a track takes the
    unique resonance within ``gamma = gamma_factor * local spacing`` of its
    previous position; two candidates mark the track ambiguous.
    """
    ladder = check_ladder(ladder)
    if region is None:
        region = ResonanceRegion(pot.delta0, pot.c0)

    def rung(item):
        k, (h, n) = item
        grid = LatticeGrid(h, n, d=pot.d)
        A = assemble_lattice(pot, dist, grid, moll)
        use_probe = probe is not None and (probe_rungs == "all" or (probe_rungs == "finest" and k == len(ladder) - 1))
        ev = eigen_all(A)
        rs = identify_resonances(
            A, dist, region, stability_probe=probe if use_probe else None, eigenvalues=ev, window=window,
            eps_factor=eps_factor, multiplicity=multiplicity,
        )
        return grid, A.provenance, ev, rs

    results = _map(rung, list(enumerate(ladder)), jobs)
    hs = [h for h, _ in ladder]
    seeds = list(references) if references is not None else [it.z for it in results[-1][3].items]
    tracks = []
    for j, seed in enumerate(seeds):
        tr = Track(f"r{j}", [], reference=complex(seed) if references is not None else None)
        prev = complex(seed)
        for (h, n), (grid, _, ev, rs) in zip(ladder, results):
            zs = rs.values()
            if zs.size == 0:
                continue
            others = np.sort(np.abs(ev - prev))
            spacing = others[1] if others.size > 1 else 1.0
            gamma = max(gamma_factor * spacing, gamma_factor * abs(prev - complex(seed)))
            if references is not None:
                gamma = max(gamma, disk_radius)
            near = np.flatnonzero(np.abs(zs - prev) <= gamma)
            if near.size == 0:
                continue
            if near.size > 1:
                tr.ambiguous = True
                continue
            item = rs.items[int(near[0])]
            err = abs(item.z - tr.reference) if tr.reference is not None else None
            tr.points.append(TrackPoint(h, n, item.z, err, item.multiplicity))
            prev = item.z
        tracks.append(_finish_track(tr, floor))
    counts = []
    if references is not None and len(references):
        center = complex(references[0])
        counts = [rs.total_multiplicity(center, disk_radius) for (_, _, _, rs) in results]
    stability = {}
    last = results[-1][3]
    for tr in tracks:
        if tr.points:
            it = last.nearest(tr.points[-1].z)
            if it is not None and it.theta_deviation is not None:
                stability[tr.track_id] = it.theta_deviation
    return ConvergenceReport(
        ladder=[
            {"h": h, "N": n, "box": h * n, "dxi": 2 * math.pi / (h * n)} for h, n in ladder
        ],
        tracks=tracks,
        reference=reference_info or {"kind": "oracle" if references is not None else "none"},
        disk_counts=counts,
        threshold_rung=_threshold(counts, hs) if counts else None,
        provenance={
            "poisson_tail_bounds": [prov.get("poisson_tail_bound") for (_, prov, _, _) in results],
            "probe": None if probe is None else [probe.real, probe.imag],
            "distortion": dist.params(),
            "potential": pot.describe(),
            "mollifier": None if moll is None else moll.label,
        },
        stability=stability,
    )


def continuum_resonances(
    pot: PotentialSpec,
    dist: DistortionSpec,
    cutoff: float,
    dxi: float,
    region: ResonanceRegion | None = None,
    window: Callable[[NDArray], NDArray] | None = None,
) -> tuple[NDArray, float]:
    """Galerkin resonances and their self-convergence under halving ``dxi``."""
    region = region if region is not None else ResonanceRegion(pot.delta0, pot.c0)
    found = []
    for step in (dxi, dxi / 2):
        K = int(math.ceil(cutoff / step))
        grid = GalerkinGrid(K * step, step, pot.d)
        A = assemble_continuum(pot, dist, grid)
        rs = identify_resonances(A, dist, region, window=window, multiplicity=False)
        found.append(rs.values())
    coarse, fine = found
    if coarse.size == 0:
        return fine, 0.0
    matched = np.array([fine[np.argmin(np.abs(fine - z))] for z in coarse]) if fine.size else coarse
    tol = float(np.max(np.abs(matched - coarse)))
    return matched, tol


def check_reference_consistency(
    oracle_values: Sequence[complex], oracle_tol: float, continuum_values: Sequence[complex], continuum_tol: float,
    slack: float = 1e-9,
) -> float:
    """Largest oracle/continuum mismatch; raises when it exceeds the combined tolerance."""
    cont = np.asarray(continuum_values, dtype=complex)
    worst = 0.0
    for z in oracle_values:
        gap = float(np.min(np.abs(cont - z))) if cont.size else math.inf
        worst = max(worst, gap)
    if worst > oracle_tol + continuum_tol + slack:
        raise ReferenceInconsistencyError(
            f"oracle and continuum references differ by {worst:.3e} "
            f"(declared {oracle_tol:.1e} + {continuum_tol:.1e})"
        )
    return worst


def sweep_eigenvalues(
    pot: PotentialSpec,
    ladder: Sequence[tuple[float, int]],
    moll: MollifierSpec | None = None,
    references: Sequence[float] | None = None,
    reference_info: dict | None = None,
    count: int = 1,
    jobs: int = 1,
    floor: float = 1e-12,
) -> ConvergenceReport:
    """Lowest ``count`` eigenvalues below zero along the ladder at ``theta = 0``."""
    ladder = check_ladder(ladder)
    dist = default_distortion(pot.d)

    def rung(item):
        h, n = item
        grid = LatticeGrid(h, n, d=pot.d)
        A = assemble_lattice(pot, dist, grid, moll)
        herm = 0.5 * (A.entries + A.entries.conj().T)
        vals = np.linalg.eigvalsh(herm)
        return A.provenance, vals[vals < 0][:count], A.hermitian_defect()

    results = _map(rung, ladder, jobs)
    tracks = []
    for j in range(count):
        ref = None if references is None or j >= len(references) else float(references[j])
        tr = Track(f"e{j}", [], reference=None if ref is None else complex(ref))
        for (h, n), (_, vals, _) in zip(ladder, results):
            if j < vals.size:
                err = None if ref is None else abs(float(vals[j]) - ref)
                tr.points.append(TrackPoint(h, n, complex(vals[j]), err, 1))
        tracks.append(_finish_track(tr, floor))
    return ConvergenceReport(
        ladder=[{"h": h, "N": n, "box": h * n, "dxi": 2 * math.pi / (h * n)} for h, n in ladder],
        tracks=tracks,
        reference=reference_info or {"kind": "oracle" if references is not None else "none"},
        provenance={
            "poisson_tail_bounds": [prov.get("poisson_tail_bound") for (prov, _, _) in results],
            "hermitian_defect": [d for (_, _, d) in results],
            "potential": pot.describe(),
            "mollifier": None if moll is None else moll.label,
        },
    )


@dataclass
class NormSweep:
    """Norms measured along a ladder with their fitted rate."""

    quantity: str
    hs: list[float]
    norms: list[float]
    rate: RateFit | None
    companion: list[float] | None = None
    companion_rate: RateFit | None = None
    predicted: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.norms) < 0))

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "h": self.hs,
            "norms": self.norms,
            "rate": None if self.rate is None else self.rate.to_dict(),
            "companion": self.companion,
            "companion_rate": None if self.companion_rate is None else self.companion_rate.to_dict(),
            "predicted": self.predicted,
            "decreasing": self.decreasing,
            "params": self.params,
        }


def _embedding_setup(h: float, n: int, d: int, filt: EmbeddingFilter, cutoff: float | None):
    lattice = LatticeGrid(h, n, d=d)
    reach = filt.support / h if cutoff is None else max(cutoff, filt.support / h)
    target = GalerkinGrid.commensurate(lattice, reach)
    return lattice, target, embedding_matrix(filt, lattice, target)


def measure_kinetic_rate(
    dist: DistortionSpec,
    ladder: Sequence[tuple[float, int]],
    z0: complex = -10.0,
    filt: EmbeddingFilter | None = None,
    jobs: int = 1,
) -> NormSweep:
    """``|I_h (T_{h,theta} - z0)^{-1} I_h^* - (T_theta - z0)^{-1}|`` and the companion
    ``|(1 - I_h I_h^*)(T_theta - z0)^{-1}|`` along the ladder."""
    ladder = check_ladder(ladder)
    if len(ladder) < 3:
        raise ValueError("kinetic rate needs at least three rungs")
    d = dist.d
    filt = filt if filt is not None else EmbeddingFilter(d=d)
    R = dist.field.support_radius

    def rung(item):
        h, n = item
        lattice, target, E = _embedding_setup(h, n, d, filt, R if math.isfinite(R) else None)
        rh = 1.0 / (kinetic_symbol_lattice(dist, h, lattice.momenta()) - z0)
        rc = 1.0 / (kinetic_symbol_continuum(dist, target.momenta()) - z0)
        lat = (E * rh[None, :]) @ E.T
        main = opnorm_difference(lat, np.diag(rc))
        proj = np.eye(target.size) - E @ E.T
        comp = opnorm_difference(proj * rc[None, :], np.zeros((target.size, target.size)))
        return main, comp

    out = _map(rung, ladder, jobs)
    hs = [h for h, _ in ladder]
    norms = [m for m, _ in out]
    comps = [c for _, c in out]
    return NormSweep(
        "kinetic_resolvent_difference",
        hs,
        norms,
        fit_rate(hs, norms),
        comps,
        fit_rate(hs, comps),
        predicted=2.0,
        params={"z0": [complex(z0).real, complex(z0).imag], "distortion": dist.params()},
    )


def predicted_commutator_exponent(pot: PotentialSpec, singular_variant: bool = False) -> float:
    """``(sigma - d)/(sigma - d + 1)``, or ``(p sigma - d)/(p sigma - d + p)`` for the singular variant."""
    s, d, p = pot.sigma, pot.d, pot.p
    if not math.isfinite(s):
        return 1.0
    if singular_variant:
        return (p * s - d) / (p * s - d + p)
    return (s - d) / (s - d + 1)


def measure_potential_commutator(
    pot: PotentialSpec,
    dist: DistortionSpec,
    ladder: Sequence[tuple[float, int]],
    moll: MollifierSpec | None = None,
    singular_variant: bool | None = None,
    filt: EmbeddingFilter | None = None,
    cutoff_factor: float = 3 * math.pi,
    jobs: int = 1,
) -> NormSweep:
    """``|I_h V_{h,theta} - V_theta I_h|`` (or with a ``(T_theta - i)^{-1}`` prefactor) per rung.

    The continuum side lives on a Galerkin box of half-width
    ``cutoff_factor / h`` sharing the torus spacing.
    """
    ladder = check_ladder(ladder)
    if len(ladder) < 3:
        raise ValueError("commutator rate needs at least three rungs")
    d = pot.d
    filt = filt if filt is not None else EmbeddingFilter(d=d)
    if singular_variant is None:
        singular_variant = pot.v_x is None

    def rung(item):
        h, n = item
        lattice, target, E = _embedding_setup(h, n, d, filt, cutoff_factor / h)
        Kl = assemble_lattice(pot, dist, lattice, moll, kinetic=False).entries
        Kc = assemble_continuum(pot, dist, target, kinetic=False).entries
        left, right = E @ Kl, Kc @ E
        if singular_variant:
            pre = 1.0 / (kinetic_symbol_continuum(dist, target.momenta()) - 1j)
            left, right = pre[:, None] * left, pre[:, None] * right
        return opnorm_difference(left, right)

    norms = _map(rung, ladder, jobs)
    hs = [h for h, _ in ladder]
    return NormSweep(
        "resolvent_weighted_commutator" if singular_variant else "potential_commutator",
        hs,
        list(norms),
        fit_rate(hs, norms),
        predicted=predicted_commutator_exponent(pot, singular_variant),
        params={"potential": pot.describe(), "distortion": dist.params(), "mollifier": None if moll is None else moll.label},
    )


@dataclass
class UniformBoundTable:
    hs: list[float]
    ts: list[float]
    table: list[list[float]]
    young_bound: list[float]

    @property
    def max_over_h(self) -> list[float]:
        return [max(row[j] for row in self.table) for j in range(len(self.ts))]

    @property
    def decreasing(self) -> bool:
        m = self.max_over_h
        return bool(all(b < a for a, b in zip(m, m[1:])))

    def to_dict(self) -> dict:
        return {
            "h": self.hs,
            "t": self.ts,
            "table": self.table,
            "max_over_h": self.max_over_h,
            "young_bound": self.young_bound,
            "decreasing": self.decreasing,
        }


def uniform_bound_check(
    pot: PotentialSpec,
    dist: DistortionSpec,
    ladder: Sequence[tuple[float, int]],
    t_ladder: Sequence[float] = (10.0, 100.0, 1000.0),
    moll: MollifierSpec | None = None,
    jobs: int = 1,
) -> UniformBoundTable:
    """``|V_{h,theta} (T_h(Phi) - i t)^{-1}|`` over the ``(h, t)`` table.

    Also returns a Young-inequality bound per ``t`` from the kernel majorant.
    """
    ladder = check_ladder(ladder)
    ts = [float(t) for t in t_ladder]

    def rung(item):
        h, n = item
        grid = LatticeGrid(h, n, d=pot.d)
        K = assemble_lattice(pot, dist, grid, moll, kinetic=False).entries
        sym = kinetic_symbol_lattice(dist, h, grid.momenta())
        row = []
        zero = np.zeros_like(K)
        for t in ts:
            row.append(opnorm_difference(K * (1.0 / (sym - 1j * t))[None, :], zero) if pot.label != "zero" else 0.0)
        return row

    table = _map(rung, ladder, jobs)
    young = []
    if pot.label == "zero":
        young = [0.0 for _ in ts]
    else:
        prof = majorant_check(pot, dist)
        # Jacobian factors enter squared through J^{1/2}(xi) J^{1/2}(eta)
        probe = np.linspace(-4 * max(1.0, dist.field.support_radius), 4 * max(1.0, dist.field.support_radius), 4001)
        jmax = float(np.max(np.abs(jacobian(dist, probe))))
        peak = float(prof.envelope.max())
        dxi_max = max(2 * math.pi / (h * n) for h, n in ladder)
        for t in ts:
            inv = max(
                float(np.max(1.0 / np.abs(kinetic_symbol_lattice(dist, h, LatticeGrid(h, n, pot.d).momenta()) - 1j * t)))
                for h, n in ladder
            )
            young.append((2 * math.pi) ** (-pot.d / 2) * jmax * (prof.l1_norm + 2 * dxi_max * peak) * inv)
    return UniformBoundTable([h for h, _ in ladder], ts, [list(r) for r in table], young)
