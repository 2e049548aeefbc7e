"""Invariant suites run by the ``validate`` scenario.

Each suite returns ``{"name", "status", "metrics"}`` with ``status`` either
``"pass"`` or ``"fail"``.  Sizes are kept small so the whole set runs in
seconds.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from latres.assembly import (
    EmbeddingFilter,
    assemble_continuum,
    assemble_lattice,
    embed_adjoint,
    embed_apply,
    partition_defect,
    position_space_lattice,
)
from latres.distortion import CutoffDilationField, DistortionSpec
from latres.grid import GalerkinGrid, LatticeGrid
from latres.oracle import direct_lattice_sum
from latres.potentials import exponential, gaussian, poisson_sum
from latres.spectra import eigen_all, riesz_multiplicity


def _result(name: str, ok: bool, **metrics) -> dict:
    return {"name": name, "status": "pass" if ok else "fail", "metrics": metrics}


def embedding_isometry(rng: np.random.Generator, samples: int = 20) -> dict:
    worst_norm = worst_round = 0.0
    for d, n in ((1, 256), (2, 32)):
        filt = EmbeddingFilter(d=d)
        for h in (1.0, 0.5, 0.25):
            lat = LatticeGrid(h, n, d)
            tgt = GalerkinGrid.commensurate(lat, filt.support / h)
            u = rng.standard_normal((lat.size, samples)) + 1j * rng.standard_normal((lat.size, samples))
            v = embed_apply(filt, u, lat, tgt)
            back = embed_adjoint(filt, v, lat, tgt)
            worst_norm = max(worst_norm, float(np.max(np.abs(np.linalg.norm(v, axis=0) - np.linalg.norm(u, axis=0)))))
            worst_round = max(worst_round, float(np.max(np.linalg.norm(back - u, axis=0))))
    return _result("embedding_isometry", worst_norm < 1e-10 and worst_round < 1e-10, norm_defect=worst_norm, roundtrip=worst_round)


def partition_identity(rng: np.random.Generator) -> dict:
    worst = 0.0
    for d in (1, 2):
        t = rng.uniform(-2 * math.pi, 2 * math.pi, size=(2000, d))
        worst = max(worst, float(np.max(np.abs(partition_defect(EmbeddingFilter(d=d), t)))))
    return _result("partition_identity", worst < 1e-12, max_defect=worst)


def poisson_identity(rng: np.random.Generator) -> dict:
    worst = 0.0
    for pot in (gaussian(1.0), exponential(1.0)):
        for h in (1.0, 0.5):
            grid = LatticeGrid(h, 64)
            xi = grid.momenta()[:, 0]
            got = poisson_sum(pot, h, xi).values
            ref = direct_lattice_sum(pot, h, xi)
            worst = max(worst, float(np.max(np.abs(got - ref))))
    return _result("poisson_identity", worst < 1e-8, max_difference=worst)


def adjoint_symmetry(rng: np.random.Generator) -> dict:
    pot = gaussian(8.0)
    field = CutoffDilationField(E0=4.0)
    worst = 0.0
    lat = LatticeGrid(0.2, 64)
    gal = GalerkinGrid(16.0, 0.25)
    for theta in (-0.2j, 0.1 - 0.15j):
        a, b = DistortionSpec(field, theta), DistortionSpec(field, np.conj(theta))
        for build, grid in ((assemble_lattice, lat), (assemble_continuum, gal)):
            diff = build(pot, a, grid).entries.conj().T - build(pot, b, grid).entries
            worst = max(worst, float(np.max(np.abs(diff))))
    return _result("adjoint_symmetry", worst < 1e-10, max_entry_defect=worst)


def theta_zero_equivalence(rng: np.random.Generator) -> dict:
    pot = gaussian(-3.0)
    dist = DistortionSpec(CutoffDilationField(E0=4.0), 0j)
    grid = LatticeGrid(0.5, 64)
    A = assemble_lattice(pot, dist, grid)
    ref = np.linalg.eigvalsh(position_space_lattice(pot, grid))
    got = np.sort(eigen_all(A).real)
    gap = float(np.max(np.abs(got - ref)))
    herm = A.hermitian_defect()
    return _result("theta_zero_equivalence", gap < 1e-8 and herm < 1e-10, spectral_gap=gap, hermitian_defect=herm)


def riesz_counting(rng: np.random.Generator, matrices: int = 4) -> dict:
    mismatches = 0
    worst_im = 0.0
    for _ in range(matrices):
        n = int(rng.integers(10, 60))
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        ev = eigen_all(A)
        center = complex(rng.normal(), rng.normal())
        dist = np.sort(np.abs(ev - center))
        k = int(rng.integers(1, n))
        radius = 0.5 * (dist[k - 1] + dist[k])
        m, diag = riesz_multiplicity(A, center, radius, eigenvalues=ev)
        mismatches += int(m != k)
        worst_im = max(worst_im, abs(diag.trace.imag))
    return _result("riesz_counting", mismatches == 0 and worst_im < 1e-6, mismatches=mismatches, max_imag_trace=worst_im)


SUITES: dict[str, Callable[[np.random.Generator], dict]] = {
    "embedding_isometry": embedding_isometry,
    "partition_identity": partition_identity,
    "poisson_identity": poisson_identity,
    "adjoint_symmetry": adjoint_symmetry,
    "theta_zero_equivalence": theta_zero_equivalence,
    "riesz_counting": riesz_counting,
}


def run_suites(seed: int, names: list[str] | None = None) -> list[dict]:
    """Run the named suites (all by default) with one seeded generator each."""
    out = []
    for i, name in enumerate(sorted(SUITES) if names is None else names):
        rng = np.random.default_rng([seed, i])
        out.append(SUITES[name](rng))
    return out
