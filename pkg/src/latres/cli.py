"""Batch command line: ``latres --config run.json --out-dir out``.

Exit codes: 0 success, 1 configuration error, 2 failed assertion, 3 numerical
non-convergence.  Reports are written with sorted keys and no timestamps so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Literal

import numpy as np
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

import latres
from latres import limits, oracle
from latres.assembly import assemble_lattice
from latres.distortion import DistortionSpec, InadmissibleDistortion, ResonanceRegion, make_field
from latres.grid import LatticeGrid
from latres.potentials import (
    PoissonConvergenceError,
    QuadratureBudgetError,
    make_mollifier,
    make_potential,
)
from latres.spectra import (
    EigenSolverError,
    MultiplicityError,
    NormIterationError,
    identify_resonances,
)
from latres.suites import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_NONCONVERGED = 0, 1, 2, 3
CSV_COLUMNS = ["track_id", "h", "N", "re_z", "im_z", "abs_err", "multiplicity"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialConfig(_Strict):
    label: str = "gaussian"
    params: dict[str, int | float] = Field(default_factory=lambda: {"c": 8.0})


class MollifierConfig(_Strict):
    label: str = "gaussian"
    params: dict[str, int | float] = Field(default_factory=dict)


class DistortionConfig(_Strict):
    field: Literal["cutoff-dilation", "lattice-sine"] = "cutoff-dilation"
    theta: tuple[float, float] = (0.0, -0.25)
    E0: float = 16.0


class LadderConfig(_Strict):
    h: list[float] = Field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    box: float | None = 102.4
    N: list[int] | None = None

    def rungs(self) -> list[tuple[float, int]]:
        if self.N is not None:
            if len(self.N) != len(self.h):
                raise ValueError("ladder h and N lists differ in length")
            return [(float(h), int(n)) for h, n in zip(self.h, self.N)]
        if self.box is None:
            raise ValueError("ladder needs either N or box")
        return limits.fixed_box_ladder(self.h, self.box)


class RegionConfig(_Strict):
    delta0: float | None = None
    c0: float | None = None


class Tolerances(_Strict):
    eps_factor: float = 5.0
    tol_theta: float = 1e-4
    tol_cluster: float | None = None
    gamma_factor: float = 0.1
    disk_radius: float = 0.5
    riesz_nodes: int = 32
    window_abs: float = 30.0
    rate_floor: float = 1e-12


class ReferenceConfig(_Strict):
    kind: Literal["oracle", "continuum", "none"] = "oracle"
    alpha: float = 0.25
    box: float = 60.0
    M: int = 6000
    levels: int = 3
    count: int = 1
    scales: list[float] = Field(default_factory=lambda: [0.04, 0.02, 0.01])
    cutoff: float = 16.0
    dxi: float = 0.0625


class RatesConfig(_Strict):
    quantities: list[Literal["kinetic", "commutator", "uniform"]] = Field(
        default_factory=lambda: ["kinetic", "commutator", "uniform"]
    )
    z0: tuple[float, float] = (-10.0, 0.0)
    t: list[float] = Field(default_factory=lambda: [10.0, 100.0, 1000.0])


class OracleConfig(_Strict):
    method: Literal["complex_scaling", "bound_states", "mollifier_refined"] = "complex_scaling"
    alpha: float = 0.25
    box: float = 60.0
    M: int = 6000
    levels: int = 3
    scales: list[float] = Field(default_factory=lambda: [0.04, 0.02, 0.01])


class RunConfig(_Strict):
    scenario: Literal[
        "compute-resonances", "sweep-resonances", "sweep-eigenvalues", "rates", "validate", "oracle"
    ]
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    mollifier: MollifierConfig | None = None
    distortion: DistortionConfig = Field(default_factory=DistortionConfig)
    ladder: LadderConfig = Field(default_factory=LadderConfig)
    region: RegionConfig = Field(default_factory=RegionConfig)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    probe_theta: tuple[float, float] | None = None
    reference: ReferenceConfig = Field(default_factory=ReferenceConfig)
    rates: RatesConfig = Field(default_factory=RatesConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    suites: list[str] | None = None
    cache_dir: str | None = None
    report_name: str = "report.json"
    csv_name: str = "tracks.csv"

    @field_validator("suites")
    @classmethod
    def _known_suites(cls, v):
        if v is not None:
            unknown = sorted(set(v) - set(SUITES))
            if unknown:
                raise ValueError(f"unknown suites {unknown}")
        return v


class ConfigError(ValueError):
    pass


class AssertionFailure(RuntimeError):
    pass


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# scenario helpers -------------------------------------------------------------


def _build(cfg: RunConfig):
    try:
        pot = make_potential(cfg.potential.label, **cfg.potential.params)
        moll = None if cfg.mollifier is None else make_mollifier(cfg.mollifier.label, **cfg.mollifier.params)
        dc = cfg.distortion
        params = {"E0": dc.E0, "d": pot.d} if dc.field == "cutoff-dilation" else {"d": pot.d}
        if dc.field == "lattice-sine":
            params["h"] = cfg.ladder.h[0]
        field = make_field(dc.field, **params)
        dist = DistortionSpec(field, complex(*dc.theta))
        ladder = limits.check_ladder(cfg.ladder.rungs())
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    region = ResonanceRegion(
        cfg.region.delta0 if cfg.region.delta0 is not None else pot.delta0,
        cfg.region.c0 if cfg.region.c0 is not None else pot.c0,
    )
    dist.require_admissible(region.c0, region.delta0)
    return pot, moll, dist, ladder, region


def _window(cfg: RunConfig):
    cap = cfg.tolerances.window_abs
    return lambda z: np.abs(z) < cap


def _cache_dir(cfg: RunConfig):
    return None if cfg.cache_dir is None else Path(cfg.cache_dir)


def _oracle_resonances(cfg: RunConfig, pot) -> oracle.OracleResult:
    ref = cfg.reference
    payload = {"pot": pot.describe(), "alpha": ref.alpha, "box": ref.box, "M": ref.M, "levels": ref.levels}
    return oracle.cached(
        "complex_scaling",
        payload,
        lambda: oracle.resonances_1d_complex_scaling(pot, ref.alpha, ref.box, ref.M, levels=ref.levels),
        _cache_dir(cfg),
    )


def _oracle_bound_states(cfg: RunConfig, pot, moll) -> oracle.OracleResult:
    ref = cfg.reference
    if pot.v_x is None:
        if moll is None or moll.phi_x is None:
            raise ConfigError("singular potential needs a position-space mollifier for its reference")
        payload = {"pot": pot.describe(), "moll": moll.label, "scales": ref.scales, "box": ref.box, "M": ref.M}
        return oracle.cached(
            "mollifier_refined",
            payload,
            lambda: oracle.mollifier_refined_ground_state(pot, moll, ref.scales, box=ref.box, M=ref.M, levels=ref.levels),
            _cache_dir(cfg),
        )
    payload = {"pot": pot.describe(), "box": ref.box, "M": ref.M, "levels": ref.levels}
    return oracle.cached(
        "bound_states",
        payload,
        lambda: oracle.bound_states_1d(pot, box=ref.box, M=ref.M, levels=ref.levels),
        _cache_dir(cfg),
    )


def _suite(name: str, ok: bool, **metrics) -> dict:
    return {"name": name, "status": "pass" if ok else "fail", "metrics": metrics}


def scenario_compute(cfg: RunConfig) -> dict:
    pot, moll, dist, ladder, region = _build(cfg)
    h, n = ladder[0]
    A = assemble_lattice(pot, dist, LatticeGrid(h, n, pot.d), moll)
    tol = cfg.tolerances
    probe = None if cfg.probe_theta is None else complex(*cfg.probe_theta)
    rs = identify_resonances(
        A, dist, region, stability_probe=probe, window=_window(cfg), eps_factor=tol.eps_factor,
        tol_theta=tol.tol_theta, tol_cluster=tol.tol_cluster, Q=tol.riesz_nodes,
    )
    tracks = [
        {"id": f"r{j}", "points": [{"h": h, "N": n, "re": it.z.real, "im": it.z.imag, "err": None,
                                    "multiplicity": it.multiplicity}],
         "rate": None, "residual": None, "boundary": it.boundary}
        for j, it in enumerate(rs.items)
    ]
    return {
        "suites": [_suite("identify_resonances", True, count=len(rs.items))],
        "tracks": tracks,
        "extra": {"resonances": rs.to_dict()},
        "poisson_tail_bounds": [A.provenance["poisson_tail_bound"]],
    }


def scenario_sweep_resonances(cfg: RunConfig) -> dict:
    pot, moll, dist, ladder, region = _build(cfg)
    if len(ladder) < 3:
        raise ConfigError("sweep needs at least three rungs")
    tol, ref = cfg.tolerances, cfg.reference
    refs, info, suites = None, {"kind": ref.kind}, []
    if ref.kind in ("oracle", "continuum"):
        cont, cont_tol = limits.continuum_resonances(pot, dist, ref.cutoff, ref.dxi, region, _window(cfg))
        if ref.kind == "oracle":
            orc = _oracle_resonances(cfg, pot)
            refs = [complex(v) for v in orc.values][: ref.count]
            worst = limits.check_reference_consistency(refs, orc.declared_tolerance, cont, cont_tol)
            info.update(oracle=orc.to_dict(), continuum_tolerance=cont_tol, consistency_gap=worst)
        else:
            refs = sorted(cont, key=lambda z: z.real)[: ref.count]
            info.update(continuum_tolerance=cont_tol)
        suites.append(_suite("reference_consistency", True, **({"gap": info.get("consistency_gap", 0.0)})))
    probe = None if cfg.probe_theta is None else complex(*cfg.probe_theta)
    rep = limits.sweep_resonances(
        pot, dist, ladder, moll, region, references=refs, reference_info=info, window=_window(cfg),
        gamma_factor=tol.gamma_factor, eps_factor=tol.eps_factor, disk_radius=tol.disk_radius, probe=probe,
        jobs=cfg_jobs(cfg), floor=tol.rate_floor,
    )
    for t in rep.tracks:
        suites.append(_suite(f"track_{t.track_id}", bool(t.monotone) and not t.ambiguous,
                             monotone=t.monotone, ambiguous=t.ambiguous, rate=None if t.rate is None else t.rate.slope))
    return {
        "suites": suites,
        "tracks": [t.to_dict() for t in rep.tracks],
        "csv": rep.csv_rows(),
        "extra": {"report": rep.to_dict()},
        "poisson_tail_bounds": rep.provenance["poisson_tail_bounds"],
    }


def scenario_sweep_eigenvalues(cfg: RunConfig) -> dict:
    pot, moll, _, ladder, _ = _build(cfg)
    if len(ladder) < 3:
        raise ConfigError("sweep needs at least three rungs")
    refs, info = None, {"kind": cfg.reference.kind}
    if cfg.reference.kind == "oracle":
        orc = _oracle_bound_states(cfg, pot, moll)
        refs = [float(v) for v in orc.values][: cfg.reference.count]
        info["oracle"] = orc.to_dict()
    rep = limits.sweep_eigenvalues(
        pot, ladder, moll, references=refs, reference_info=info, count=cfg.reference.count,
        jobs=cfg_jobs(cfg), floor=cfg.tolerances.rate_floor,
    )
    suites = [
        _suite(f"track_{t.track_id}", t.monotone is not False, monotone=t.monotone,
               rate=None if t.rate is None else t.rate.slope)
        for t in rep.tracks
    ]
    return {
        "suites": suites,
        "tracks": [t.to_dict() for t in rep.tracks],
        "csv": rep.csv_rows(),
        "extra": {"report": rep.to_dict()},
        "poisson_tail_bounds": rep.provenance["poisson_tail_bounds"],
    }


def scenario_rates(cfg: RunConfig) -> dict:
    pot, moll, dist, ladder, _ = _build(cfg)
    if len(ladder) < 3:
        raise ConfigError("rate measurement needs at least three rungs")
    suites, extra = [], {}
    if "kinetic" in cfg.rates.quantities:
        k = limits.measure_kinetic_rate(dist, ladder, complex(*cfg.rates.z0), jobs=cfg_jobs(cfg))
        extra["kinetic"] = k.to_dict()
        suites.append(_suite("kinetic_rate", True, slope=k.rate.slope, companion_slope=k.companion_rate.slope))
    if "commutator" in cfg.rates.quantities:
        c = limits.measure_potential_commutator(pot, dist, ladder, moll, jobs=cfg_jobs(cfg))
        extra["commutator"] = c.to_dict()
        suites.append(_suite("potential_commutator", c.decreasing, slope=c.rate.slope, predicted=c.predicted))
    if "uniform" in cfg.rates.quantities:
        u = limits.uniform_bound_check(pot, dist, ladder, cfg.rates.t, moll, jobs=cfg_jobs(cfg))
        extra["uniform"] = u.to_dict()
        suites.append(_suite("uniform_bound", u.decreasing, max_over_h=u.max_over_h))
    return {"suites": suites, "tracks": [], "extra": extra, "poisson_tail_bounds": []}


def scenario_validate(cfg: RunConfig) -> dict:
    suites = run_suites(cfg_seed(cfg), cfg.suites)
    return {"suites": suites, "tracks": [], "extra": {}, "poisson_tail_bounds": []}


def scenario_oracle(cfg: RunConfig) -> dict:
    pot, moll, *_ = _build(cfg)
    oc = cfg.oracle
    payload = {"pot": pot.describe(), "moll": None if moll is None else moll.label, "alpha": oc.alpha,
               "box": oc.box, "M": oc.M, "levels": oc.levels, "scales": oc.scales}
    if oc.method == "complex_scaling":
        compute = lambda: oracle.resonances_1d_complex_scaling(pot, oc.alpha, oc.box, oc.M, levels=oc.levels)
    elif oc.method == "bound_states":
        compute = lambda: oracle.bound_states_1d(pot, moll, box=oc.box, M=oc.M, levels=oc.levels)
    else:
        if moll is None:
            raise ConfigError("mollifier_refined oracle needs a mollifier")
        compute = lambda: oracle.mollifier_refined_ground_state(
            pot, moll, oc.scales, box=oc.box, M=oc.M, levels=oc.levels
        )
    res = oracle.cached(oc.method, payload, compute, _cache_dir(cfg))
    return {
        "suites": [_suite("oracle", math.isfinite(res.declared_tolerance), declared_tolerance=res.declared_tolerance)],
        "tracks": [],
        "extra": {"oracle": res.to_dict()},
        "poisson_tail_bounds": [],
    }


SCENARIOS = {
    "compute-resonances": scenario_compute,
    "sweep-resonances": scenario_sweep_resonances,
    "sweep-eigenvalues": scenario_sweep_eigenvalues,
    "rates": scenario_rates,
    "validate": scenario_validate,
    "oracle": scenario_oracle,
}

_RUNTIME = {"jobs": 1, "seed": 0}


def cfg_jobs(cfg: RunConfig) -> int:
    return _RUNTIME["jobs"]


def cfg_seed(cfg: RunConfig) -> int:
    return _RUNTIME["seed"]


# output ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: complex -> [re, im], non-finite floats -> None, numpy scalars -> Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def render_report(cfg: RunConfig, result: dict, seed: int) -> str:
    report = {
        "config": cfg.model_dump(mode="json"),
        "suites": result["suites"],
        "tracks": result["tracks"],
        "provenance": {
            "versions": {"latres": latres.__version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "tolerances": cfg.tolerances.model_dump(mode="json"),
            "poisson_tail_bounds": result.get("poisson_tail_bounds", []),
            "seed": seed,
        },
        "details": result.get("extra", {}),
    }
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def run(cfg: RunConfig, out_dir: Path, jobs: int = 1, seed: int = 0) -> int:
    """Execute a validated config and write the report; returns the exit status."""
    _RUNTIME.update(jobs=max(1, int(jobs)), seed=int(seed))
    try:
        result = SCENARIOS[cfg.scenario](cfg)
    except (ConfigError, InadmissibleDistortion) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except limits.ReferenceInconsistencyError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (PoissonConvergenceError, QuadratureBudgetError, EigenSolverError, MultiplicityError,
            NormIterationError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / cfg.report_name).write_text(render_report(cfg, result, seed))
    (out_dir / cfg.csv_name).write_text(render_csv(result.get("csv", [])))
    failed = [s["name"] for s in result["suites"] if s["status"] != "pass"]
    if failed:
        print(f"failed suites: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="latres", description="Lattice resonance continuum-limit toolkit")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out-dir", default="latres-out", help="directory for report.json and tracks.csv")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for independent rungs")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized suites")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, Path(args.out_dir), args.jobs, args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
