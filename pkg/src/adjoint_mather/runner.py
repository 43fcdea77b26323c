"""Scenario runner: per-(eps, P) jobs, CSV tables and the run manifest.

Each job solves from scratch, so results do not depend on which worker ran
it or in which order jobs finished. Tables are sorted by eps descending,
then P lexicographically.
"""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks
from .adjoint import (
    adjointness_defect,
    dissipation_field,
    iul_functional,
    iul_weighted_trace,
    mather_checks,
    radial_recipe,
    stationary_adjoint,
    support_diagnostics,
    weak_kam_identity_check,
)
from .artifacts import write_csv, write_json
from .cell_solver import CellProblemSpec, dP_u, solve_cell
from .config import RunConfig
from .errors import AmbiguousDensity, AssemblyError, NoConvergence
from .estimates import averaging_mode_defect, energy_report, mode_family
from .grid import TorusGrid
from .scenarios import build_model, resolve_P
from .sde import SimConfig, drift_check_X, occupation_tv, rotation_number_mc, simulate

log = logging.getLogger(__name__)

WORKERS_ENV = "ADJOINT_MATHER_WORKERS"
N_RANDOM_FIELDS = 20

BASE_COLUMNS = [
    "status", "method", "advection", "iterations", "tol", "residual", "hbar", "lipschitz", "u_sup",
    "theta_dev", "spectral_gap", "adjoint_residual", "adjointness", "trace_mass",
    "resA", "resA_identity", "resB", "resC_po", "resC_po_continuum", "resC_raw",
    "wk_discrete", "wk_continuum", "wk_limit", "iul0", "iul_lam", "iul_recipe", "iul_beta_trace",
    "support_fraction", "support_level", "conserved_combination",
    "e2", "e2_raw", "e2P", "e2P_bound", "e3", "e3_rhs", "mode_max_lhs", "mode_min_slack",
    "dPhbar_norm", "dPu_identity",
]
SDE_COLUMNS = [
    "sde_dt", "sde_tv", "sde_rot_mc", "sde_rot_stderr", "sde_rot_adjoint", "sde_rot_z",
    "sde_drift_z", "sde_variance", "sde_variance_exact", "sde_variance_bound", "sde_var_slack",
]


def row_columns(dim: int, sde: bool) -> list[str]:
    return ["scenario", "eps"] + checks.P_columns(dim) + ["N"] + BASE_COLUMNS + (SDE_COLUMNS if sde else [])


@dataclass
class JobResult:
    index: tuple
    row: dict
    modes: list = field(default_factory=list)
    weak_kam: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    error: Optional[str] = None


def job_seed(seed: int, index: tuple) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *index])


def run_job(cfg: RunConfig, eps: float, P: tuple, index: tuple) -> JobResult:
    """solve -> theta -> mu, m -> checks -> estimates -> (optional) SDE, for one (eps, P)."""
    model = build_model(cfg.model)
    grid = TorusGrid(cfg.resolution)
    n = grid.dim
    row = {"scenario": cfg.scenario, "eps": float(eps), "N": int(cfg.resolution[0])}
    row.update({c: float(v) for c, v in zip(checks.P_columns(n), P)})
    res = JobResult(index=index, row=row)
    clock = time.perf_counter
    t0 = clock()
    spec = CellProblemSpec(model, P, eps, grid, cfg.solver_options)
    row["tol"] = spec.options.tolerance(n)
    try:
        sol = solve_cell(spec)
    except NoConvergence as exc:
        row.update(status="solver-failure", residual=float(exc.residual), iterations=int(exc.iterations))
        res.error = f"solve: {exc}"
        return res
    res.timings["solve"] = clock() - t0
    row.update(
        method=sol.method, advection=sol.advection, iterations=sol.iterations, residual=sol.residual_inf,
        hbar=sol.hbar, lipschitz=sol.lipschitz, u_sup=float(np.abs(sol.u).max()),
    )

    t0 = clock()
    try:
        dens = stationary_adjoint(sol)
        m = dissipation_field(sol, dens)
    except (AmbiguousDensity, AssemblyError) as exc:
        row["status"] = "adjoint-failure"
        res.error = f"adjoint: {exc}"
        return res
    res.timings["adjoint"] = clock() - t0
    rng = np.random.default_rng(job_seed(cfg.seed, index))
    fields = [rng.standard_normal(grid.shape) for _ in range(N_RANDOM_FIELDS)]
    row.update(
        theta_dev=float(np.abs(dens.theta - 1.0).max()), spectral_gap=dens.spectral_gap,
        adjoint_residual=dens.adjoint_residual, adjointness=adjointness_defect(dens, fields),
        trace_mass=m.trace_mass,
    )

    t0 = clock()
    rep = mather_checks(sol, dens)
    row.update(dataclasses.asdict(rep))
    wk = weak_kam_identity_check(sol, dens, m)
    res.weak_kam = [dict(row_key(row, n), function=w.name, discrete=w.discrete, continuum=w.continuum,
                         limit_form=w.limit_form) for w in wk]
    row.update(
        wk_discrete=max(w.discrete for w in wk), wk_continuum=max(w.continuum for w in wk),
        wk_limit=max(w.limit_form for w in wk), iul0=iul_functional(sol, m, 0.0).value,
    )
    if model.name == "radial":
        M = float(np.sqrt(np.sum(sol.p**2, axis=0)).max())
        rec = radial_recipe(model.params["profile"], max(M, 1e-3))
        row.update(
            iul_lam=rec.lam, iul_recipe=iul_functional(sol, m, rec.lam).value,
            iul_beta_trace=rec.beta * iul_weighted_trace(sol, m, rec.lam).value,
        )
    sup = support_diagnostics(sol, m)
    row.update(support_fraction=sup.fraction_outside, support_level=sup.level)
    if n == 2:
        I = m.integrated()
        row["conserved_combination"] = float(I[0, 0] - 2 * I[0, 1] + I[1, 1])
    res.timings["checks"] = clock() - t0

    t0 = clock()
    dpu = dP_u(spec, base=sol)
    er = energy_report(sol, dens, dpu)
    row.update(
        e2=er.e2, e2_raw=er.e2_raw, e2P=er.e2P, e2P_bound=er.e2P_bound, e3=float(er.e3.max()),
        e3_rhs=er.e3_rhs, dPhbar_norm=float(np.linalg.norm(dpu.dPhbar)), dPu_identity=dpu.identity_residual,
    )
    defects = [averaging_mode_defect(sol, dpu, dens, k) for k in mode_family(n)]
    res.modes = [dict(row_key(row, n), k="x".join(map(str, d.k)), lhs=d.lhs, rhs=d.rhs, slack=d.slack)
                 for d in defects]
    row.update(mode_max_lhs=max(d.lhs for d in defects), mode_min_slack=min(d.slack for d in defects))
    res.timings["estimates"] = clock() - t0

    if cfg.sde.enabled:
        t0 = clock()
        s = cfg.sde
        sim = SimConfig(dt=s.dt, steps=s.steps, replicates=s.replicates, batches=s.batches,
                        hist_bins=s.hist_bins, refine=s.refine,
                        seed=int(job_seed(cfg.seed, index).generate_state(1)[0]))
        report = simulate(sol, sim)
        rot = rotation_number_mc(sol, sim, dens, report)
        drift = drift_check_X(sol, dpu, sim, dens, report)
        row.update(
            sde_dt=report.dt, sde_tv=occupation_tv(report, dens), sde_rot_mc=float(rot.mc[0]),
            sde_rot_stderr=float(rot.stderr[0]), sde_rot_adjoint=float(rot.adjoint[0]),
            sde_rot_z=float(rot.z_scores.max()), sde_drift_z=float(drift.z_scores.max()),
            sde_variance=drift.variance, sde_variance_exact=drift.variance_exact,
            sde_variance_bound=drift.bound, sde_var_slack=drift.slack,
        )
        res.timings["sde"] = clock() - t0
    row["status"] = "ok"
    return res


def row_key(row: dict, dim: int) -> dict:
    return {k: row[k] for k in ["eps"] + checks.P_columns(dim)}


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, env)
    return max(1, min(4, os.cpu_count() or 1))


def package_version() -> str:
    try:
        return metadata.version("adjoint-mather")
    except metadata.PackageNotFoundError:
        return "unknown"


def execute(cfg: RunConfig, output: Optional[Path] = None, workers: int = 1) -> dict:
    """Run every (eps, P) job, write rows.csv, modes.csv, weak_kam.csv and manifest.json.

    Returns the manifest dict (with ``exit_code``).
    """
    out = Path(output if output is not None else cfg.output)
    started = time.perf_counter()
    model = build_model(cfg.model)
    n = model.dim
    P_list = resolve_P(model, cfg.P)
    jobs = [((i, j), e, P) for i, e in enumerate(cfg.epsilons) for j, P in enumerate(P_list)]
    results = []
    if workers > 1 and len(jobs) > 1:
        with cf.ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futs = [pool.submit(run_job, cfg, e, P, idx) for idx, e, P in jobs]
            for fut in cf.as_completed(futs):
                results.append(fut.result())
    else:
        results = [run_job(cfg, e, P, idx) for idx, e, P in jobs]

    order = {id(r): (-r.row["eps"], tuple(r.row[c] for c in checks.P_columns(n))) for r in results}
    results.sort(key=lambda r: order[id(r)])
    rows = [r.row for r in results]
    modes = [m for r in results for m in r.modes]
    wk = [w for r in results for w in r.weak_kam]
    key_cols = ["eps"] + checks.P_columns(n)
    files = {"rows": "rows.csv", "modes": "modes.csv", "weak_kam": "weak_kam.csv"}
    write_csv(out / files["rows"], row_columns(n, cfg.sde.enabled), rows)
    write_csv(out / files["modes"], key_cols + ["k", "lhs", "rhs", "slack"], modes)
    write_csv(out / files["weak_kam"], key_cols + ["function", "discrete", "continuum", "limit_form"], wk)

    uc = model.convexity_class == "uniformly-convex"
    verdict = checks.evaluate(rows, cfg.expectations, n, uc)
    if verdict["solver_failures"]:
        code = 3
    elif not verdict["all_pass"]:
        code = 2
    else:
        code = 0
    manifest = {
        "format": 1,
        "package_version": package_version(),
        "config": cfg.to_dict(),
        "dim": n,
        "uniformly_convex": uc,
        "P_resolved": [list(P) for P in P_list],
        "files": files,
        "timings": {
            "total": time.perf_counter() - started,
            "jobs": [dict(row_key(r.row, n), **r.timings) for r in results],
        },
        "errors": [dict(row_key(r.row, n), error=r.error) for r in results if r.error],
        "checks": {"rows": verdict["rows"], "sweep": verdict["sweep"]},
        "failures": verdict["failures"],
        "exit_code": code,
    }
    write_json(out / "manifest.json", manifest)
    return manifest
