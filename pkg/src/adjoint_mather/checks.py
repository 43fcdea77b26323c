"""Pass/fail rules applied to result rows.

Everything here works on plain row dicts (as written to and read back from
the CSV tables), so the manifest booleans can be recomputed from the raw
files alone.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Sequence

from .scenarios import Expectations

TOL = {
    "adjointness": 1e-12,
    "resC_po": 1e-10,
    "wk_discrete": 1e-9,
    "support": 1e-6,
    "trace_consistency": 1e-12,
    "resA_identity": 1e-2,
    "conserved": 1e-8,
    "free_hbar": 1e-8,
    "free_u": 1e-8,
    "free_theta": 1e-10,
    "free_trace": 1e-12,
    "free_mather": 1e-10,
    "decay_factor": 4.0,
    "decay_ceiling": 1e-2,
    "plateau_factor": 3.0,
    "bounded_headroom": 10.0,
    "sde_tv": 0.05,
    "sde_z": 3.0,
}


def P_columns(dim: int) -> list[str]:
    return [f"P{i + 1}" for i in range(dim)]


def row_label(row: dict, dim: int) -> str:
    P = ",".join(repr(float(row[c])) for c in P_columns(dim))
    return f"eps={float(row['eps'])!r};P=({P})"


def _le(a, b) -> bool:
    return bool(a <= b)  # nan compares False


def row_checks(row: dict, expect: Expectations, dim: int) -> dict:
    if row["status"] != "ok":
        return {"solved": False}
    g = lambda k: float(row[k])  # noqa: E731
    out = {
        "solved": True,
        "residual": _le(g("residual"), g("tol")),
        "adjointness": _le(g("adjointness"), TOL["adjointness"]),
        "resC_po": _le(g("resC_po"), TOL["resC_po"]),
        "weak_kam_discrete": _le(g("wk_discrete"), TOL["wk_discrete"]),
        "resA_identity": _le(g("resA_identity"), TOL["resA_identity"] * g("resA") + 1e-14),
        "trace_consistency": _le(
            abs(g("trace_mass") - 0.5 * g("eps") ** 2 * g("e2_raw")), TOL["trace_consistency"] * max(1.0, g("trace_mass"))
        ),
        "e2P_bound": _le(g("e2P"), g("e2P_bound") * (1 + 1e-6) + 1e-14),
        "mode_inequality": _le(0.0, g("mode_min_slack")),
    }
    frac = g("support_fraction")
    out["support"] = math.isnan(frac) or frac <= TOL["support"]
    if expect.free_exact:
        P2 = sum(g(c) ** 2 for c in P_columns(dim))
        out["free_hbar"] = _le(abs(g("hbar") - 0.5 * P2), TOL["free_hbar"])
        out["free_u"] = _le(g("u_sup"), TOL["free_u"])
        out["free_theta"] = _le(g("theta_dev"), TOL["free_theta"])
        out["free_trace"] = _le(g("trace_mass"), TOL["free_trace"])
        worst = max(g(k) for k in ("resA", "resB", "resC_po", "resC_po_continuum", "resC_raw"))
        out["free_mather"] = _le(worst, TOL["free_mather"])
    if expect.conserved_sum:
        out["conserved_combination"] = _le(
            abs(g("conserved_combination")), TOL["conserved"] * max(g("trace_mass"), 1e-15)
        )
    if expect.iul == "convex":
        out["iul_nonnegative"] = _le(-1e-14, g("iul0"))
    if expect.iul == "radial":
        out["iul_recipe"] = _le(g("iul_beta_trace") * (1 - 1e-9) - 1e-15, g("iul_recipe"))
    if "sde_tv" in row and not math.isnan(g("sde_tv")):
        out["sde_occupation"] = _le(g("sde_tv"), TOL["sde_tv"])
        out["sde_rotation"] = _le(g("sde_rot_z"), TOL["sde_z"])
        out["sde_drift"] = _le(g("sde_drift_z"), TOL["sde_z"])
        out["sde_variance"] = _le(0.0, g("sde_var_slack"))
    return out


def _decays(first: float, last: float) -> bool:
    return _le(last, TOL["decay_ceiling"]) and _le(last, first / TOL["decay_factor"])


def sweep_checks(rows: Sequence[dict], expect: Expectations, uniformly_convex: bool) -> dict:
    """Checks across an eps-sweep at fixed P; rows are sorted by eps descending."""
    ok = [r for r in rows if r["status"] == "ok"]
    if len(ok) != len(rows):
        return {"complete": False}
    if len(ok) < 2:
        return {}
    col = lambda k: [float(r[k]) for r in ok]  # noqa: E731
    out = {}
    e2 = col("e2")
    out["e2_bounded"] = _le(max(e2), TOL["bounded_headroom"] * e2[0] + 1e-12)
    e3, rhs = col("e3"), col("e3_rhs")
    C = TOL["bounded_headroom"] * e3[0] / rhs[0]
    out["e3_bounded"] = all(_le(a, C * b + 1e-12) for a, b in zip(e3, rhs))
    if uniformly_convex:
        raw = col("e2_raw")
        lo = min(raw)
        out["e2_raw_bounded"] = _le(max(raw), 1e-12) if lo <= 0 else _le(max(raw) / lo, TOL["bounded_headroom"])
    tm = col("trace_mass")
    if expect.dissipation == "vanishing":
        out["dissipation_vanishes"] = _decays(tm[0], tm[-1])
    if expect.dissipation == "persistent":
        f = TOL["plateau_factor"]
        out["dissipation_plateau"] = all(tm[0] / f <= t <= tm[0] * f for t in tm)
        out["dissipation_floor"] = min(tm) >= expect.persistent_floor
        out["decay_absent"] = not _decays(tm[0], tm[-1])
    if expect.mather_decay:
        for k in ("resA", "resB", "resC_raw"):
            v = col(k)
            out[f"{k}_decay"] = _le(TOL["decay_factor"] * v[-1], v[0])
    if expect.iul == "convex":
        out["iul_small"] = _le(col("iul0")[-1], TOL["decay_ceiling"])
    if expect.iul == "radial":
        out["iul_small"] = _le(col("iul_recipe")[-1], TOL["decay_ceiling"])
    return out


def sort_rows(rows: Iterable[dict], dim: int) -> list[dict]:
    cols = P_columns(dim)
    return sorted(rows, key=lambda r: (-float(r["eps"]), tuple(float(r[c]) for c in cols)))


def evaluate(rows: Sequence[dict], expect: Expectations, dim: int, uniformly_convex: bool) -> dict:
    rows = sort_rows(rows, dim)
    per_row = {row_label(r, dim): row_checks(r, expect, dim) for r in rows}
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(float(r[c]) for c in P_columns(dim))].append(r)
    sweep = {}
    for P, grp in sorted(groups.items()):
        res = sweep_checks(grp, expect, uniformly_convex)
        if res:
            sweep["P=(" + ",".join(repr(v) for v in P) + ")"] = res
    failures = [f"{lab}:{k}" for lab, d in per_row.items() for k, v in d.items() if not v]
    failures += [f"{lab}:{k}" for lab, d in sweep.items() for k, v in d.items() if not v]
    return {
        "rows": per_row,
        "sweep": sweep,
        "solver_failures": sum(1 for r in rows if r["status"] != "ok"),
        "failures": failures,
        "all_pass": not failures,
    }
