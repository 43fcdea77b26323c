"""Run configuration: TOML file -> validated RunConfig.

Example::

    scenario = "pendulum"
    epsilons = [0.4, 0.2, 0.1]
    P = [2.0]
    resolution = [1024]
    seed = 0
    output = "runs/pendulum"

    [solver]
    tol = 1e-10

    [sde]
    enabled = true
    steps = 625000

Omitted keys fall back to the scenario defaults. ``scenario = "custom"``
requires a ``[model]`` table and applies no scenario-specific checks.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cell_solver import SolverOptions
from .errors import ConfigError
from .scenarios import Expectations, build_model, get_scenario

TOP_KEYS = {"scenario", "model", "resolution", "epsilons", "P", "solver", "sde", "output", "seed"}
SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverOptions)}


@dataclass(frozen=True)
class SdeSettings:
    enabled: bool = False
    dt: Optional[float] = None
    steps: int = 625_000
    replicates: int = 16
    batches: int = 10
    hist_bins: int = 64
    refine: int = 4


SDE_KEYS = {f.name for f in dataclasses.fields(SdeSettings)}


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    model: dict
    resolution: tuple
    epsilons: tuple
    P: object
    solver: dict = field(default_factory=dict)
    sde: SdeSettings = field(default_factory=SdeSettings)
    output: str = "runs"
    seed: int = 0

    @property
    def expectations(self) -> Expectations:
        return Expectations() if self.scenario == "custom" else get_scenario(self.scenario).expect

    @property
    def solver_options(self) -> SolverOptions:
        return SolverOptions(**self.solver)

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario,
            "model": self.model,
            "resolution": list(self.resolution),
            "epsilons": list(self.epsilons),
            "P": self.P,
            "solver": dict(self.solver),
            "sde": {k: v for k, v in dataclasses.asdict(self.sde).items() if v is not None},
            "output": self.output,
            "seed": self.seed,
        }
        return d


def _positive_int(v, where):
    if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
        raise ConfigError(f"{where} must be a positive integer")
    return v


def parse_config(raw: dict) -> RunConfig:
    """Validate a config mapping; nothing is solved here."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "scenario" not in raw:
        raise ConfigError("config needs a scenario (or \"custom\" with a [model] table)")
    name = raw["scenario"]
    if name == "custom":
        if "model" not in raw:
            raise ConfigError('scenario "custom" needs a [model] table')
        base = None
    else:
        base = get_scenario(name)
    model = raw.get("model", base.model if base else None)
    built = build_model(model)  # validates the model spec

    eps = raw.get("epsilons", list(base.epsilons) if base else None)
    if eps is None:
        raise ConfigError("epsilons missing")
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilons must be a nonempty list")
    for e in eps:
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not math.isfinite(e) or e <= 0:
            raise ConfigError("epsilon must be positive")
    if len(set(eps)) != len(eps):
        raise ConfigError("epsilons contain duplicates")

    res = raw.get("resolution", list(base.resolution) if base else None)
    if res is None:
        raise ConfigError("resolution missing")
    res = [res] if isinstance(res, int) else res
    if len(res) == 1 and built.dim > 1:
        res = res * built.dim
    res = tuple(_positive_int(n, "resolution") for n in res)
    if len(res) != built.dim or min(res) < 8:
        raise ConfigError(f"resolution needs {built.dim} entries of at least 8")

    P = raw.get("P", base.P if base else None)
    if P is None:
        raise ConfigError("P missing")
    if isinstance(P, list) and not P:
        raise ConfigError("P list is empty")

    solver = dict(raw.get("solver", {}))
    bad = set(solver) - SOLVER_KEYS
    if bad:
        raise ConfigError(f"unknown solver keys: {sorted(bad)}")
    if solver.get("advection", "auto") not in ("auto", "central", "upwind"):
        raise ConfigError("solver.advection must be auto, central or upwind")

    sde_raw = dict(raw.get("sde", {}))
    bad = set(sde_raw) - SDE_KEYS
    if bad:
        raise ConfigError(f"unknown sde keys: {sorted(bad)}")
    for k in ("steps", "replicates", "batches", "hist_bins", "refine"):
        if k in sde_raw:
            _positive_int(sde_raw[k], f"sde.{k}")
    if "dt" in sde_raw and not (isinstance(sde_raw["dt"], (int, float)) and sde_raw["dt"] > 0):
        raise ConfigError("sde.dt must be positive")
    sde = SdeSettings(**sde_raw)
    if sde.enabled and any(n % sde.hist_bins for n in res):
        raise ConfigError("sde.hist_bins must divide the resolution")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    output = raw.get("output", f"runs/{name}")
    if not isinstance(output, str):
        raise ConfigError("output must be a path string")
    return RunConfig(
        scenario=name,
        model=model,
        resolution=res,
        epsilons=tuple(float(e) for e in eps),
        P=P,
        solver=solver,
        sde=sde,
        output=output,
        seed=seed,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw)
