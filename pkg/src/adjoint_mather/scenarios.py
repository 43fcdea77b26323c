"""Built-in scenario catalog and the model-spec builder used by run configs.

A model spec is a plain dict (as read from the config file)::

    {"kind": "mechanical", "potential": {"kind": "cosine", "coefficients": [1.0]}}

Potentials are ``{"kind", "coefficients"}`` dicts (see ``PotentialSpec``);
profiles are polynomial coefficient lists, lowest degree first.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .hamiltonians import (
    HamiltonianModel,
    PotentialSpec,
    Profile,
    make_1d_nonconvex,
    make_conserved_sum,
    make_counterexample,
    make_mechanical,
    make_nonuniqueness,
    make_quasiconvex_square,
    make_radial,
    rightward_branch,
)

SWEEP = (0.4, 0.2, 0.1, 0.05, 0.025)
RADIAL_PROFILE = [0.0, 0.0, 0.5, -1.9 / 3, 0.25]

_MODEL_KEYS = {
    "mechanical": {"potential", "dim"},
    "quasiconvex-square": {"potential", "dim"},
    "radial": {"profile", "potential", "dim", "s_max"},
    "onedim-nonconvex": {"profile", "potential"},
    "nonuniqueness": {"psi", "dim"},
    "conserved-sum": {"profiles", "potential"},
    "counterexample": {"shift", "well", "radius", "tilt", "level"},
}


def model_kinds() -> list[str]:
    return sorted(_MODEL_KEYS)


def _potential(d, dim: int, where: str) -> PotentialSpec:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a table with kind and coefficients")
    extra = set(d) - {"kind", "coefficients"}
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    try:
        return PotentialSpec(d["kind"], d.get("coefficients", [0.0]), dim)
    except KeyError:
        raise ConfigError(f"{where} needs a kind") from None
    except Exception as exc:  # InvalidArgument and shape errors from the spec
        raise ConfigError(f"{where}: {exc}") from exc


def build_model(spec: dict) -> HamiltonianModel:
    """Turn a model-spec dict into a HamiltonianModel."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("model spec needs a kind")
    kind = spec["kind"]
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {model_kinds()}")
    extra = set(spec) - _MODEL_KEYS[kind] - {"kind"}
    if extra:
        raise ConfigError(f"unknown keys for model {kind!r}: {sorted(extra)}")
    dim = int(spec.get("dim", 1))
    if dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2")
    try:
        if kind == "mechanical":
            return make_mechanical(_potential(spec.get("potential", {"kind": "constant"}), dim, "potential"))
        if kind == "quasiconvex-square":
            return make_quasiconvex_square(_potential(spec["potential"], dim, "potential"))
        if kind == "radial":
            V = _potential(spec.get("potential", {"kind": "constant"}), dim, "potential")
            return make_radial(Profile(spec["profile"]), V, float(spec.get("s_max", 4.0)))
        if kind == "onedim-nonconvex":
            return make_1d_nonconvex(Profile(spec["profile"]), _potential(spec["potential"], 1, "potential"))
        if kind == "nonuniqueness":
            return make_nonuniqueness(_potential(spec["psi"], dim, "psi"))
        if kind == "conserved-sum":
            profiles = [Profile(c) for c in spec["profiles"]]
            return make_conserved_sum(profiles, _potential(spec["potential"], 1, "potential"))
        return make_counterexample(
            _potential(spec["shift"], 1, "shift"),
            _potential(spec["well"], 1, "well"),
            radius=float(spec.get("radius", 1.0)),
            tilt=float(spec.get("tilt", 0.0)),
            level=float(spec.get("level", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"model {kind!r} is missing {exc.args[0]!r}") from None


def resolve_P(model: HamiltonianModel, P) -> list[tuple]:
    """P list from config: numbers, vectors, or the keyword "branch" (mean of
    the rightward level-set selection, counterexample models only)."""
    if isinstance(P, str):
        if P != "branch":
            raise ConfigError(f"unknown P keyword {P!r}")
        if model.name != "counterexample":
            raise ConfigError('P = "branch" needs a counterexample model')
        _, g, _ = rightward_branch(model)
        return [(float(np.mean(g)),)]
    items = P if isinstance(P, (list, tuple)) else [P]
    if not items:
        raise ConfigError("P list is empty")
    flat = all(isinstance(v, (int, float)) for v in items)
    if flat and model.dim > 1:
        # a single vector written without the outer list
        items = [items]
    out = []
    for item in items:
        vec = tuple(float(v) for v in np.atleast_1d(item))
        if len(vec) != model.dim:
            raise ConfigError(f"P entry {item!r} needs {model.dim} components")
        out.append(vec)
    return out


@dataclass(frozen=True)
class Expectations:
    """Which sweep-level checks apply to a scenario."""

    free_exact: bool = False
    dissipation: Optional[str] = None  # "vanishing" or "persistent"
    persistent_floor: float = 0.0
    mather_decay: bool = False
    iul: Optional[str] = None  # "convex" (lambda = 0) or "radial" (beta, lambda recipe)
    conserved_sum: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str
    topic: str
    description: str
    model: dict
    resolution: tuple
    epsilons: tuple
    P: object
    expect: Expectations = field(default_factory=Expectations)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "topic": self.topic,
            "description": self.description,
            "model": copy.deepcopy(self.model),
            "resolution": list(self.resolution),
            "epsilons": list(self.epsilons),
            "P": copy.deepcopy(self.P),
        }


def _cos(amp, const=0.0):
    return {"kind": "cosine", "coefficients": [amp, const]}


_CATALOG = [
    Scenario(
        "free",
        "free motion, exact solution",
        "H = |p|^2/2 with V = 0; u = 0, Hbar = |P|^2/2, theta uniform, m = 0",
        {"kind": "mechanical", "potential": {"kind": "constant", "coefficients": [0.0]}},
        (256,),
        (0.1,),
        [0.0, 0.5, 1.0],
        Expectations(free_exact=True),
    ),
    Scenario(
        "pendulum",
        "uniformly convex mechanical Hamiltonian",
        "H = p^2/2 + cos(2 pi x) at the rotating momentum P = 2",
        {"kind": "mechanical", "potential": _cos(1.0)},
        (1024,),
        SWEEP,
        [2.0],
        Expectations(dissipation="vanishing", mather_decay=True, iul="convex"),
    ),
    Scenario(
        "quasiconvex-square",
        "quasiconvex Hamiltonians",
        "H = (p^2 + V)^2 with V = 0.5 cos(2 pi x) changing sign; P = 1",
        {"kind": "quasiconvex-square", "potential": _cos(0.5)},
        (1024,),
        SWEEP,
        [1.0],
        Expectations(dissipation="vanishing"),
    ),
    Scenario(
        "radial",
        "radially symmetric nonconvex Hamiltonians",
        "H = Hr(|p|) + 0.05 cos(2 pi x), Hr(s) = s^2/2 - 1.9 s^3/3 + s^4/4 (Hr'' < 0 on (0.36, 0.91)); P = 0.7",
        {"kind": "radial", "profile": RADIAL_PROFILE, "potential": _cos(0.05)},
        (1024,),
        SWEEP,
        [0.7],
        Expectations(dissipation="vanishing", mather_decay=True, iul="radial"),
    ),
    Scenario(
        "onedim-nonconvex",
        "one-dimensional nonconvex Hamiltonians with a single critical point",
        "H = Hp(p) + 0.5 cos(2 pi x), Hp(p) = p^2/2 - 1.9 p^3/3 + p^4/4; P = 1",
        {"kind": "onedim-nonconvex", "profile": RADIAL_PROFILE, "potential": _cos(0.5)},
        (1024,),
        SWEEP,
        [1.0],
    ),
    Scenario(
        "conserved-sum",
        "separable Hamiltonians with a conserved combination",
        "H = p1^2/2 + p2^4/4 + 0.5 cos(2 pi (x1 + x2)) on T^2; m11 - 2 m12 + m22 integrates to 0",
        {
            "kind": "conserved-sum",
            "profiles": [[0.0, 0.0, 0.5], [0.0, 0.0, 0.0, 0.0, 0.25]],
            "potential": _cos(0.5),
        },
        (128, 128),
        (0.4, 0.2, 0.1),
        [[0.5, 0.25]],
        Expectations(conserved_sum=True),
    ),
    Scenario(
        "nonuniqueness",
        "non-uniqueness of cell-problem solutions",
        "H = p (p - psi'(x)), psi = 0.1 cos(2 pi x); at P = 0 both u = 0 and u = psi are classical solutions",
        {"kind": "nonuniqueness", "psi": _cos(0.1)},
        (1024,),
        SWEEP,
        [0.0],
    ),
    Scenario(
        "counterexample",
        "non-vanishing dissipation for a nonconvex Hamiltonian",
        "H = ((p^2 - 1)^2 - 0.5 p - (0.75 + 0.5 cos(2 pi x))), S-shaped level set with fold jumps; "
        "P = mean of the rightward branch",
        {
            "kind": "counterexample",
            "shift": {"kind": "constant", "coefficients": [0.0]},
            "well": _cos(0.5, 0.75),
            "radius": 1.0,
            "tilt": -0.5,
            "level": 0.0,
        },
        (4096,),
        SWEEP,
        "branch",
        Expectations(dissipation="persistent", persistent_floor=0.7),
    ),
]

SCENARIOS = {s.name: s for s in _CATALOG}


def list_scenarios() -> list[dict]:
    return [{"name": s.name, "topic": s.topic, "description": s.description} for s in _CATALOG]


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None
