"""Uniform second-derivative estimates and the Fourier-mode averaging inequality."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .adjoint import ProjectedDensity
from .cell_solver import CellSolution, PDerivative
from .errors import InvalidArgument


@dataclass(frozen=True)
class EnergyReport:
    eps: float
    e2: float  # eps^2 int |D2u|^2 dtheta
    e2_raw: float  # int |D2u|^2 dtheta
    e2P: float  # eps^2 int |D_x D_P u|^2 dtheta (nan without dPu)
    e2P_bound: float  # int |D_P u|^2 + int |D_pH - D_P Hbar|^2
    e3: np.ndarray  # per axis: eps^2 int |D u_{x_i x_i}|^2 dtheta
    e3_rhs: float  # 1 + int |D2u|^3 dtheta


def energy_report(sol: CellSolution, density: ProjectedDensity, dpu: Optional[PDerivative] = None) -> EnergyReport:
    grid = sol.grid
    n = grid.dim
    theta = density.theta
    eps2 = sol.epsilon**2
    frob2 = np.sum(sol.d2u**2, axis=(0, 1))
    e2_raw = grid.integrate(frob2, theta)
    e3 = np.array([eps2 * grid.integrate(np.sum(grid.gradient(sol.d2u[i, i]) ** 2, axis=0), theta) for i in range(n)])
    e3_rhs = 1.0 + grid.integrate(frob2**1.5, theta)
    if dpu is None:
        e2P, bound = float("nan"), float("nan")
    else:
        jac2 = sum(np.sum(grid.gradient(dpu.dPu[a]) ** 2, axis=0) for a in range(n))
        e2P = eps2 * grid.integrate(jac2, theta)
        hp = sol.model.grad_p(grid.coords, sol.p)
        dev = hp - dpu.dPhbar.reshape((n,) + (1,) * n)
        bound = grid.integrate(np.sum(dpu.dPu**2, axis=0), theta) + grid.integrate(np.sum(dev**2, axis=0), theta)
    return EnergyReport(sol.epsilon, eps2 * e2_raw, e2_raw, e2P, bound, e3, e3_rhs)


@dataclass(frozen=True)
class ModeDefect:
    k: tuple
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs * (1 + 1e-6) - self.lhs

    @property
    def holds(self) -> bool:
        return self.slack >= 0


def averaging_mode_defect(sol: CellSolution, dpu: PDerivative, density: ProjectedDensity, k) -> ModeDefect:
    """|(k . D_P Hbar) int exp(2 pi i k . D_P w) dtheta| against
    2 pi |k|^2 (eps^2 + int |D_P u|^2 + int |D_pH - D_P Hbar|^2), with w = P.x + u."""
    grid = sol.grid
    n = grid.dim
    k = np.atleast_1d(np.asarray(k, dtype=int))
    if k.shape != (n,):
        raise InvalidArgument(f"mode needs {n} components")
    if np.any(np.abs(k) > np.array(grid.resolution) // 4):
        raise InvalidArgument(f"mode {tuple(k)} is not resolved on {grid.resolution}")
    theta = density.theta
    dPw = grid.coords + dpu.dPu
    phase = 2 * np.pi * np.tensordot(k, dPw, axes=(0, 0))
    avg = complex(grid.integrate(np.cos(phase), theta), grid.integrate(np.sin(phase), theta))
    lhs = abs(float(k @ dpu.dPhbar) * avg)
    hp = sol.model.grad_p(grid.coords, sol.p)
    dev = hp - dpu.dPhbar.reshape((n,) + (1,) * n)
    inner = (
        sol.epsilon**2
        + grid.integrate(np.sum(dpu.dPu**2, axis=0), theta)
        + grid.integrate(np.sum(dev**2, axis=0), theta)
    )
    return ModeDefect(tuple(int(v) for v in k), float(lhs), float(2 * np.pi * float(k @ k) * inner))


def mode_family(dim: int, kmax: int = 4) -> list[tuple]:
    return list(itertools.product(range(1, kmax + 1), repeat=dim))


def bounded_by_first(values: Sequence[float], headroom: float = 10.0) -> bool:
    """max(values) <= headroom * values[0] (constant fitted on the first, coarsest-eps entry)."""
    v = np.asarray(values, dtype=float)
    return bool(v.max() <= headroom * v[0] + 1e-300)


def spread_ratio(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    return float(v.max() / v.min()) if v.min() > 0 else float("inf")
