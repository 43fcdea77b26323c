"""Euler-Maruyama simulation of dx = -D_pH(x, P + Du(x)) dt + eps dw on the torus.

The momentum is read off the cell solution, p(t) = P + Du(x(t)), so only
the x-equation is integrated. Du is interpolated linearly onto a refined
table on which the drift -D_pH(x, p) is evaluated exactly; the kernel then
interpolates that table linearly. Replicates draw Gaussian increments from
independent Philox substreams spawned from one seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .adjoint import ProjectedDensity
from .cell_solver import CellSolution, PDerivative
from .errors import DtTooLarge, InvalidArgument
from .grid import TorusGrid
from .testfunctions import TestFunction

CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    dt: Optional[float] = None  # default min(1e-3, 0.05 h / max|D_pH|)
    steps: int = 100_000  # per replicate, including burn-in
    burn_in: Optional[int] = None  # default 10% of steps
    replicates: int = 16
    seed: int = 0
    x0: Optional[tuple] = None
    batches: int = 10  # batch means per replicate
    hist_bins: int = 64  # per axis
    refine: int = 4

    def __post_init__(self):
        if self.steps <= 0 or self.replicates <= 0 or self.batches <= 0:
            raise InvalidArgument("steps, replicates and batches must be positive")
        if self.burn_in is not None and not 0 <= self.burn_in < self.steps:
            raise InvalidArgument("need 0 <= burn_in < steps")
        if (self.steps - self.burn_steps) < self.batches:
            raise InvalidArgument("fewer recorded steps than batches")

    @property
    def burn_steps(self) -> int:
        return int(self.burn_in) if self.burn_in is not None else self.steps // 10


# ----------------------------------------------------------------------
# numba kernel


@numba.njit(cache=True, inline="always")
def _interp(table, m1, m2, y1, y2):
    s = (y1 - np.floor(y1)) * m1
    i = int(s)
    t = s - i
    if i >= m1:
        i = m1 - 1
    i1 = i + 1 if i + 1 < m1 else 0
    if m2 == 1:
        return (1 - t) * table[i] + t * table[i1]
    r = (y2 - np.floor(y2)) * m2
    j = int(r)
    u = r - j
    if j >= m2:
        j = m2 - 1
    j1 = j + 1 if j + 1 < m2 else 0
    return (
        (1 - t) * (1 - u) * table[i * m2 + j]
        + t * (1 - u) * table[i1 * m2 + j]
        + (1 - t) * u * table[i * m2 + j1]
        + t * u * table[i1 * m2 + j1]
    )


@numba.njit(cache=True)
def _em_chunk(x, noise, drift, fields, m1, m2, dt, sig, hist, nb, acc, marks, mark_every, step0, burn):
    """Advance x through len(noise) steps.

    drift: (n, m1*m2) table; fields: (K, m1*m2) tables integrated in time into
    acc[batch, k]; hist: flattened nb^n occupation counts; marks[b] stores x
    at batch boundaries (b = 0 at the end of burn-in).
    """
    n = x.shape[0]
    K = fields.shape[0]
    steps = noise.shape[0]
    y2 = 0.0
    for s in range(steps):
        k = step0 + s
        y1 = x[0]
        if n == 2:
            y2 = x[1]
        if k >= burn:
            rel = k - burn
            if rel % mark_every == 0:
                b = rel // mark_every
                if b < marks.shape[0]:
                    for a in range(n):
                        marks[b, a] = x[a]
            b = rel // mark_every
            if b < acc.shape[0]:
                for q in range(K):
                    acc[b, q] += _interp(fields[q], m1, m2, y1, y2) * dt
                h1 = int((y1 - np.floor(y1)) * nb)
                if h1 >= nb:
                    h1 = nb - 1
                if n == 2:
                    h2 = int((y2 - np.floor(y2)) * nb)
                    if h2 >= nb:
                        h2 = nb - 1
                    hist[h1 * nb + h2] += 1.0
                else:
                    hist[h1] += 1.0
        for a in range(n):
            dx = _interp(drift[a], m1, m2, y1, y2) * dt + sig * noise[s, a]
            if abs(dx) > 0.5:
                return False
            x[a] += dx
    return True


# ----------------------------------------------------------------------
# tables


def _fine_grid(grid: TorusGrid, refine: int) -> TorusGrid:
    return TorusGrid(tuple(n * refine for n in grid.resolution))


@dataclass(frozen=True)
class _Tables:
    fine: TorusGrid
    x: np.ndarray  # (n, M) fine node coordinates
    p: np.ndarray  # (n, M) interpolated momentum
    d2u: np.ndarray  # (n, n, M) interpolated Hessian
    drift: np.ndarray  # (n, M)


def _tables(sol: CellSolution, refine: int) -> _Tables:
    grid = sol.grid
    fine = _fine_grid(grid, refine)
    n = grid.dim
    pts = fine.coords.reshape(n, -1)
    P = np.asarray(sol.spec.P).reshape(n, 1)
    p = P + np.stack([grid.interpolate(sol.du[a], pts) for a in range(n)])
    d2u = np.stack([np.stack([grid.interpolate(sol.d2u[i, j], pts) for j in range(n)]) for i in range(n)])
    drift = -sol.model.grad_p(pts, p)
    return _Tables(fine, pts, p, d2u, np.ascontiguousarray(drift))


def default_dt(sol: CellSolution) -> float:
    bmax = float(np.abs(sol.model.grad_p(sol.grid.coords, sol.p)).max())
    h = min(sol.grid.spacing)
    return min(1e-3, 0.05 * h / max(bmax, 1e-12))


# ----------------------------------------------------------------------
# driver


@dataclass
class SimReport:
    dt: float
    T: float  # recorded time per replicate
    histogram: np.ndarray  # bin probabilities, shape (hist_bins,)*n
    displacement_rate: np.ndarray  # mean unwrapped displacement / T
    displacement_stderr: np.ndarray
    batch_displacements: np.ndarray  # (R*B, n) displacement per batch
    batch_time: float
    time_averages: np.ndarray  # (K,) of the extra integrated fields
    time_average_stderr: np.ndarray
    batch_integrals: np.ndarray  # (R*B, K)
    marks: np.ndarray  # (R, B+1, n) unwrapped positions at batch boundaries
    max_momentum: float
    config: SimConfig = field(repr=False)


def _batch_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    err = values.std(axis=0, ddof=1) / np.sqrt(values.shape[0])
    return mean, err


def simulate(sol: CellSolution, cfg: SimConfig, extra_fields: Sequence[np.ndarray] = ()) -> SimReport:
    """Run ``cfg.replicates`` independent Euler-Maruyama paths.

    ``extra_fields`` are tables on the refined grid (flattened, length
    ``(refine*N)^n``) whose time integrals are accumulated per batch.
    """
    grid = sol.grid
    n = grid.dim
    tab = _tables(sol, cfg.refine)
    dt = cfg.dt if cfg.dt is not None else default_dt(sol)
    h = min(grid.spacing)
    bmax = float(np.abs(tab.drift).max())
    if dt * bmax > h:
        warnings.warn(f"drift step dt * max|D_pH| = {dt * bmax:.3g} exceeds the mesh size {h:.3g}", stacklevel=2)
    res = tab.fine.resolution
    m1, m2 = res[0], (res[1] if n == 2 else 1)
    fields = np.zeros((len(extra_fields), m1 * m2))
    for k, f in enumerate(extra_fields):
        fields[k] = np.asarray(f, dtype=float).ravel()
    burn = cfg.burn_steps
    recorded = cfg.steps - burn
    B = cfg.batches
    mark_every = recorded // B
    used = mark_every * B
    total_steps = burn + used
    sig = sol.epsilon * np.sqrt(dt)
    nb = cfg.hist_bins
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.replicates)
    x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float).reshape(n)
    hist = np.zeros(nb**n)
    acc_all = np.zeros((cfg.replicates, B, fields.shape[0]))
    marks_all = np.zeros((cfg.replicates, B + 1, n))
    for r, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        x = x0.copy()
        acc = np.zeros((B, fields.shape[0]))
        marks = np.zeros((B + 1, n))
        done = 0
        while done < total_steps:
            size = min(CHUNK, total_steps - done)
            noise = rng.standard_normal((size, n))
            ok = _em_chunk(x, noise, tab.drift, fields, m1, m2, dt, sig, hist, nb, acc, marks,
                           mark_every, done, burn)
            if not ok:
                raise DtTooLarge(f"step larger than 0.5 at dt={dt}")
            done += size
        marks[B] = x
        acc_all[r] = acc
        marks_all[r] = marks
    batch_time = mark_every * dt
    disp = np.diff(marks_all, axis=1).reshape(-1, n)
    rate, rate_err = _batch_stderr(disp / batch_time)
    integ = acc_all.reshape(cfg.replicates * B, fields.shape[0])
    if fields.shape[0]:
        tav, tav_err = _batch_stderr(integ / batch_time)
    else:
        tav, tav_err = np.zeros(0), np.zeros(0)
    hist = hist.reshape((nb,) * n) / hist.sum()
    pmax = float(np.sqrt(np.sum(tab.p**2, axis=0)).max())
    return SimReport(
        dt=dt,
        T=used * dt,
        histogram=hist,
        displacement_rate=rate,
        displacement_stderr=rate_err,
        batch_displacements=disp,
        batch_time=batch_time,
        time_averages=tav,
        time_average_stderr=tav_err,
        batch_integrals=integ,
        marks=marks_all,
        max_momentum=pmax,
        config=cfg,
    )


# ----------------------------------------------------------------------
# derived checks


def occupation_tv(report: SimReport, density: ProjectedDensity) -> float:
    """Total variation 1/2 sum |hist - theta_binned|, binning theta to the histogram bins.

    The histogram bins node i with the interval [x_i, x_{i+1}); theta's node
    mass is split equally between the two bins it borders so both quantities
    refer to the same cells.
    """
    bins = report.histogram.shape[0]
    w = density.theta * density.grid.cell_volume
    for a in range(w.ndim):
        w = 0.5 * (w + np.roll(w, -1, axis=a))
    grid = density.grid
    for a, N in enumerate(grid.resolution):
        shape = list(w.shape)
        shape[a : a + 1] = [bins, N // bins]
        w = w.reshape(shape).sum(axis=a + 1)
    return float(0.5 * np.abs(report.histogram - w).sum())


@dataclass(frozen=True)
class RotationEstimate:
    mc: np.ndarray
    stderr: np.ndarray
    adjoint: np.ndarray  # -int D_pH dmu
    paper_sign: np.ndarray  # +int D_pH dmu, as printed in the rotation-number formula

    @property
    def z_scores(self) -> np.ndarray:
        return np.abs(self.mc - self.adjoint) / np.maximum(self.stderr, 1e-300)


def rotation_number_mc(sol: CellSolution, cfg: SimConfig, density: ProjectedDensity,
                       report: Optional[SimReport] = None) -> RotationEstimate:
    report = report or simulate(sol, cfg)
    hp = sol.model.grad_p(sol.grid.coords, sol.p)
    mean_hp = np.array([sol.grid.integrate(hp[a], density.theta) for a in range(sol.grid.dim)])
    return RotationEstimate(report.displacement_rate, report.displacement_stderr, -mean_hp, mean_hp)


@dataclass(frozen=True)
class DriftReport:
    rate: np.ndarray  # E[(X(T) - X(0)) / T]
    stderr: np.ndarray
    target: np.ndarray  # -D_P Hbar
    variance: float  # E[|X(T) - X(0) + D_P Hbar T|^2] / T
    variance_stderr: float
    variance_exact: float  # eps^2 int |I + D_x D_P u|^2 dtheta
    bound: float  # 2 n eps^2 + 2 int |D_P u|^2 + 2 int |D_pH - D_P Hbar|^2

    @property
    def z_scores(self) -> np.ndarray:
        return np.abs(self.rate - self.target) / np.maximum(self.stderr, 1e-300)

    @property
    def slack(self) -> float:
        return self.bound - self.variance


def variance_bound(sol: CellSolution, dpu: PDerivative, density: ProjectedDensity) -> tuple[float, float]:
    """(eps^2 int |I + D_x D_P u|^2 dtheta, the bound 2n eps^2 + 2 int|D_Pu|^2 + 2 int|D_pH - D_PHbar|^2)."""
    grid = sol.grid
    n = grid.dim
    theta = density.theta
    jac = np.stack([grid.gradient(dpu.dPu[a]) for a in range(n)])  # [a, i] = d_i (d_{P_a} u)
    for a in range(n):
        jac[a, a] += 1.0
    exact = sol.epsilon**2 * grid.integrate(np.sum(jac**2, axis=(0, 1)), theta)
    hp = sol.model.grad_p(grid.coords, sol.p)
    dev = hp - dpu.dPhbar.reshape((n,) + (1,) * n)
    bound = (
        2 * n * sol.epsilon**2
        + 2 * grid.integrate(np.sum(dpu.dPu**2, axis=0), theta)
        + 2 * grid.integrate(np.sum(dev**2, axis=0), theta)
    )
    return float(exact), float(bound)


def drift_check_X(sol: CellSolution, dpu: PDerivative, cfg: SimConfig, density: ProjectedDensity,
                  report: Optional[SimReport] = None) -> DriftReport:
    """Compare E[(X(T) - X(0))/T], X = x + D_Pu(x), with -D_P Hbar, batch by batch."""
    report = report or simulate(sol, cfg)
    grid = sol.grid
    n = grid.dim
    marks = report.marks  # (R, B+1, n)
    pts = marks.reshape(-1, n).T
    dP = np.stack([grid.interpolate(dpu.dPu[a], pts) for a in range(n)]).T.reshape(marks.shape)
    X = marks + dP
    dX = np.diff(X, axis=1).reshape(-1, n)
    Tb = report.batch_time
    rate, err = _batch_stderr(dX / Tb)
    centred = dX + dpu.dPhbar.reshape(1, n) * Tb
    per_batch = np.sum(centred**2, axis=1) / Tb
    var, var_err = _batch_stderr(per_batch)
    exact, bound = variance_bound(sol, dpu, density)
    return DriftReport(rate, err, -dpu.dPhbar, float(var), float(var_err), exact, bound)


@dataclass(frozen=True)
class DynkinRow:
    name: str
    residual: float  # (E[phi(T) - phi(0)] - E int A phi dt) / T
    stderr: float

    @property
    def within(self) -> bool:
        return abs(self.residual) <= 3 * self.stderr + 1e-12


def generator_table(sol: CellSolution, f: TestFunction, tab: _Tables) -> tuple[np.ndarray, np.ndarray]:
    """(phi(x, p(x)), A phi(x, p(x))) on the refined table, with A the full second-order generator."""
    x, p, d2u = tab.x, tab.p, tab.d2u
    D = 0.5 * sol.epsilon**2
    model = sol.model
    bracket = np.sum(f.grad_p(x, p) * model.grad_x(x, p) - f.grad_x(x, p) * model.grad_p(x, p), axis=0)
    lap = np.trace(f.hess_xx(x, p), axis1=0, axis2=1)
    mixed = np.einsum("ij...,ij...->...", d2u, f.hess_xp(x, p))
    diss = np.einsum("ik...,ij...,kj...->...", d2u, d2u, f.hess_pp(x, p))
    return f.value(x, p), bracket + D * lap + 2 * D * mixed + D * diss


def dynkin_residuals(sol: CellSolution, cfg: SimConfig, phi_list: Sequence[TestFunction]) -> list[DynkinRow]:
    tab = _tables(sol, cfg.refine)
    vals, gens = zip(*(generator_table(sol, f, tab) for f in phi_list)) if phi_list else ((), ())
    report = simulate(sol, cfg, extra_fields=list(gens))
    marks = report.marks
    n = sol.grid.dim
    pts = marks.reshape(-1, n).T
    rows = []
    for k, (f, v) in enumerate(zip(phi_list, vals)):
        at = tab.fine.interpolate(v.reshape(tab.fine.shape), pts).reshape(marks.shape[:2])
        dphi = np.diff(at, axis=1).reshape(-1)
        per_batch = (dphi - report.batch_integrals[:, k]) / report.batch_time
        mean, err = _batch_stderr(per_batch[:, None])
        rows.append(DynkinRow(f.name, float(mean[0]), float(err[0])))
    return rows
