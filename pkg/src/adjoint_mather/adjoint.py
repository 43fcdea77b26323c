"""Stationary adjoint density, phase measure, dissipation field and identity checks.

The linearized operator ``L v = -eps^2/2 Lap v + D_pH(x, P + Du) . Dv`` is
minus the generator of ``dx = -D_pH dt + eps dw``. It is assembled once as a
sparse Markov generator with nonnegative jump rates (Scharfetter-Gummel
exponential fitting by default, plain upwinding on request), and theta is the
normalized null vector of its transpose. Every check below integrates against
that same theta, so the projected identity ``sum theta (L phi) h^n = 0`` holds
to rounding for every grid function phi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import exprel

from .cell_solver import CellSolution
from .errors import AmbiguousDensity, AssemblyError, InvalidArgument
from .grid import TorusGrid, _shift_matrix
from .testfunctions import TestFunction, catalog, x_only

log = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# generator


def _bernoulli(z):
    """B(z) = z / (e^z - 1), evaluated without cancellation or overflow."""
    with np.errstate(over="ignore"):
        return 1.0 / exprel(z)


@dataclass(frozen=True)
class LinearizedOperator:
    """``matrix`` is L (so ``-matrix`` is a generator: zero row sums, nonnegative off-diagonals)."""

    matrix: sp.csr_matrix
    grid: TorusGrid
    flux: str
    drift: np.ndarray  # -D_pH on nodes, shape (n,) + grid.shape

    def apply(self, phi) -> np.ndarray:
        phi = self.grid.check_scalar(phi)
        return (self.matrix @ phi.ravel()).reshape(self.grid.shape)

    @property
    def scale(self) -> float:
        return float(np.abs(self.matrix.diagonal()).max())


def build_generator(sol: CellSolution, flux: str = "sg") -> LinearizedOperator:
    """Assemble L for the drift ``b = -D_pH(x, P + Du)``."""
    grid = sol.grid
    D = 0.5 * sol.epsilon**2
    b = -sol.model.grad_p(grid.coords, sol.p)
    size = grid.size
    G = sp.csr_matrix((size, size))
    for a, h in enumerate(grid.spacing):
        ba = b[a]
        if flux == "sg":
            mid = 0.5 * (ba + np.roll(ba, -1, axis=a))  # drift at i + 1/2
            pe = mid * h / D
            up = D / h**2 * _bernoulli(-pe)  # rate i -> i+1
            down_mid = D / h**2 * _bernoulli(pe)  # rate i+1 -> i
            down = np.roll(down_mid, 1, axis=a)  # rate i -> i-1 uses i - 1/2
        elif flux == "upwind":
            up = D / h**2 + np.maximum(ba, 0.0) / h
            down = D / h**2 + np.maximum(-ba, 0.0) / h
        else:
            raise InvalidArgument(f"unknown flux {flux!r}")
        fwd = _axis_shift(grid, a, 1)
        bwd = _axis_shift(grid, a, -1)
        eye = sp.identity(size, format="csr")
        G = G + sp.diags(up.ravel()) @ (fwd - eye) + sp.diags(down.ravel()) @ (bwd - eye)
    L = (-G).tocsr()
    return LinearizedOperator(matrix=L, grid=grid, flux=flux, drift=b)


def _axis_shift(grid: TorusGrid, axis: int, offset: int) -> sp.csr_matrix:
    key = ("shift", axis, offset)
    if key not in grid._cache:
        mats = [sp.identity(m, format="csr") for m in grid.resolution]
        mats[axis] = _shift_matrix(grid.resolution[axis], offset)
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        grid._cache[key] = out.tocsr()
    return grid._cache[key]


# ----------------------------------------------------------------------
# theta


@dataclass(frozen=True)
class ProjectedDensity:
    theta: np.ndarray
    mass: float
    spectral_gap: float
    adjoint_residual: float
    operator: LinearizedOperator = field(repr=False)
    theta_ext: Optional[np.ndarray] = field(default=None, repr=False)  # extended-precision theta

    @property
    def grid(self) -> TorusGrid:
        return self.operator.grid

    def integrate(self, f) -> float:
        return self.grid.integrate(f, self.theta)


class ExactGenerator:
    """L in extended precision with its diagonal rebuilt as minus the sum of
    the off-diagonal rates, so that L 1 = 0 holds to extended rounding.

    In float64 the assembled diagonal is a rounded sum and L 1 is only zero
    to one ulp of the operator scale; for fine grids that alone exceeds the
    1e-12 level at which the discrete adjointness identity is checked.
    """

    def __init__(self, op: LinearizedOperator):
        coo = op.matrix.tocoo()
        off = coo.row != coo.col
        self.rows = coo.row[off]
        self.cols = coo.col[off]
        self.vals = coo.data[off].astype(np.longdouble)
        self.size = op.matrix.shape[0]
        self.diag = np.zeros(self.size, dtype=np.longdouble)
        np.add.at(self.diag, self.rows, -self.vals)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.longdouble)
        y = self.diag * x
        np.add.at(y, self.rows, self.vals * x[self.cols])
        return y

    def rmatvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.longdouble)
        y = self.diag * x
        np.add.at(y, self.cols, self.vals * x[self.rows])
        return y


def spectral_gap(op: LinearizedOperator) -> float:
    """Distance from 0 to the nearest other eigenvalue of L (shift-invert ARPACK)."""
    L = op.matrix.tocsc()
    sigma = -1e-7 * op.scale
    try:
        # fixed start vector: ARPACK's own is drawn from a process-global RNG
        v0 = np.cos(np.arange(L.shape[0]) * 0.7) + 1.5
        vals = spla.eigs(L, k=2, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-10, v0=v0)
    except Exception as exc:  # ARPACK failures are reported, not fatal
        log.warning("spectral gap estimate failed: %s", exc)
        return float("nan")
    mags = np.sort(np.abs(vals))
    return float(mags[-1])


def stationary_adjoint(sol: CellSolution, flux: str = "sg", compute_gap: bool = True) -> ProjectedDensity:
    """theta >= 0 with unit mass and L^T theta = 0.

    Solves the bordered system ``[L^T  1; h^n 1^T  0] [theta; c] = [0; 1]``
    with one step of iterative refinement.
    """
    op = build_generator(sol, flux)
    grid = sol.grid
    h_n = grid.cell_volume
    size = grid.size
    LT = op.matrix.T.tocsc()
    A = sp.bmat(
        [[LT, sp.csc_matrix(np.ones((size, 1)))], [sp.csc_matrix(h_n * np.ones((1, size))), None]],
        format="csc",
    )
    rhs = np.zeros(size + 1)
    rhs[-1] = 1.0
    lu = spla.splu(A)
    z = lu.solve(rhs)
    z = z + lu.solve(rhs - A @ z)
    theta = z[:-1].reshape(grid.shape)
    if theta.min() < -1e-14 * np.abs(theta).max():
        raise AssemblyError(f"adjoint density has negative entries (min {theta.min():.3e})")
    theta = np.maximum(theta, 0.0)
    theta_ext = _refine_extended(op, lu, theta.ravel(), h_n)
    theta = (theta_ext / (theta_ext.sum() * h_n)).astype(float).reshape(grid.shape)
    gap = spectral_gap(op) if compute_gap else float("nan")
    if np.isfinite(gap) and gap < 1e-12 * op.scale:
        raise AmbiguousDensity("generator has more than one stationary density", gap=gap)
    resid = float(np.abs(LT @ theta.ravel()).max())
    return ProjectedDensity(theta=theta, mass=float(theta.sum() * h_n), spectral_gap=gap,
                            adjoint_residual=resid, operator=op, theta_ext=theta_ext.reshape(grid.shape))


def _refine_extended(op: LinearizedOperator, lu, theta, h_n: float, steps: int = 3) -> np.ndarray:
    """Iterative refinement of the bordered system against the exact-row-sum L,
    residuals in extended precision, corrections from the float64 LU."""
    ex = ExactGenerator(op)
    t = np.asarray(theta, dtype=np.longdouble)
    c = np.longdouble(0.0)
    for _ in range(steps):
        r = np.empty(t.size + 1, dtype=np.longdouble)
        r[:-1] = ex.rmatvec(t) + c
        r[-1] = h_n * t.sum() - 1
        d = lu.solve(r.astype(float))
        t = t - d[:-1]
        c = c - d[-1]
    t = np.maximum(t, 0)
    return t / (t.sum() * h_n)


def power_iteration_density(sol: CellSolution, flux: str = "sg", tol: float = 1e-13, max_iter: int = 2_000_000):
    """Stationary density by uniformized power iteration (independent slow oracle)."""
    op = build_generator(sol, flux)
    G = -op.matrix
    rate = op.scale * 1.01
    step = (sp.identity(G.shape[0]) + G / rate).T.tocsr()
    v = np.full(G.shape[0], 1.0 / G.shape[0])
    for it in range(max_iter):
        w = step @ v
        w /= w.sum()
        if np.abs(w - v).max() < tol * w.max():
            v = w
            break
        v = w
    theta = v.reshape(sol.grid.shape)
    return theta / (theta.sum() * sol.grid.cell_volume), it


# ----------------------------------------------------------------------
# phase measure and dissipation


@dataclass(frozen=True)
class PhaseMeasure:
    """Atoms (x_i, P + Du(x_i)) with weights theta_i h^n."""

    x: np.ndarray  # (n, M)
    p: np.ndarray  # (n, M)
    weights: np.ndarray  # (M,)
    P: tuple

    def integrate(self, psi: Callable) -> float:
        return float(np.sum(self.weights * psi(self.x, self.p)))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def build_phase_measure(sol: CellSolution, density: ProjectedDensity) -> PhaseMeasure:
    grid = sol.grid
    n = grid.dim
    return PhaseMeasure(
        x=grid.coords.reshape(n, -1),
        p=sol.p.reshape(n, -1),
        weights=density.theta.ravel() * grid.cell_volume,
        P=sol.spec.P,
    )


@dataclass(frozen=True)
class DissipationField:
    density: np.ndarray  # (n, n) + grid.shape
    trace_mass: float
    grid: TorusGrid = field(repr=False)

    def integrated(self) -> np.ndarray:
        return self.density.reshape(self.density.shape[:2] + (-1,)).sum(axis=-1) * self.grid.cell_volume

    def atoms(self) -> np.ndarray:
        """Per-node matrices times h^n, shape (n, n, M)."""
        n = self.density.shape[0]
        return self.density.reshape(n, n, -1) * self.grid.cell_volume


def dissipation_field(sol: CellSolution, density: ProjectedDensity, psd_tol: float = 1e-10) -> DissipationField:
    """m_kj = eps^2/2 sum_i u_{x_i x_k} u_{x_i x_j} theta."""
    d2u = sol.d2u
    D = 0.5 * sol.epsilon**2
    m = D * np.einsum("ik...,ij...->kj...", d2u, d2u) * density.theta
    n = sol.grid.dim
    if n > 1:
        mats = np.moveaxis(m.reshape(n, n, -1), -1, 0)
        if np.abs(mats - np.swapaxes(mats, 1, 2)).max() > 0:
            raise AssemblyError("dissipation density is not symmetric")
        scale = D * float((np.sum(d2u**2, axis=(0, 1)) * density.theta).max())
        low = float(np.linalg.eigvalsh(mats).min()) if mats.size else 0.0
        if low < -psd_tol * max(scale, 1e-300):
            raise AssemblyError(f"dissipation density not PSD (min eigenvalue {low:.3e})")
    elif m.min() < 0:
        raise AssemblyError("dissipation density negative")
    trace = np.trace(m, axis1=0, axis2=1)
    return DissipationField(density=m, trace_mass=float(trace.sum() * sol.grid.cell_volume), grid=sol.grid)


# ----------------------------------------------------------------------
# identity checks


@dataclass(frozen=True)
class MatherReport:
    resA: float
    resA_identity: float
    resB: float
    resC_po: float
    resC_po_continuum: float
    resC_raw: float


def mather_checks(sol: CellSolution, density: ProjectedDensity, mu: PhaseMeasure | None = None) -> MatherReport:
    """Energy concentration (resA), the (p - P) . D_pH moment (resB) and the
    projected stationarity (resC) against the 8 x-modes of the catalog.

    ``resC_po`` uses the discrete L on the sampled modes (exact up to
    rounding); ``resC_po_continuum`` uses analytic derivatives of the modes;
    ``resC_raw`` is ``max |int D_pH . Dphi dtheta|`` which vanishes only as
    eps -> 0.
    """
    grid = sol.grid
    x, p = grid.coords, sol.p
    theta = density.theta
    model = sol.model
    H = model.value(x, p)
    Hp = model.grad_p(x, p)
    resA = grid.integrate((H - sol.hbar) ** 2, theta)
    lap_term = 0.25 * sol.epsilon**4 * grid.integrate(sol.laplacian**2, theta)
    resB = abs(grid.integrate(np.sum((p - sol.spec.P_field) * Hp, axis=0), theta))
    D = 0.5 * sol.epsilon**2
    po, po_c, raw = 0.0, 0.0, 0.0
    for f in x_only(grid.dim):
        phi = f.mode.value(x)
        scale = max(1.0, float(np.abs(phi).max()))
        po = max(po, abs(grid.integrate(density.operator.apply(phi), theta)) / scale)
        drift_term = grid.integrate(np.sum(Hp * f.mode.grad(x), axis=0), theta)
        lap = np.trace(f.mode.hess(x), axis1=0, axis2=1)
        po_c = max(po_c, abs(drift_term - D * grid.integrate(lap, theta)))
        raw = max(raw, abs(drift_term))
    return MatherReport(
        resA=resA,
        resA_identity=abs(resA - lap_term),
        resB=resB,
        resC_po=po,
        resC_po_continuum=po_c,
        resC_raw=raw,
    )


def adjointness_defect(density: ProjectedDensity, fields) -> float:
    """max over fields of |sum theta (L phi) h^n| / ||phi||_inf.

    Evaluated in extended precision (when ``theta_ext`` is available) so the
    result measures the discrete identity rather than float64 rounding at
    the operator scale.
    """
    worst = 0.0
    h_n = density.grid.cell_volume
    ex = ExactGenerator(density.operator) if density.theta_ext is not None else None
    for phi in fields:
        phi = density.grid.check_scalar(phi)
        if ex is None:
            val = density.integrate(density.operator.apply(phi))
        else:
            val = float(np.sum(density.theta_ext.ravel() * ex.matvec(phi.ravel())) * h_n)
        worst = max(worst, abs(val) / max(np.abs(phi).max(), 1e-300))
    return worst


def poisson_bracket(model, f: TestFunction, x, p):
    """{phi, H} = D_p phi . D_x H - D_x phi . D_p H."""
    return np.sum(f.grad_p(x, p) * model.grad_x(x, p) - f.grad_x(x, p) * model.grad_p(x, p), axis=0)


@dataclass(frozen=True)
class WeakKamRow:
    name: str
    discrete: float  # |sum theta L[phi(x, P+Du)] h^n|
    continuum: float  # the fixed-eps identity with analytic phi-derivatives
    limit_form: float  # |int {phi,H} dmu + int phi_pp : dm|


def weak_kam_identity_check(
    sol: CellSolution,
    density: ProjectedDensity,
    m: DissipationField,
    phi_list: Optional[Sequence[TestFunction]] = None,
) -> list[WeakKamRow]:
    grid = sol.grid
    x, p = grid.coords, sol.p
    theta = density.theta
    D = 0.5 * sol.epsilon**2
    d2u = sol.d2u
    if phi_list is None:
        phi_list = catalog(grid.dim, center=sol.spec.P, radius=sol.model.momentum_bound_hint)
    rows = []
    for f in phi_list:
        psi = f.value(x, p)
        disc = abs(grid.integrate(density.operator.apply(psi), theta))
        bracket = poisson_bracket(sol.model, f, x, p)
        hxx = np.trace(f.hess_xx(x, p), axis1=0, axis2=1)
        mixed = np.einsum("ij...,ij...->...", d2u, f.hess_xp(x, p))
        hpp = f.hess_pp(x, p)
        diss = np.einsum("kj...,kj...->...", m.density, hpp)
        cont = grid.integrate(bracket + D * hxx + 2 * D * mixed, theta) + float(diss.sum() * grid.cell_volume)
        limit = grid.integrate(bracket, theta) + float(diss.sum() * grid.cell_volume)
        rows.append(WeakKamRow(f.name, disc, abs(cont), abs(limit)))
    return rows


@dataclass(frozen=True)
class IulValue:
    """value = mantissa * exp(log_scale); ``value`` may overflow to inf."""

    mantissa: float
    log_scale: float
    lam: float

    @property
    def value(self) -> float:
        with np.errstate(over="ignore"):
            return float(self.mantissa * np.exp(self.log_scale))


def iul_integrand(sol: CellSolution, lam: float):
    """Per-node contraction (lam H_p H_p^T + H_pp) : m / m-free parts, and H."""
    x, p = sol.grid.coords, sol.p
    Hp = sol.model.grad_p(x, p)
    M = lam * Hp[:, None] * Hp[None, :] + sol.model.hess_pp(x, p)
    return M, sol.model.value(x, p)


def iul_functional(sol: CellSolution, m: DissipationField, lam: float) -> IulValue:
    """int e^{lam H} (lam H_pk H_pj + H_pkpj) dm_kj, with the largest exponential factored out."""
    if not np.isfinite(lam):
        raise InvalidArgument("lambda must be finite")
    M, H = iul_integrand(sol, lam)
    contraction = np.einsum("kj...,kj...->...", M, m.density)
    expo = lam * H
    top = float(expo.max()) if expo.size else 0.0
    mant = float(np.sum(np.exp(expo - top) * contraction) * sol.grid.cell_volume)
    return IulValue(mantissa=mant, log_scale=top, lam=float(lam))


def iul_weighted_trace(sol: CellSolution, m: DissipationField, lam: float) -> IulValue:
    """int e^{lam H} d(trace m), scaled like iul_functional."""
    _, H = iul_integrand(sol, lam)
    expo = lam * H
    top = float(expo.max())
    tr = np.trace(m.density, axis1=0, axis2=1)
    return IulValue(float(np.sum(np.exp(expo - top) * tr) * sol.grid.cell_volume), top, float(lam))


def convexity_constant(sol: CellSolution) -> float:
    """min eigenvalue of D2_ppH over the atoms."""
    hpp = sol.model.hess_pp(sol.grid.coords, sol.p)
    n = sol.grid.dim
    mats = np.moveaxis(hpp.reshape(n, n, -1), -1, 0)
    return float(np.linalg.eigvalsh(mats).min())


@dataclass(frozen=True)
class RadialRecipe:
    r: float
    M: float
    beta: float
    lam: float


def radial_recipe(profile, M: float, samples: int = 4001) -> RadialRecipe:
    """beta = min{Hr''(0)/2, min_{[r, M]} Hr'(s) / M} and a lambda making
    lam Hr'^2 + Hr'' - Hr'/s >= 0 on [r, M]."""
    h2 = float(profile.d2(0.0))
    s = np.linspace(0, M, samples)[1:]
    ratio = profile.d1(s) / s
    good = (ratio > 0.75 * h2) & (np.abs(ratio - profile.d2(s)) < 0.25 * h2)
    bad = np.nonzero(~good)[0]
    r = float(s[bad[0] - 1]) if bad.size and bad[0] > 0 else (float(s[-1]) if not bad.size else float(s[0]))
    tail = s[s >= r]
    d1 = profile.d1(tail)
    beta = min(0.5 * h2, float(d1.min()) / M)
    need = (d1 / tail - profile.d2(tail)) / d1**2
    lam = max(0.0, float(need.max())) * 1.01
    return RadialRecipe(r=r, M=float(M), beta=beta, lam=lam)


# ----------------------------------------------------------------------
# support and graph diagnostics


@dataclass(frozen=True)
class SupportReport:
    fraction_outside: float
    skipped: bool
    level: float
    slack: float


def support_diagnostics(
    sol: CellSolution,
    m: DissipationField,
    slack: Optional[float] = None,
    box: Optional[float] = None,
    n_q: int = 2001,
) -> SupportReport:
    """Fraction of trace(m) whose atom lies outside the p-convex hull of the
    union over x of the sublevel sets {q : H(x, q) <= Hbar + slack}.

    The default slack is the largest pointwise gap ``max eps^2/2 Lap u`` by
    which the discrete graph p = P + Du can sit above the level Hbar.
    """
    grid = sol.grid
    n = grid.dim
    if slack is None:
        slack = max(0.0, float((0.5 * sol.epsilon**2 * sol.laplacian).max()))
    level = sol.hbar + slack
    R = box if box is not None else max(sol.model.momentum_bound_hint, 1.5 * sol.lipschitz)
    if n == 1:
        q = np.linspace(-R, R, n_q)
        xs = grid.coords.reshape(1, -1)
        xx = np.repeat(xs, q.size, axis=1)
        qq = np.tile(q, xs.shape[1])[None]
        inside = (sol.model.value(xx, qq) <= level).reshape(xs.shape[1], q.size)
        if inside[:, 0].any() or inside[:, -1].any():
            return SupportReport(float("nan"), True, level, slack)
        cols = np.nonzero(inside.any(axis=0))[0]
        if cols.size == 0:
            return SupportReport(1.0 if m.trace_mass > 0 else 0.0, False, level, slack)
        dq = q[1] - q[0]
        lo, hi = q[cols[0]] - dq, q[cols[-1]] + dq
        p = sol.p.reshape(-1)
        outside = (p < lo) | (p > hi)
    else:
        from scipy.spatial import ConvexHull

        m_q = 81
        q1 = np.linspace(-R, R, m_q)
        Q = np.stack(np.meshgrid(q1, q1, indexing="ij")).reshape(2, -1)
        stride = max(1, grid.resolution[0] // 32)
        xs = grid.coords[:, ::stride, ::stride].reshape(2, -1)
        pts = []
        edge = (np.abs(Q[0]) == R) | (np.abs(Q[1]) == R)
        for j in range(xs.shape[1]):
            vals = sol.model.value(np.repeat(xs[:, j : j + 1], Q.shape[1], axis=1), Q)
            ok = vals <= level
            if np.any(ok & edge):
                return SupportReport(float("nan"), True, level, slack)
            pts.append(Q[:, ok])
        cloud = np.concatenate(pts, axis=1).T
        if cloud.shape[0] < 3:
            return SupportReport(1.0 if m.trace_mass > 0 else 0.0, False, level, slack)
        hull = ConvexHull(cloud)
        pad = np.sqrt(2) * (q1[1] - q1[0])
        P = sol.p.reshape(2, -1).T
        dist = P @ hull.equations[:, :2].T + hull.equations[:, 2]
        outside = np.any(dist > pad, axis=1)
    tr = np.trace(m.density, axis1=0, axis2=1).ravel()
    total = tr.sum()
    frac = float(tr[outside].sum() / total) if total > 0 else 0.0
    return SupportReport(frac, False, level, slack)


@dataclass(frozen=True)
class GraphDefect:
    sup: float
    l1: float


def graph_defect(sol: CellSolution, density: ProjectedDensity, reference: Optional[CellSolution] = None) -> GraphDefect:
    """|D_pH(x, p) . (p - P - Du_ref(x))| over the atoms of mu (sup and theta-weighted L1)."""
    grid = sol.grid
    x, p = grid.coords, sol.p
    if reference is None:
        du_ref = sol.du
    else:
        if reference.grid.dim != grid.dim:
            raise InvalidArgument("reference solution lives on a different torus")
        pts = x.reshape(grid.dim, -1)
        du_ref = np.stack([reference.grid.interpolate(reference.du[a], pts) for a in range(grid.dim)])
        du_ref = du_ref.reshape(p.shape)
    gap = p - sol.spec.P_field - du_ref
    val = np.abs(np.sum(sol.model.grad_p(x, p) * gap, axis=0))
    return GraphDefect(sup=float(val.max()), l1=grid.integrate(val, density.theta))
