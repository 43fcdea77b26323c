"""Viscous cell problem  -eps^2/2 Lap u + H(x, P + Du) = Hbar  on the torus.

The discrete unknowns are the node values of ``u`` and the constant ``Hbar``;
the extra equation is the normalization ``sum(u) h^n = 0``. The primary
method is damped Newton on this bordered system. When Newton stalls it falls
back to epsilon-continuation and then to the vanishing-discount route
``lam v + H(x, P + Dv) - eps^2/2 Lap v = 0`` with ``-lam v -> Hbar``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NoConvergence
from .grid import TorusGrid
from .hamiltonians import HamiltonianModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol: Optional[float] = None  # default 1e-10 in 1D, 1e-8 in 2D
    max_iter: int = 200
    max_halvings: int = 30
    advection: str = "auto"  # "central", "upwind" or "auto" (central, upwind on stall)
    continuation: bool = True
    discount_fallback: bool = True

    def tolerance(self, dim: int) -> float:
        if self.tol is not None:
            return float(self.tol)
        return 1e-10 if dim == 1 else 1e-8


@dataclass(frozen=True)
class CellProblemSpec:
    model: HamiltonianModel
    P: tuple
    epsilon: float
    grid: TorusGrid
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        P = tuple(float(v) for v in np.atleast_1d(self.P))
        object.__setattr__(self, "P", P)
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidArgument("epsilon must be positive")
        if self.grid.dim != self.model.dim:
            raise InvalidArgument(f"grid dim {self.grid.dim} does not match model dim {self.model.dim}")
        if len(P) != self.model.dim:
            raise InvalidArgument(f"P needs {self.model.dim} components, got {len(P)}")

    @property
    def P_field(self) -> np.ndarray:
        return np.asarray(self.P).reshape((-1,) + (1,) * self.grid.dim)

    def with_P(self, P) -> "CellProblemSpec":
        return dataclasses.replace(self, P=tuple(np.atleast_1d(P).astype(float)))

    def with_epsilon(self, eps: float) -> "CellProblemSpec":
        return dataclasses.replace(self, epsilon=float(eps))


@dataclass(frozen=True)
class CellSolution:
    """Converged discrete cell solution.

    ``du`` is the gradient that enters H in the discrete equation (central
    differences, or the per-node upwind choice when that scheme was used);
    ``d2u`` is the symmetrized Hessian of central differences.
    """

    spec: CellProblemSpec
    u: np.ndarray
    hbar: float
    du: np.ndarray
    d2u: np.ndarray
    residual_inf: float
    lipschitz: float
    iterations: int
    method: str
    advection: str

    @property
    def grid(self) -> TorusGrid:
        return self.spec.grid

    @property
    def model(self) -> HamiltonianModel:
        return self.spec.model

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    @property
    def p(self) -> np.ndarray:
        """Momentum field P + Du, shape (n,) + grid.shape."""
        return self.spec.P_field + self.du

    @property
    def laplacian(self) -> np.ndarray:
        return self.grid.laplacian(self.u)


# ----------------------------------------------------------------------
# discrete operator


class _Discretization:
    """Residual and Jacobian of the discrete cell equation for one (grid, model, P, eps)."""

    def __init__(self, spec: CellProblemSpec, advection: str):
        self.spec = spec
        self.grid = spec.grid
        self.advection = advection
        self.x = spec.grid.coords
        self.D = 0.5 * spec.epsilon**2
        self.lap = spec.grid.laplacian_matrix()
        n = spec.grid.dim
        self.central = [spec.grid.diff_matrix(a, "central") for a in range(n)]
        self.forward = [spec.grid.diff_matrix(a, "forward") for a in range(n)]
        self.backward = [spec.grid.diff_matrix(a, "backward") for a in range(n)]
        self.upwind_sign = None  # per-axis boolean masks, frozen between Newton steps

    def gradient(self, u):
        g = self.grid
        if self.advection == "central" or self.upwind_sign is None:
            return g.gradient(u)
        fwd, bwd = g.gradient(u, mode="upwind-pair")
        return np.where(self.upwind_sign, fwd, bwd)

    def refresh_upwind(self, u):
        """Forward difference where D_pH < 0, backward where D_pH >= 0 (monotone choice)."""
        if self.advection != "upwind":
            return
        hp = self.spec.model.grad_p(self.x, self.spec.P_field + self.grid.gradient(u))
        self.upwind_sign = hp < 0

    def diff_ops(self):
        if self.advection == "central" or self.upwind_sign is None:
            return self.central
        ops = []
        for a in range(self.grid.dim):
            mask = sp.diags(self.upwind_sign[a].ravel().astype(float))
            ops.append(mask @ self.forward[a] + (sp.identity(self.grid.size) - mask) @ self.backward[a])
        return ops

    def residual(self, u, hbar, lam=0.0):
        p = self.spec.P_field + self.gradient(u)
        H = self.spec.model.value(self.x, p)
        return lam * u - self.D * self.grid.laplacian(u) + H - hbar

    def jacobian(self, u, lam=0.0):
        p = self.spec.P_field + self.gradient(u)
        hp = self.spec.model.grad_p(self.x, p)
        J = -self.D * self.lap
        for a, op in enumerate(self.diff_ops()):
            J = J + sp.diags(hp[a].ravel()) @ op
        if lam:
            J = J + lam * sp.identity(self.grid.size)
        return J.tocsc()


def _bordered(J, h_n):
    size = J.shape[0]
    col = -np.ones((size, 1))
    row = h_n * np.ones((1, size))
    return sp.bmat([[J, sp.csc_matrix(col)], [sp.csc_matrix(row), None]], format="csc")


def _solve(A, b):
    try:
        x = spla.spsolve(A, b)
    except RuntimeError as exc:  # singular factor
        raise NoConvergence(f"singular Jacobian: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NoConvergence("singular Jacobian (non-finite step)")
    return x


# ----------------------------------------------------------------------
# Newton for the bordered (ergodic) problem


def _newton_cell(disc: _Discretization, u0, hbar0, tol, opts: SolverOptions):
    grid = disc.grid
    h_n = grid.cell_volume
    u = u0 - u0.mean()
    hbar = float(hbar0)
    disc.refresh_upwind(u)
    F = disc.residual(u, hbar)
    res = float(np.abs(F).max())
    for it in range(1, opts.max_iter + 1):
        if res <= tol:
            return u, hbar, res, it - 1
        A = _bordered(disc.jacobian(u), h_n)
        rhs = -np.concatenate([F.ravel(), [h_n * u.sum()]])
        step = _solve(A, rhs)
        du = step[:-1].reshape(grid.shape)
        dh = step[-1]
        t = 1.0
        for _ in range(opts.max_halvings):
            u_new = u + t * du
            h_new = hbar + t * dh
            F_new = disc.residual(u_new, h_new)
            res_new = float(np.abs(F_new).max())
            if np.isfinite(res_new) and res_new < res * (1 - 1e-4 * t) or res_new <= tol:
                break
            t *= 0.5
        else:
            raise NoConvergence("line search failed", residual=res, iterations=it)
        u, hbar, F, res = u_new, h_new, F_new, res_new
        if disc.advection == "upwind":
            disc.refresh_upwind(u)
            F = disc.residual(u, hbar)
            res = float(np.abs(F).max())
    if res <= tol:
        return u, hbar, res, opts.max_iter
    raise NoConvergence("Newton did not converge", residual=res, iterations=opts.max_iter)


def _initial_guess(spec: CellProblemSpec, initial):
    grid = spec.grid
    if initial is None:
        u0 = np.zeros(grid.shape)
    else:
        u0 = grid.check_scalar(initial)
    u0 = u0 - u0.mean()
    p = spec.P_field + grid.gradient(u0)
    hbar0 = float(np.mean(spec.model.value(grid.coords, p) - 0.5 * spec.epsilon**2 * grid.laplacian(u0)))
    return u0, hbar0


def _finish(spec, disc, u, hbar, res, iterations, method) -> CellSolution:
    grid = spec.grid
    u = u - u.mean()
    du = disc.gradient(u)
    p = spec.P_field + du
    return CellSolution(
        spec=spec,
        u=u,
        hbar=float(hbar),
        du=du,
        d2u=grid.hessian(u),
        residual_inf=float(res),
        lipschitz=float(np.sqrt(np.sum(p * p, axis=0)).max()),
        iterations=int(iterations),
        method=method,
        advection=disc.advection,
    )


def _attempt(spec, advection, u0, h0, tol):
    disc = _Discretization(spec, advection)
    u, hbar, res, its = _newton_cell(disc, u0, h0, tol, spec.options)
    return disc, u, hbar, res, its


def solve_cell(spec: CellProblemSpec, initial=None, hbar_guess=None) -> CellSolution:
    """Solve the discrete cell problem for (u, Hbar).

    Strategy: damped Newton from ``initial`` (or zero); on failure,
    epsilon-continuation from a coarser epsilon; then the vanishing-discount
    route. With ``advection="auto"`` central differences are tried first and
    the per-node upwind evaluation is used when they fail.
    """
    opts = spec.options
    tol = opts.tolerance(spec.grid.dim)
    u0, h0 = _initial_guess(spec, initial)
    if hbar_guess is not None:
        h0 = float(hbar_guess)
    schemes = ["central", "upwind"] if opts.advection == "auto" else [opts.advection]
    if any(s not in ("central", "upwind") for s in schemes):
        raise InvalidArgument(f"unknown advection scheme {opts.advection!r}")
    last = None
    for scheme in schemes:
        try:
            disc, u, hbar, res, its = _attempt(spec, scheme, u0, h0, tol)
            return _finish(spec, disc, u, hbar, res, its, "newton")
        except NoConvergence as exc:
            last = exc
            log.info("newton (%s) failed at eps=%g P=%s: %s", scheme, spec.epsilon, spec.P, exc)
        if opts.continuation:
            try:
                disc, u, hbar, res, its = _eps_continuation(spec, scheme, tol)
                return _finish(spec, disc, u, hbar, res, its, "eps-continuation")
            except NoConvergence as exc:
                last = exc
        if opts.discount_fallback:
            try:
                v, lam = _discount_continuation(spec, scheme, u0)
                disc, u, hbar, res, its = _attempt(spec, scheme, v, -lam * v.mean(), tol)
                return _finish(spec, disc, u, hbar, res, its, "discount-continuation")
            except NoConvergence as exc:
                last = exc
    raise NoConvergence(
        f"cell problem did not converge (eps={spec.epsilon}, P={spec.P})",
        residual=getattr(last, "residual", np.nan),
        iterations=getattr(last, "iterations", 0),
    )


def _eps_continuation(spec: CellProblemSpec, scheme: str, tol: float, factor: float = 1.5):
    """Walk epsilon down geometrically from a value where Newton converges from zero."""
    eps_target = spec.epsilon
    eps = eps_target
    u0, h0 = _initial_guess(spec, None)
    # find a starting epsilon
    for _ in range(12):
        eps *= 2.0
        try:
            disc, u, hbar, res, its = _attempt(spec.with_epsilon(eps), scheme, u0, h0, tol)
            break
        except NoConvergence:
            continue
    else:
        raise NoConvergence("no epsilon in the continuation ladder converged")
    total = its
    while eps > eps_target:
        step = factor
        while True:
            trial = max(eps / step, eps_target)
            try:
                disc, u, hbar, res, its = _attempt(spec.with_epsilon(trial), scheme, u, hbar, tol)
                eps = trial
                total += its
                break
            except NoConvergence:
                step = 1 + 0.5 * (step - 1)
                if step < 1.01:
                    raise NoConvergence("epsilon continuation stalled", iterations=total)
    return disc, u, hbar, res, total


# ----------------------------------------------------------------------
# vanishing discount


def _newton_discounted(disc: _Discretization, v0, lam, tol, opts: SolverOptions):
    v = v0.copy()
    disc.refresh_upwind(v)
    F = disc.residual(v, 0.0, lam)
    res = float(np.abs(F).max())
    for it in range(1, opts.max_iter + 1):
        if res <= tol:
            return v, res, it - 1
        step = _solve(disc.jacobian(v, lam), -F.ravel()).reshape(v.shape)
        t = 1.0
        for _ in range(opts.max_halvings):
            v_new = v + t * step
            F_new = disc.residual(v_new, 0.0, lam)
            res_new = float(np.abs(F_new).max())
            if np.isfinite(res_new) and res_new < res * (1 - 1e-4 * t) or res_new <= tol:
                break
            t *= 0.5
        else:
            raise NoConvergence("discounted line search failed", residual=res, iterations=it)
        v, F, res = v_new, F_new, res_new
        if disc.advection == "upwind":
            disc.refresh_upwind(v)
            F = disc.residual(v, 0.0, lam)
            res = float(np.abs(F).max())
    if res <= tol:
        return v, res, opts.max_iter
    raise NoConvergence("discounted Newton did not converge", residual=res, iterations=opts.max_iter)


def solve_discounted(spec: CellProblemSpec, lam: float, initial=None, advection: str = "central") -> np.ndarray:
    """Solve  lam v + H(x, P + Dv) - eps^2/2 Lap v = 0  for v.

    Without an initial guess the solve starts from the constant
    ``-mean H(x, P) / lam`` and, if needed, continues in lambda from a large
    value down to the requested one.
    """
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    tol = spec.options.tolerance(spec.grid.dim)
    disc = _Discretization(spec, advection)
    if initial is not None:
        v0 = spec.grid.check_scalar(initial)
    else:
        h = spec.model.value(spec.grid.coords, spec.P_field * np.ones((1,) + spec.grid.shape))
        v0 = -np.full(spec.grid.shape, h.mean()) / lam
    try:
        return _newton_discounted(disc, v0, lam, tol, spec.options)[0]
    except NoConvergence:
        if initial is not None:
            raise
    v, _ = _discount_continuation(spec, advection, None, lam_final=lam)
    return v


def _discount_continuation(spec, scheme, initial, lam_final: float = 1e-4, lam_start: float = 10.0):
    """lambda-continuation; returns (v^lam, lam) at the smallest lambda reached."""
    tol = spec.options.tolerance(spec.grid.dim)
    disc = _Discretization(spec, scheme)
    lam = max(lam_start, lam_final)
    h = spec.model.value(spec.grid.coords, spec.P_field * np.ones((1,) + spec.grid.shape))
    v = -np.full(spec.grid.shape, h.mean()) / lam if initial is None else initial - h.mean() / lam
    v, _, _ = _newton_discounted(disc, v, lam, tol, spec.options)
    while lam > lam_final:
        new = max(lam / 2, lam_final)
        # shift by the expected change of the constant part
        guess = v * (lam / new) + (v - v.mean()) * (1 - lam / new)
        v, _, _ = _newton_discounted(disc, guess, new, tol, spec.options)
        lam = new
    return v, lam


def discount_sequence(spec: CellProblemSpec, lambdas: Sequence[float], advection: str = "central"):
    """(lam, v^lam) pairs along a decreasing lambda list, each warm-started from the last."""
    lambdas = sorted((float(l) for l in lambdas), reverse=True)
    out = []
    v = None
    prev = None
    for lam in lambdas:
        guess = None if v is None else v * (prev / lam)
        v = solve_discounted(spec, lam, initial=guess, advection=advection)
        out.append((lam, v))
        prev = lam
    return out


# ----------------------------------------------------------------------
# sweeps and P-derivatives


@dataclass(frozen=True)
class SweepRow:
    P: tuple
    hbar: float
    lipschitz: float
    residual: float
    iterations: int
    ok: bool
    message: str = ""


def effective_hamiltonian_sweep(
    model: HamiltonianModel,
    epsilon: float,
    P_list,
    grid: TorusGrid,
    options: SolverOptions | None = None,
) -> list[SweepRow]:
    """One row per P, each solve warm-started from the previous converged u."""
    P_list = [np.atleast_1d(np.asarray(P, dtype=float)) for P in P_list]
    if not P_list:
        raise InvalidArgument("P_list must be nonempty")
    options = options or SolverOptions()
    rows = []
    prev = None
    for P in P_list:
        spec = CellProblemSpec(model, tuple(P), epsilon, grid, options)
        try:
            sol = solve_cell(spec, initial=None if prev is None else prev.u)
        except NoConvergence as exc:
            if prev is None:
                rows.append(SweepRow(tuple(P), np.nan, np.nan, exc.residual, exc.iterations, False, str(exc)))
                continue
            try:
                sol = solve_cell(spec)
            except NoConvergence as exc2:
                rows.append(SweepRow(tuple(P), np.nan, np.nan, exc2.residual, exc2.iterations, False, str(exc2)))
                continue
        rows.append(SweepRow(tuple(P), sol.hbar, sol.lipschitz, sol.residual_inf, sol.iterations, True))
        prev = sol
    return rows


@dataclass(frozen=True)
class PDerivative:
    dPu: np.ndarray  # shape (n,) + grid.shape
    dPhbar: np.ndarray  # shape (n,)
    identity_residual: float
    hP: float


def dP_u(spec: CellProblemSpec, hP: float | None = None, base: CellSolution | None = None) -> PDerivative:
    """Central differences in P of (u, Hbar), and the residual of the differentiated equation.

    The residual reported is the max over axes and nodes of
    ``-D_pH . (e_a + D(dPu_a)) + eps^2/2 Lap(dPu_a) + dPhbar_a``.
    """
    P = np.asarray(spec.P, dtype=float)
    if hP is None:
        hP = 1e-3 * max(1.0, float(np.abs(P).max()))
    base = base or solve_cell(spec)
    grid = spec.grid
    n = grid.dim
    dPu = np.zeros((n,) + grid.shape)
    dPh = np.zeros(n)
    for a in range(n):
        e = np.zeros(n)
        e[a] = hP
        opts = dataclasses.replace(spec.options, advection=base.advection)
        plus = solve_cell(dataclasses.replace(spec.with_P(P + e), options=opts), initial=base.u, hbar_guess=base.hbar)
        minus = solve_cell(dataclasses.replace(spec.with_P(P - e), options=opts), initial=base.u, hbar_guess=base.hbar)
        dPu[a] = (plus.u - minus.u) / (2 * hP)
        dPh[a] = (plus.hbar - minus.hbar) / (2 * hP)
    hp = spec.model.grad_p(grid.coords, base.p)
    D = 0.5 * spec.epsilon**2
    worst = 0.0
    for a in range(n):
        w = grid.gradient(dPu[a]) if base.advection == "central" else _scheme_gradient(base, dPu[a])
        w[a] = w[a] + 1.0
        r = -np.sum(hp * w, axis=0) + D * grid.laplacian(dPu[a]) + dPh[a]
        worst = max(worst, float(np.abs(r).max()))
    return PDerivative(dPu=dPu, dPhbar=dPh, identity_residual=worst, hP=hP)


def _scheme_gradient(sol: CellSolution, f):
    disc = _Discretization(sol.spec, sol.advection)
    disc.refresh_upwind(sol.u)
    return disc.gradient(f)


def cell_residual(spec: CellProblemSpec, u, hbar, advection: str = "central") -> np.ndarray:
    """Node-wise residual of the discrete cell equation for a given (u, Hbar)."""
    disc = _Discretization(spec, advection)
    u = spec.grid.check_scalar(u)
    disc.refresh_upwind(u)
    return disc.residual(u, hbar)
