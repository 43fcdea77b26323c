"""Catalog of periodic Hamiltonians H(x, p) with analytic derivatives.

Evaluators take ``x`` and ``p`` with the component axis first, shape
``(n, ...)``, and broadcast over the trailing axes. ``value`` returns shape
``(...)``, ``grad_p``/``grad_x`` return ``(n, ...)`` and ``hess_pp`` returns
``(n, n, ...)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidProfile, InvalidShape

TWO_PI = 2.0 * np.pi

ConvexityClass = Literal["uniformly-convex", "quasiconvex", "nonconvex", "unknown"]


# ----------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSpec:
    """Smooth Z^n-periodic potential.

    ``kind`` is one of

    * ``"constant"``: ``coefficients = [c]``
    * ``"cosine"``: ``[A]`` or ``[A, c]``, ``V = c + A * sum_a cos(2 pi x_a)``
    * ``"trig-polynomial"``: rows ``[k_1, ..., k_n, a, b]`` for the term
      ``a cos(2 pi k.x) + b sin(2 pi k.x)``
    * ``"tabulated-smooth"``: uniform samples on ``[0,1)^n``, converted to
      their trigonometric interpolant
    """

    kind: str
    coefficients: Sequence = (0.0,)
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "cosine", "trig-polynomial", "tabulated-smooth"):
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "_terms", self._build_terms())

    def _build_terms(self):
        n = self.dim
        coeffs = self.coefficients
        if self.kind == "constant":
            return [(np.zeros(n), float(coeffs[0]), 0.0)]
        if self.kind == "cosine":
            amp = float(coeffs[0])
            const = float(coeffs[1]) if len(coeffs) > 1 else 0.0
            terms = [(np.eye(n)[a], amp, 0.0) for a in range(n)]
            return terms + [(np.zeros(n), const, 0.0)]
        if self.kind == "trig-polynomial":
            rows = np.atleast_2d(np.asarray(coeffs, dtype=float))
            if rows.shape[1] != n + 2:
                raise InvalidArgument(f"trig-polynomial rows need {n + 2} entries")
            return [(row[:n], row[n], row[n + 1]) for row in rows]
        samples = np.asarray(coeffs, dtype=float)
        if samples.ndim != n:
            raise InvalidArgument("tabulated samples must have one axis per dimension")
        return _trig_interpolant(samples)

    @property
    def terms(self):
        return self._terms

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        return [(k, a, b, TWO_PI * np.tensordot(k, x, axes=(0, 0))) for k, a, b in self._terms]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[1:])
        for _, a, b, ph in self._phases(x):
            out = out + a * np.cos(ph) + b * np.sin(ph)
        return out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, a, b, ph in self._phases(x):
            d = TWO_PI * (-a * np.sin(ph) + b * np.cos(ph))
            out = out + k.reshape((-1,) + (1,) * (x.ndim - 1)) * d
        return out

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        out = np.zeros((n, n) + x.shape[1:])
        for k, a, b, ph in self._phases(x):
            d = -(TWO_PI**2) * (a * np.cos(ph) + b * np.sin(ph))
            out = out + np.outer(k, k).reshape((n, n) + (1,) * (x.ndim - 1)) * d
        return out

    def bounds(self) -> tuple[float, float]:
        """(min, max) estimated on a dense sample."""
        m = 256 if self.dim == 1 else 96
        axes = [np.arange(m) / m] * self.dim
        vals = self.value(np.stack(np.meshgrid(*axes, indexing="ij")))
        return float(vals.min()), float(vals.max())


def _trig_interpolant(samples: np.ndarray, cutoff: float = 1e-14):
    coef = np.fft.fftn(samples) / samples.size
    terms = []
    shape = samples.shape
    for idx in np.ndindex(*shape):
        k = np.array([i if i <= s // 2 else i - s for i, s in zip(idx, shape)], dtype=float)
        c = coef[idx]
        if abs(c) < cutoff:
            continue
        # sum over +-k of c e^{2 pi i k.x} = 2 Re(c) cos - 2 Im(c) sin, halved here per term
        terms.append((k, float(c.real), float(-c.imag)))
    return terms


# ----------------------------------------------------------------------
# one-dimensional profiles


@dataclass(frozen=True)
class Profile:
    """f(s) = sum_k c_k s^k + sine * sin(s)."""

    coefficients: Sequence[float]
    sine: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "_poly", np.polynomial.Polynomial(c))

    def __call__(self, s):
        return self._poly(s) + self.sine * np.sin(s)

    def d1(self, s):
        return self._poly.deriv(1)(s) + self.sine * np.cos(s)

    def d2(self, s):
        return self._poly.deriv(2)(s) - self.sine * np.sin(s)

    def d3(self, s):
        return self._poly.deriv(3)(s) - self.sine * np.cos(s)


# ----------------------------------------------------------------------
# model


@dataclass(frozen=True)
class HamiltonianModel:
    dim: int
    value: Callable
    grad_p: Callable
    grad_x: Callable
    hess_pp: Callable
    convexity_class: ConvexityClass = "unknown"
    momentum_bound_hint: float = 4.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x, p):
        return self.value(x, p)

    def with_hint(self, bound: float) -> "HamiltonianModel":
        return dataclasses.replace(self, momentum_bound_hint=float(bound))

    def poisson(self, x, p, f_grad_x, f_grad_p):
        """{F, H} = D_pF . D_xH - D_xF . D_pH for a function with the given gradients."""
        return np.sum(f_grad_p * self.grad_x(x, p) - f_grad_x * self.grad_p(x, p), axis=0)


def _norm(p):
    return np.sqrt(np.sum(p * p, axis=0))


def _eye(n, like):
    return np.eye(n).reshape((n, n) + (1,) * (np.ndim(like) - 1)) * np.ones_like(like[0])


def _outer(a, b):
    return a[:, None] * b[None, :]


def make_mechanical(V: PotentialSpec) -> HamiltonianModel:
    """H = |p|^2 / 2 + V(x)."""
    n = V.dim
    vmin, vmax = V.bounds()
    return HamiltonianModel(
        dim=n,
        value=lambda x, p: 0.5 * np.sum(p * p, axis=0) + V.value(x),
        grad_p=lambda x, p: np.array(p, dtype=float) * np.ones_like(np.asarray(x, dtype=float)[:1]),
        grad_x=lambda x, p: V.gradient(x) * np.ones_like(np.asarray(p, dtype=float)[:1]),
        hess_pp=lambda x, p: _eye(n, np.asarray(p, dtype=float)),
        convexity_class="uniformly-convex",
        momentum_bound_hint=1.5 * (np.sqrt(2 * (vmax - vmin)) + 2.0),
        name="mechanical",
        params={"V": V},
    )


def make_quasiconvex_square(V: PotentialSpec) -> HamiltonianModel:
    """H = (|p|^2 + V(x))^2."""
    n = V.dim
    vmin, vmax = V.bounds()

    def phi(x, p):
        return np.sum(p * p, axis=0) + V.value(x)

    def hess(x, p):
        p = np.asarray(p, dtype=float)
        return 4 * phi(x, p) * _eye(n, p) + 8 * _outer(p, p)

    return HamiltonianModel(
        dim=n,
        value=lambda x, p: phi(x, p) ** 2,
        grad_p=lambda x, p: 4 * phi(x, p) * np.asarray(p, dtype=float),
        grad_x=lambda x, p: 2 * phi(x, p) * V.gradient(x),
        hess_pp=hess,
        convexity_class="uniformly-convex" if vmin > 0 else "quasiconvex",
        momentum_bound_hint=1.5 * (np.sqrt(abs(vmax - vmin)) + 2.0),
        name="quasiconvex-square",
        params={"V": V},
    )


def make_radial(profile: Profile, V: PotentialSpec, s_max: float = 4.0) -> HamiltonianModel:
    """H = Hr(|p|) + V(x) with Hr'(0) = 0, Hr''(0) > 0, Hr'(s) > 0 for s > 0.

    The sign conditions are checked on a sample of ``(0, s_max]``.
    """
    s = np.linspace(0.0, s_max, 2001)[1:]
    if abs(profile.d1(0.0)) > 1e-12:
        raise InvalidProfile("radial profile needs Hr'(0) = 0")
    if profile.d2(0.0) <= 0:
        raise InvalidProfile("radial profile needs Hr''(0) > 0")
    bad = s[profile.d1(s) <= 0]
    if bad.size:
        raise InvalidProfile(f"radial profile has Hr'(s) <= 0 at s = {bad[0]:.4g}")
    n = V.dim
    h2_0 = float(profile.d2(0.0))
    small = 1e-7

    def ratio(r):
        # Hr'(r)/r with its r -> 0 limit
        safe = np.where(r > small, r, 1.0)
        return np.where(r > small, profile.d1(safe) / safe, h2_0 + 0.5 * profile.d3(0.0) * r)

    def grad_p(x, p):
        p = np.asarray(p, dtype=float)
        return ratio(_norm(p)) * p

    def hess(x, p):
        p = np.asarray(p, dtype=float)
        r = _norm(p)
        q = ratio(r)
        safe = np.where(r > small, r, 1.0)
        radial = np.where(r > small, (profile.d2(r) - q) / safe**2, 0.0)
        return q * _eye(n, p) + radial * _outer(p, p)

    convex = bool(np.all(profile.d2(s) > 0))
    return HamiltonianModel(
        dim=n,
        value=lambda x, p: profile(_norm(np.asarray(p, dtype=float))) + V.value(x),
        grad_p=grad_p,
        grad_x=lambda x, p: V.gradient(x) * np.ones_like(np.asarray(p, dtype=float)[:1]),
        hess_pp=hess,
        convexity_class="uniformly-convex" if convex else "quasiconvex",
        momentum_bound_hint=min(s_max, 1.5 * _sublevel_radius(profile, V, s_max)),
        name="radial",
        params={"profile": profile, "V": V, "s_max": s_max},
    )


def _sublevel_radius(profile: Profile, V: PotentialSpec, s_max: float) -> float:
    vmin, vmax = V.bounds()
    s = np.linspace(0, s_max, 4001)
    level = profile(s) + vmin
    inside = s[level <= float(profile(0.0)) + vmax + 1.0]
    return float(inside.max()) if inside.size else s_max


def make_1d_nonconvex(profile: Profile, V: PotentialSpec) -> HamiltonianModel:
    """H(x, p) = Hp(p) + V(x) in one dimension."""
    if V.dim != 1:
        raise InvalidArgument("make_1d_nonconvex is one-dimensional")
    s = np.linspace(-4, 4, 4001)
    convex = bool(np.all(profile.d2(s) > 0))
    return HamiltonianModel(
        dim=1,
        value=lambda x, p: profile(np.asarray(p, dtype=float)[0]) + V.value(x),
        grad_p=lambda x, p: profile.d1(np.asarray(p, dtype=float)),
        grad_x=lambda x, p: V.gradient(x) * np.ones_like(np.asarray(p, dtype=float)),
        hess_pp=lambda x, p: profile.d2(np.asarray(p, dtype=float))[None],
        convexity_class="uniformly-convex" if convex else "nonconvex",
        momentum_bound_hint=3.0,
        name="onedim-nonconvex",
        params={"profile": profile, "V": V},
    )


def make_nonuniqueness(psi: PotentialSpec) -> HamiltonianModel:
    """H = p . (p - D psi(x)); at P = 0 both u = 0 and u = psi solve the cell problem."""
    n = psi.dim

    def grad_x(x, p):
        p = np.asarray(p, dtype=float)
        return -np.einsum("ij...,j...->i...", psi.hessian(x) * np.ones_like(p[:1, None]), p)

    return HamiltonianModel(
        dim=n,
        value=lambda x, p: np.sum(p * (p - psi.gradient(x)), axis=0),
        grad_p=lambda x, p: 2 * np.asarray(p, dtype=float) - psi.gradient(x),
        grad_x=grad_x,
        hess_pp=lambda x, p: 2 * _eye(n, np.asarray(p, dtype=float)),
        convexity_class="uniformly-convex",
        momentum_bound_hint=1.5 * (np.abs(psi.gradient(np.linspace(0, 1, 257)[None] * np.ones((n, 1)))).max() + 2),
        name="nonuniqueness",
        params={"psi": psi},
    )


def make_conserved_sum(profiles: Sequence[Profile], V1: PotentialSpec) -> HamiltonianModel:
    """H = H1(p1) + H2(p2) + V1(x1 + x2) on T^2; p1 - p2 is conserved."""
    if len(profiles) != 2 or V1.dim != 1:
        raise InvalidArgument("conserved-sum needs two p-profiles and a 1D potential")
    f1, f2 = profiles
    s = np.linspace(-4, 4, 4001)
    convex = bool(np.all(f1.d2(s) > 1e-12) and np.all(f2.d2(s) > 1e-12))

    def sumx(x):
        x = np.asarray(x, dtype=float)
        return (x[0] + x[1])[None]

    def grad_p(x, p):
        p = np.asarray(p, dtype=float)
        return np.stack([f1.d1(p[0]), f2.d1(p[1])])

    def hess(x, p):
        p = np.asarray(p, dtype=float)
        zero = np.zeros_like(p[0])
        return np.array([[f1.d2(p[0]), zero], [zero, f2.d2(p[1])]])

    def grad_x(x, p):
        dv = V1.gradient(sumx(x))[0] * np.ones_like(np.asarray(p, dtype=float)[0])
        return np.stack([dv, dv])

    return HamiltonianModel(
        dim=2,
        value=lambda x, p: f1(np.asarray(p)[0]) + f2(np.asarray(p)[1]) + V1.value(sumx(x)),
        grad_p=grad_p,
        grad_x=grad_x,
        hess_pp=hess,
        convexity_class="uniformly-convex" if convex else "quasiconvex",
        momentum_bound_hint=3.0,
        name="conserved-sum",
        params={"profiles": tuple(profiles), "V1": V1},
    )


# ----------------------------------------------------------------------
# counterexample family


@dataclass(frozen=True)
class LevelSetReport:
    min_gradient: float
    argmin: tuple[float, float]
    branch_counts: np.ndarray
    non_graphical_fraction: float
    p_extent: tuple[float, float]


def make_counterexample(
    shift: PotentialSpec,
    well: PotentialSpec,
    radius: float = 1.0,
    tilt: float = 0.0,
    level: float = 0.0,
    check: bool = True,
    n_samples: int = 4000,
    min_gradient: float = 1e-3,
) -> HamiltonianModel:
    """H(x, p) = ((p - c(x))^2 - r^2)^2 + tilt (p - c(x)) - a(x), one-dimensional.

    ``shift`` gives c(x) and ``well`` gives a(x). For a tilted double well the
    level set {H = level} is S-shaped: where a(x) + level lies between the
    higher well bottom and the central hump there are four roots in p, and
    the two fold lines are crossed as x goes around the circle.

    With ``check=True`` the level set is densely sampled and the model is
    rejected when it is graphical over every x or when (D_xH, D_pH) nearly
    vanishes on it (an equilibrium).
    """
    if shift.dim != 1 or well.dim != 1:
        raise InvalidArgument("counterexample is one-dimensional")
    r2 = float(radius) ** 2
    tilt = float(tilt)

    def q(x, p):
        return np.asarray(p, dtype=float)[0] - shift.value(x)

    def value(x, p):
        qq = q(x, p)
        return (qq**2 - r2) ** 2 + tilt * qq - well.value(x)

    def dq(qq):
        return 4 * (qq**2 - r2) * qq + tilt

    def grad_p(x, p):
        return dq(q(x, p))[None]

    def grad_x(x, p):
        return (-dq(q(x, p)) * shift.gradient(x)[0] - well.gradient(x)[0])[None]

    def hess(x, p):
        qq = q(x, p)
        return (4 * (3 * qq**2 - r2))[None, None]

    amin, amax = well.bounds()
    cmin, cmax = shift.bounds()
    extent = np.sqrt(r2 + np.sqrt(max(amax + abs(level), 0.0)) + abs(tilt)) + 1.0
    model = HamiltonianModel(
        dim=1,
        value=value,
        grad_p=grad_p,
        grad_x=grad_x,
        hess_pp=hess,
        convexity_class="nonconvex",
        momentum_bound_hint=1.5 * (extent + max(abs(cmin), abs(cmax))),
        name="counterexample",
        params={"shift": shift, "well": well, "radius": float(radius), "tilt": tilt, "level": float(level)},
    )
    if check:
        report = counterexample_level_set(model, n_samples=n_samples)
        empty = np.nonzero(report.branch_counts == 0)[0]
        if empty.size:
            x_bad = (empty[0] + 0.5) / n_samples
            raise InvalidShape("level set is empty over some x", offending=(float(x_bad), float("nan")))
        if report.non_graphical_fraction <= 0:
            raise InvalidShape("level set is graphical over every x")
        if report.min_gradient < min_gradient:
            raise InvalidShape(
                f"near-equilibrium on the level set: |DH| = {report.min_gradient:.3e}",
                offending=report.argmin,
            )
        model.params["level_set"] = report
    return model


def _quartic_roots(model: HamiltonianModel, xs: np.ndarray, level: float) -> list[np.ndarray]:
    """Real roots q of q^4 - 2 r^2 q^2 + tilt q + (r^4 - a(x) - level) for each x."""
    r2 = model.params["radius"] ** 2
    tilt = model.params["tilt"]
    a = model.params["well"].value(xs[None])
    size = xs.size
    comp = np.zeros((size, 4, 4))
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    comp[:, 0, 1] = 2 * r2
    comp[:, 0, 2] = -tilt
    comp[:, 0, 3] = -(r2**2 - a - level)
    eig = np.linalg.eigvals(comp)
    out = []
    for row in eig:
        real = np.sort(row.real[np.abs(row.imag) < 1e-9])
        out.append(real)
    return out


def level_set_branches(model: HamiltonianModel, x, level: Optional[float] = None) -> list[np.ndarray]:
    """Sorted real roots p of H(x, p) = level for each x (quartic family)."""
    level = model.params["level"] if level is None else level
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    c = model.params["shift"].value(xs[None])
    return [qs + ci for qs, ci in zip(_quartic_roots(model, xs, level), c)]


def counterexample_level_set(model: HamiltonianModel, n_samples: int = 4000) -> LevelSetReport:
    """Dense sampling of {H = level}: root counts, non-graphical fraction and min |D_xH| + |D_pH|."""
    level = model.params["level"]
    xs = (np.arange(n_samples) + 0.5) / n_samples
    roots = level_set_branches(model, xs, level)
    counts = np.array([len(r) for r in roots])
    px = np.concatenate([np.full(len(r), x) for x, r in zip(xs, roots)])
    pp = np.concatenate(roots)
    if pp.size == 0:
        nan = float("nan")
        return LevelSetReport(nan, (nan, nan), counts, 0.0, (nan, nan))
    grad = np.abs(model.grad_x(px[None], pp[None])[0]) + np.abs(model.grad_p(px[None], pp[None])[0])
    i = int(np.argmin(grad))
    return LevelSetReport(
        min_gradient=float(grad[i]),
        argmin=(float(px[i]), float(pp[i])),
        branch_counts=counts,
        non_graphical_fraction=float(np.mean(counts >= 3)),
        p_extent=(float(pp.min()), float(pp.max())),
    )


def rightward_branch(model: HamiltonianModel, n_samples: int = 4000, level: Optional[float] = None):
    """Piecewise-continuous selection g(x) of the level set with D_pH(x, g) < 0.

    Marches x around the circle twice, continuing the current root while it
    exists and jumping to the other D_pH < 0 root when it disappears at a
    fold. Returns (x, g, jump_locations). ``int g`` is the P at which the
    viscous solutions rotate through the fold jump with Hbar -> level.
    """
    level = model.params["level"] if level is None else level
    xs = (np.arange(n_samples) + 0.5) / n_samples
    roots = level_set_branches(model, xs, level)
    dx = 1.0 / n_samples
    g = np.empty(n_samples)
    jumps = []
    current = None
    for lap in range(2):
        for i, x in enumerate(xs):
            r = roots[i]
            hp = model.grad_p(np.full((1, r.size), x), r[None])[0]
            cand = r[hp < 0]
            if cand.size == 0:
                raise InvalidShape("no D_pH < 0 branch at some x", offending=(float(x), float("nan")))
            if current is None:
                current = cand[0]
            k = int(np.argmin(np.abs(cand - current)))
            # a continuous branch moves O(dx) per step (O(sqrt(dx)) near a fold)
            if abs(cand[k] - current) > 20 * np.sqrt(dx) and lap == 1:
                jumps.append(float(x))
            current = cand[k]
            if lap == 1:
                g[i] = current
    return xs, g, jumps


# ----------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class H3Scan:
    radii: np.ndarray
    values: np.ndarray
    grows: bool


def h3_scan(model: HamiltonianModel, radii, x_samples=None, n_directions: int = 64) -> H3Scan:
    """min over x-samples and |p| = R of 1/2 |H|^2 + D_xH . p, for each radius R."""
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise InvalidArgument("radii must be increasing")
    n = model.dim
    if x_samples is None:
        m = 64 if n == 1 else 16
        axes = [np.arange(m) / m] * n
        x_samples = np.stack(np.meshgrid(*axes, indexing="ij")).reshape(n, -1)
    x_samples = np.asarray(x_samples, dtype=float).reshape(n, -1)
    if n == 1:
        dirs = np.array([[1.0, -1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, n_directions, endpoint=False)
        # include the diagonals exactly
        ang = np.union1d(ang, np.pi / 4 * np.arange(8))
        dirs = np.stack([np.cos(ang), np.sin(ang)])
    values = []
    for R in radii:
        xx = np.repeat(x_samples, dirs.shape[1], axis=1)
        pp = np.tile(R * dirs, (1, x_samples.shape[1]))
        h = model.value(xx, pp)
        q = 0.5 * h**2 + np.sum(model.grad_x(xx, pp) * pp, axis=0)
        values.append(float(q.min()))
    values = np.array(values)
    return H3Scan(radii, values, bool(np.all(np.diff(values) > 0)))


def _sample_points(model: HamiltonianModel, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    x = rng.random((model.dim, n))
    p = rng.uniform(-1, 1, (model.dim, n)) * min(model.momentum_bound_hint, 3.0)
    return x, p


def check_derivatives(model: HamiltonianModel, n: int = 100, step: float = 1e-5, rng=None) -> dict:
    """Max relative error of the analytic derivatives against central finite differences."""
    rng = np.random.default_rng(0) if rng is None else rng
    x, p = _sample_points(model, n, rng)
    d = model.dim
    fd_p = np.zeros((d, n))
    fd_x = np.zeros((d, n))
    fd_pp = np.zeros((d, d, n))
    for a in range(d):
        e = np.zeros((d, 1))
        e[a] = step
        fd_p[a] = (model.value(x, p + e) - model.value(x, p - e)) / (2 * step)
        fd_x[a] = (model.value(x + e, p) - model.value(x - e, p)) / (2 * step)
        fd_pp[:, a] = (model.grad_p(x, p + e) - model.grad_p(x, p - e)) / (2 * step)

    def rel(an, fd):
        return float(np.max(np.abs(an - fd) / np.maximum(1.0, np.abs(an))))

    return {
        "grad_p": rel(model.grad_p(x, p), fd_p),
        "grad_x": rel(model.grad_x(x, p), fd_x),
        "hess_pp": rel(model.hess_pp(x, p), fd_pp),
    }


def check_periodicity(model: HamiltonianModel, n: int = 100, rng=None) -> float:
    rng = np.random.default_rng(1) if rng is None else rng
    x, p = _sample_points(model, n, rng)
    base = model.value(x, p)
    worst = 0.0
    for a in range(model.dim):
        e = np.zeros((model.dim, 1))
        e[a] = 1.0
        worst = max(worst, float(np.max(np.abs(model.value(x + e, p) - base))))
    return worst
