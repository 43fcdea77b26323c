"""Fixed catalog of smooth phase-space test functions phi(x, p) = f(x) g(p).

x-parts are 8 trigonometric modes; p-parts are the constant 1 and a C^3
polynomial bump ``(1 - |p - c|^2 / R^2)_+^4`` alone and multiplied by ``p_1``.
All derivatives are analytic. Shapes follow the hamiltonians module:
points ``(n, ...)``, gradients ``(n, ...)``, Hessians ``(n, n, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CATALOG_VERSION = 1
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class TrigMode:
    k: tuple
    kind: str  # "cos" or "sin"

    def _parts(self, x):
        k = np.asarray(self.k, dtype=float)
        ph = TWO_PI * np.tensordot(k, np.asarray(x, dtype=float), axes=(0, 0))
        c, s = np.cos(ph), np.sin(ph)
        return k, (c, -s, -c) if self.kind == "cos" else (s, c, -s)

    def value(self, x):
        return self._parts(x)[1][0]

    def grad(self, x):
        k, (_, d1, _) = self._parts(x)
        return TWO_PI * k.reshape((-1,) + (1,) * d1.ndim) * d1

    def hess(self, x):
        k, (_, _, d2) = self._parts(x)
        n = len(k)
        return TWO_PI**2 * np.outer(k, k).reshape((n, n) + (1,) * d2.ndim) * d2


@dataclass(frozen=True)
class PShape:
    """g(p) = 1, bump(p) or p_1 * bump(p)."""

    kind: str  # "one", "bump", "p1-bump"
    center: tuple = (0.0,)
    radius: float = 1.0

    def _bump(self, p):
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        c = np.asarray(self.center, dtype=float).reshape((n,) + (1,) * (p.ndim - 1))
        d = p - c
        s = 1.0 - np.sum(d * d, axis=0) / self.radius**2
        inside = s > 0
        s = np.where(inside, s, 0.0)
        b = s**4
        # grad = 4 s^3 * (-2 d / R^2); hess = 12 s^2 (4 d d^T / R^4) + 4 s^3 (-2 I / R^2)
        grad = -8.0 * s**3 * d / self.radius**2
        eye = np.eye(n).reshape((n, n) + (1,) * (p.ndim - 1))
        hess = 48.0 * s**2 * d[:, None] * d[None, :] / self.radius**4 - 8.0 * s**3 * eye / self.radius**2
        return b, grad, hess

    def value(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "one":
            return np.ones(p.shape[1:])
        b, _, _ = self._bump(p)
        return b if self.kind == "bump" else p[0] * b

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "one":
            return np.zeros(p.shape)
        b, g, _ = self._bump(p)
        if self.kind == "bump":
            return g
        out = p[0] * g
        out[0] = out[0] + b
        return out

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        if self.kind == "one":
            return np.zeros((n, n) + p.shape[1:])
        b, g, h = self._bump(p)
        if self.kind == "bump":
            return h
        out = p[0] * h
        out[0] = out[0] + g
        out[:, 0] = out[:, 0] + g
        return out


@dataclass(frozen=True)
class TestFunction:
    """phi(x, p) = mode(x) * shape(p) with analytic derivatives."""

    __test__ = False  # keep pytest from collecting this class

    mode: TrigMode
    shape: PShape

    @property
    def name(self) -> str:
        return f"{self.mode.kind}{list(self.mode.k)}*{self.shape.kind}"

    @property
    def p_independent(self) -> bool:
        return self.shape.kind == "one"

    def value(self, x, p):
        return self.mode.value(x) * self.shape.value(p)

    def grad_x(self, x, p):
        return self.mode.grad(x) * self.shape.value(p)

    def grad_p(self, x, p):
        return self.mode.value(x) * self.shape.grad(p)

    def hess_xx(self, x, p):
        return self.mode.hess(x) * self.shape.value(p)

    def hess_xp(self, x, p):
        """Entry [i, j] is d^2 phi / dx_i dp_j."""
        gx = self.mode.grad(x)
        gp = self.shape.grad(p)
        return gx[:, None] * gp[None, :]

    def hess_pp(self, x, p):
        return self.mode.value(x) * self.shape.hess(p)


def trig_modes(dim: int) -> list[TrigMode]:
    if dim == 1:
        ks = [(1,), (2,), (3,), (4,)]
    else:
        ks = [(1, 0), (0, 1), (1, 1), (1, -1)]
    return [TrigMode(k, kind) for k in ks for kind in ("cos", "sin")]


def catalog(dim: int, center=None, radius: float = 1.0) -> list[TestFunction]:
    """The 8 x-modes times the 3 p-shapes (24 functions)."""
    center = tuple(np.zeros(dim)) if center is None else tuple(np.atleast_1d(center).astype(float))
    shapes = [PShape("one", center, radius), PShape("bump", center, radius), PShape("p1-bump", center, radius)]
    return [TestFunction(m, s) for s in shapes for m in trig_modes(dim)]


def x_only(dim: int) -> list[TestFunction]:
    return [TestFunction(m, PShape("one", tuple(np.zeros(dim)))) for m in trig_modes(dim)]
