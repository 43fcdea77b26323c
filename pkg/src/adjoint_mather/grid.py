"""Uniform periodic grids on T^1 and T^2 with finite-difference operators.

Field conventions (plain numpy arrays):

* scalar field: shape ``grid.shape``
* vector field: shape ``(n,) + grid.shape``, component axis first
* symmetric-matrix field: shape ``(n, n) + grid.shape``

Flattening for sparse operators is C order over ``grid.shape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, InvalidDensity

MIN_NODES = 8


@dataclass(frozen=True)
class TorusGrid:
    resolution: tuple[int, ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        res = tuple(int(n) for n in np.atleast_1d(self.resolution))
        if len(res) not in (1, 2):
            raise InvalidArgument(f"only 1D and 2D tori are supported, got dim={len(res)}")
        if min(res) < MIN_NODES:
            raise InvalidArgument(f"every axis needs at least {MIN_NODES} nodes, got {res}")
        object.__setattr__(self, "resolution", res)

    @classmethod
    def uniform(cls, n: int, dim: int = 1) -> "TorusGrid":
        return cls((n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / n for n in self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [np.arange(n) / n for n in self.resolution]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates as a vector field, shape ``(n,) + shape``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    # ------------------------------------------------------------------
    # checks

    def check_scalar(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise InvalidArgument(f"expected scalar field of shape {self.shape}, got {f.shape}")
        return f

    def check_vector(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.dim,) + self.shape:
            raise InvalidArgument(
                f"expected vector field of shape {(self.dim,) + self.shape}, got {f.shape}"
            )
        return f

    # ------------------------------------------------------------------
    # array stencils

    def gradient(self, f, mode: str = "central"):
        """Per-axis difference quotients with periodic wrap.

        ``mode="central"`` returns a vector field; ``mode="upwind-pair"``
        returns ``(forward, backward)`` one-sided difference fields.
        """
        f = self.check_scalar(f)
        if mode == "central":
            return np.stack(
                [(np.roll(f, -1, a) - np.roll(f, 1, a)) / (2 * h) for a, h in enumerate(self.spacing)]
            )
        if mode == "upwind-pair":
            fwd = np.stack([(np.roll(f, -1, a) - f) / h for a, h in enumerate(self.spacing)])
            bwd = np.stack([(f - np.roll(f, 1, a)) / h for a, h in enumerate(self.spacing)])
            return fwd, bwd
        raise InvalidArgument(f"unknown gradient mode {mode!r}")

    def laplacian(self, f) -> np.ndarray:
        f = self.check_scalar(f)
        out = np.zeros_like(f)
        for a, h in enumerate(self.spacing):
            out += (np.roll(f, -1, a) - 2 * f + np.roll(f, 1, a)) / h**2
        return out

    def hessian(self, f) -> np.ndarray:
        """Central difference of the central gradient, symmetrized.

        Uses the wide (2h) stencil on the diagonal so that every entry is the
        composition of the same first-difference operators; a field depending
        only on ``x1 + x2`` then has exactly equal rows.
        """
        df = self.gradient(f)
        hess = np.stack([self.gradient(df[k]) for k in range(self.dim)])
        return 0.5 * (hess + np.swapaxes(hess, 0, 1))

    def divergence(self, v) -> np.ndarray:
        v = self.check_vector(v)
        return sum(
            (np.roll(v[a], -1, a) - np.roll(v[a], 1, a)) / (2 * h) for a, h in enumerate(self.spacing)
        )

    def integrate(self, f, density=None) -> float:
        """Trapezoid (node-sum) quadrature of ``f`` against ``density`` or Lebesgue."""
        f = self.check_scalar(f)
        if density is None:
            return float(f.sum() * self.cell_volume)
        density = self.check_scalar(density)
        if density.min() < -1e-12:
            raise InvalidDensity(f"density has negative entries (min {density.min():.3e})")
        return float((f * density).sum() * self.cell_volume)

    def interpolate(self, f, points) -> np.ndarray:
        """Periodic (bi)linear interpolation of a scalar field at ``points`` (shape (n, M))."""
        f = self.check_scalar(f)
        points = np.asarray(points, dtype=float).reshape(self.dim, -1)
        base = []
        frac = []
        for a, n in enumerate(self.resolution):
            s = np.mod(points[a], 1.0) * n
            i0 = np.floor(s).astype(int)
            frac.append(s - i0)
            base.append(i0 % n)
        if self.dim == 1:
            (i,), (t,) = base, frac
            n = self.resolution[0]
            return (1 - t) * f[i] + t * f[(i + 1) % n]
        (i, j), (t, s) = base, frac
        n1, n2 = self.resolution
        i1, j1 = (i + 1) % n1, (j + 1) % n2
        return (
            (1 - t) * (1 - s) * f[i, j]
            + t * (1 - s) * f[i1, j]
            + (1 - t) * s * f[i, j1]
            + t * s * f[i1, j1]
        )

    # ------------------------------------------------------------------
    # sparse operators (cached per grid)

    def _axis_op(self, axis: int, stencil: dict[int, float]) -> sp.csr_matrix:
        n = self.resolution[axis]
        one_d = sp.csr_matrix((n, n))
        for offset, weight in stencil.items():
            one_d = one_d + weight * _shift_matrix(n, offset)
        mats = [sp.identity(m, format="csr") for m in self.resolution]
        mats[axis] = one_d
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return out.tocsr()

    def diff_matrix(self, axis: int, kind: str = "central") -> sp.csr_matrix:
        key = ("diff", axis, kind)
        if key not in self._cache:
            h = self.spacing[axis]
            stencils = {
                "central": {1: 1 / (2 * h), -1: -1 / (2 * h)},
                "forward": {1: 1 / h, 0: -1 / h},
                "backward": {0: 1 / h, -1: -1 / h},
            }
            if kind not in stencils:
                raise InvalidArgument(f"unknown difference kind {kind!r}")
            self._cache[key] = self._axis_op(axis, stencils[kind])
        return self._cache[key]

    def laplacian_matrix(self) -> sp.csr_matrix:
        key = ("lap",)
        if key not in self._cache:
            ops = [
                self._axis_op(a, {1: 1 / h**2, 0: -2 / h**2, -1: 1 / h**2})
                for a, h in enumerate(self.spacing)
            ]
            self._cache[key] = sum(ops[1:], ops[0]).tocsr()
        return self._cache[key]


def _shift_matrix(n: int, offset: int) -> sp.csr_matrix:
    """Matrix S with (S f)_i = f_{i+offset mod n}."""
    rows = np.arange(n)
    cols = (rows + offset) % n
    return sp.csr_matrix((np.ones(n), (rows, cols)), shape=(n, n))
