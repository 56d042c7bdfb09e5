"""2D spatial discretizations on [-1,1]^2 with homogeneous Dirichlet data.

Two interchangeable backends:

* "fd": uniform grid, 5-point Laplacian, sparse factorized solves with a
  conjugate-gradient fallback for pointwise-varying diagonal shifts;
* "cheb": Chebyshev-Gauss-Lobatto collocation, dense squared
  differentiation matrices, Clenshaw-Curtis quadrature.

Unknowns are interior values in row-major order (x index slow, y fast);
boundary values are eliminated, so every field is implicitly zero on the
boundary. Norm and energy quadratures treat the boundary accordingly.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve as dense_solve
from scipy.sparse import eye as speye, identity, kron as spkron, diags
from scipy.sparse.linalg import LinearOperator, cg, splu

__all__ = ["Field", "build_space", "solve_shifted", "norms", "energy",
           "interior_grid", "field_to_csv"]

_CACHE_MAX = 16


@dataclass
class Field:
    """Interior grid function (row-major, homogeneous Dirichlet)."""
    backend: str
    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


def _cheb_diff(n):
    """Differentiation matrix on the n+1 Gauss-Lobatto points.

    Standard closed-form entries; the diagonal is set to the negated
    off-diagonal row sum, which is the numerically preferred variant.
    """
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    xd = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (xd + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return d, x


def _clencurt(n):
    """Clenshaw-Curtis weights on the n+1 Gauss-Lobatto points."""
    theta = np.pi * np.arange(1, n) / n
    v = np.ones(n - 1)
    if n % 2 == 0:
        w_end = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4.0 * k * k - 1.0)
        v -= np.cos(n * theta) / (n * n - 1.0)
    else:
        w_end = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4.0 * k * k - 1.0)
    w = np.empty(n + 1)
    w[0] = w[-1] = w_end
    w[1:-1] = 2.0 * v / n
    return w


class _SpaceBase:
    def field(self, values) -> Field:
        vals = np.asarray(values, dtype=float)
        if vals.shape == (self.m, self.m):
            vals = vals.ravel()
        if vals.shape != (self.m * self.m,):
            raise ValueError("values shape does not match the grid")
        return Field(self.backend, self.n, vals)

    def field_from_fn(self, f) -> Field:
        xg, yg = interior_grid(self)
        return self.field(f(xg, yg))

    def _check(self, field: Field):
        if field.backend != self.backend or field.n != self.n:
            raise ValueError("field belongs to a different grid")

    @staticmethod
    def _shift_key(c, theta):
        # round to 14 significant digits so shifts that differ only by
        # accumulated roundoff reuse one factorization
        return ("%.13e" % c, "%.13e" % theta)

    def _cache_get(self, key):
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
        return hit

    def _cache_put(self, key, val):
        self._cache[key] = val
        if len(self._cache) > _CACHE_MAX:
            self._cache.popitem(last=False)


class FdSpace(_SpaceBase):
    """Uniform 5-point grid: spacing 2/n, (n-1)^2 interior unknowns."""
    backend = "fd"

    def __init__(self, n):
        self.n = n
        self.m = n - 1
        self._cache = OrderedDict()
        self.h = 2.0 / n
        self.xs = -1.0 + self.h * np.arange(1, n)
        t = diags([1.0, -2.0, 1.0], [-1, 0, 1],
                  shape=(self.m, self.m)) / self.h ** 2
        eye_m = identity(self.m)
        self.lap = (spkron(t, eye_m) + spkron(eye_m, t)).tocsr()

    def apply_lap(self, values):
        return self.lap @ values

    def solve(self, c, theta, rhs, diag=None):
        size = self.m * self.m
        if diag is None:
            key = self._shift_key(c, theta)
            fac = self._cache_get(key)
            if fac is None:
                mat = (c * speye(size) - theta * self.lap).tocsc()
                fac = splu(mat)
                self._cache_put(key, fac)
            return fac.solve(rhs)
        # pointwise shift: matrix changes every step, factorizing would
        # be wasted; Jacobi-preconditioned CG instead
        shift = c + diag
        adiag = shift + theta * 4.0 / self.h ** 2
        mv = lambda v: shift * v - theta * (self.lap @ v)
        aop = LinearOperator((size, size), matvec=mv)
        prec = LinearOperator((size, size), matvec=lambda v: v / adiag)
        nb = np.linalg.norm(rhs)
        v, info = cg(aop, rhs, rtol=1e-14, atol=1e-13 * nb, M=prec,
                     maxiter=20 * size)
        if info != 0:
            raise RuntimeError("shifted CG did not converge (info=%d); "
                               "the diagonal shift may make the system "
                               "indefinite" % info)
        return v

    def h1_semi_sq(self, values):
        # all lattice edges with the Dirichlet zeros padded in; each
        # difference quotient is centered at an edge midpoint, so this
        # is the midpoint rule for int |grad u|^2 (second order)
        full = np.zeros((self.n + 1, self.n + 1))
        full[1:-1, 1:-1] = values.reshape(self.m, self.m)
        return float(np.sum(np.diff(full, axis=0) ** 2)
                     + np.sum(np.diff(full, axis=1) ** 2))

    def l2_sq(self, values):
        return self.h ** 2 * float(values @ values)

    def potential_integral(self, values, potential):
        # trapezoid tensor weights over the full grid; boundary nodes
        # carry the Dirichlet value 0
        w1 = np.full(self.n + 1, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        full = np.zeros((self.n + 1, self.n + 1))
        full[1:-1, 1:-1] = values.reshape(self.m, self.m)
        return float(np.einsum("i,j,ij->", w1, w1, potential(full)))


class ChebSpace(_SpaceBase):
    """Gauss-Lobatto collocation: n+1 points per dimension."""
    backend = "cheb"

    def __init__(self, n):
        self.n = n
        self.m = n - 1
        self._cache = OrderedDict()
        d, x = _cheb_diff(n)
        self.dmat = d
        self.nodes = x
        self.xs = x[1:-1]
        d2 = (d @ d)[1:-1, 1:-1]
        eye_m = np.eye(self.m)
        self.lap = np.kron(d2, eye_m) + np.kron(eye_m, d2)
        self.w1 = _clencurt(n)
        self.w2_int = np.outer(self.w1[1:-1], self.w1[1:-1]).ravel()

    def apply_lap(self, values):
        return self.lap @ values

    def solve(self, c, theta, rhs, diag=None):
        size = self.m * self.m
        if diag is None:
            key = self._shift_key(c, theta)
            fac = self._cache_get(key)
            if fac is None:
                fac = lu_factor(c * np.eye(size) - theta * self.lap)
                self._cache_put(key, fac)
            return lu_solve(fac, rhs)
        mat = -theta * self.lap
        mat[np.diag_indices(size)] += c + diag
        return dense_solve(mat, rhs)

    def _full(self, values):
        full = np.zeros((self.n + 1, self.n + 1))
        full[1:-1, 1:-1] = values.reshape(self.m, self.m)
        return full

    def h1_semi_sq(self, values):
        full = self._full(values)
        ux = self.dmat @ full
        uy = full @ self.dmat.T
        return float(np.einsum("i,j,ij->", self.w1, self.w1,
                               ux * ux + uy * uy))

    def l2_sq(self, values):
        return float(self.w2_int @ (values * values))

    def potential_integral(self, values, potential):
        return float(np.einsum("i,j,ij->", self.w1, self.w1,
                               potential(self._full(values))))


def build_space(backend, n):
    """Construct a spatial operator; n >= 3 subdivisions per dimension."""
    if n < 3:
        raise ValueError("need n >= 3")
    if backend == "fd":
        return FdSpace(n)
    if backend == "cheb":
        return ChebSpace(n)
    raise ValueError("unknown backend %r" % (backend,))


def interior_grid(op):
    """Meshgrids (x, y) of the interior nodes, row-major layout."""
    return np.meshgrid(op.xs, op.xs, indexing="ij")


def solve_shifted(op, c, theta, rhs, diag=None):
    """Solve (c + diag) v - theta lap(v) = rhs on the interior nodes."""
    if c <= 0.0:
        raise ValueError("c must be positive")
    if theta < 0.0:
        raise ValueError("theta must be nonnegative")
    op._check(rhs)
    d = None
    if diag is not None:
        op._check(diag)
        d = diag.values
        if np.min(c + d) <= 0.0:
            raise ValueError("diagonal shift destroys positivity")
    if theta == 0.0:
        shift = c if d is None else c + d
        return Field(op.backend, op.n, rhs.values / shift)
    return Field(op.backend, op.n, op.solve(c, theta, rhs.values, d))


def norms(field, op):
    """(l2, h1_semi) of an interior field under the backend quadrature."""
    op._check(field)
    return (np.sqrt(op.l2_sq(field.values)),
            np.sqrt(op.h1_semi_sq(field.values)))


def energy(field, op, potential, grad_coeff=0.5):
    """grad_coeff * int |grad u|^2 + int potential(u) over the square."""
    op._check(field)
    return (grad_coeff * op.h1_semi_sq(field.values)
            + op.potential_integral(field.values, potential))


def field_to_csv(field, op, path):
    """Dump (x, y, value) rows of the interior nodes."""
    op._check(field)
    xg, yg = interior_grid(op)
    data = np.column_stack([xg.ravel(), yg.ravel(), field.values])
    np.savetxt(path, data, fmt="%.17e", delimiter=",",
               header="x,y,value", comments="")
