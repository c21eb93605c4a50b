"""Flat tori T^n = R^n / Z^n, their self-maps and fixed points.

Points are numpy arrays whose last axis has length ``n``; for the circle a
bare float is accepted wherever a point is expected.  The measure is
Lebesgue measure on the unit cube, so the torus has total volume 1.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateMap, NonSimpleFixedPoint

SIMPLE_TOL = 1e-8
FIXED_POINT_TOL = 1e-10
CIRCLE_SCAN = 4096


@dataclass(frozen=True)
class TorusGeometry:
    n: int
    grid_size: int = 64

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")

    @property
    def volume(self):
        return 1.0

    def grid(self, size=None):
        return QuadratureGrid(self.n, self.grid_size if size is None else size)


@dataclass(frozen=True)
class QuadratureGrid:
    """Periodic trapezoid rule: nodes ``k/N`` on each axis, weights ``N^-n``."""

    n: int
    size_per_axis: int

    @property
    def size(self):
        return self.size_per_axis ** self.n

    @property
    def weight(self):
        return float(self.size_per_axis) ** (-self.n)

    @property
    def spacing(self):
        return 1.0 / self.size_per_axis

    def slice(self, start, stop):
        """Nodes with flat (C-order) indices ``start..stop-1`` as an ``(m, n)`` array."""
        idx = np.arange(start, stop)
        axes = np.unravel_index(idx, (self.size_per_axis,) * self.n)
        return np.stack(axes, axis=-1).astype(float) / self.size_per_axis

    @property
    def nodes(self):
        return self.slice(0, self.size)

    @property
    def weights(self):
        return np.full(self.size, self.weight)


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"expected points with last axis {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class AffineMap:
    """x -> A x + b mod Z^n with an integer matrix A."""

    matrix: tuple
    shift: tuple = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix))
        if A.shape[0] != A.shape[1]:
            raise ValueError("affine matrix must be square")
        if not np.all(np.equal(np.mod(A, 1), 0)):
            raise ValueError("affine matrix must have integer entries to descend to the torus")
        A = A.astype(int)
        object.__setattr__(self, "matrix", tuple(tuple(int(v) for v in row) for row in A))
        b = np.zeros(A.shape[0]) if self.shift is None else np.atleast_1d(np.asarray(self.shift, float))
        if b.shape != (A.shape[0],):
            raise ValueError("shift must have one entry per dimension")
        object.__setattr__(self, "shift", tuple(float(v) for v in np.mod(b, 1.0)))

    @property
    def n(self):
        return len(self.matrix)

    @property
    def A(self):
        return np.array(self.matrix, dtype=float)

    @property
    def b(self):
        return np.array(self.shift, dtype=float)

    def apply(self, x):
        x = _as_points(x, self.n)
        return np.mod(x @ self.A.T + self.b, 1.0)

    def differential(self, x):
        x = _as_points(x, self.n)
        return np.broadcast_to(self.A, x.shape[:-1] + (self.n, self.n)).copy()


@dataclass(frozen=True)
class CircleMap:
    """Circle map with lift ``x -> degree*x + c0 + f(x)``.

    ``f`` is the trigonometric polynomial
    ``sum a sin(2 pi k x) + sum c cos(2 pi k x)`` over the ``(k, a)`` pairs in
    ``sin`` and ``cos``; frequencies must be integers so that
    ``lift(x + 1) = lift(x) + degree``.
    """

    degree: int
    c0: float = 0.0
    sin: tuple = ()
    cos: tuple = ()

    def __post_init__(self):
        for name in ("sin", "cos"):
            terms = tuple((int(k), float(a)) for k, a in getattr(self, name))
            object.__setattr__(self, name, terms)
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "c0", float(self.c0))

    n = 1

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        out = self.degree * x + self.c0
        for k, a in self.sin:
            out = out + a * np.sin(2 * np.pi * k * x)
        for k, a in self.cos:
            out = out + a * np.cos(2 * np.pi * k * x)
        return out

    def lift_derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, float(self.degree))
        for k, a in self.sin:
            out = out + 2 * np.pi * k * a * np.cos(2 * np.pi * k * x)
        for k, a in self.cos:
            out = out - 2 * np.pi * k * a * np.sin(2 * np.pi * k * x)
        return out

    def apply(self, x):
        x = _as_points(x, 1)
        return np.mod(self.lift(x), 1.0)

    def differential(self, x):
        x = _as_points(x, 1)
        return self.lift_derivative(x)[..., None]


TorusMap = AffineMap | CircleMap


@dataclass(frozen=True)
class FixedPointRecord:
    m: np.ndarray
    differential: np.ndarray
    weight: float
    simple: bool = True
    local_supertrace: float | None = field(default=None, compare=False)

    def to_dict(self):
        return {
            "m": [float(v) for v in self.m],
            "differential": [[float(v) for v in row] for row in self.differential],
            "weight": float(self.weight),
            "simple": bool(self.simple),
            "local_supertrace": None if self.local_supertrace is None else float(self.local_supertrace),
        }


def apply_map(map, x):
    """Image of ``x`` under the map, reduced to ``[0, 1)^n``."""
    out = map.apply(x)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def differential_at(map, x):
    """Differential of the map at ``x`` as an ``n x n`` matrix (batched over leading axes)."""
    return map.differential(x)


def torus_distance(x, y):
    """Distance on R^n/Z^n: Euclidean length of the minimal-image difference."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d - np.round(d)
    if d.ndim == 0:
        return float(abs(d))
    return np.sqrt(np.sum(d * d, axis=-1))


def smith_normal_form(M):
    """Return integer matrices ``(U, D, V)`` with ``U @ M @ V = D`` diagonal.

    U and V are unimodular.  Exact Python-int arithmetic; the diagonal is
    not normalised to the divisibility chain since only ``|d_i|`` matters here.
    """
    A = [[int(v) for v in row] for row in M]
    rows, cols = len(A), len(A[0])
    U = [[int(i == j) for j in range(rows)] for i in range(rows)]
    V = [[int(i == j) for j in range(cols)] for i in range(cols)]

    for k in range(min(rows, cols)):
        while True:
            nonzero = [(abs(A[i][j]), i, j) for i in range(k, rows) for j in range(k, cols) if A[i][j]]
            if not nonzero:
                return U, A, V
            _, pi, pj = min(nonzero)
            A[k], A[pi] = A[pi], A[k]
            U[k], U[pi] = U[pi], U[k]
            for row in A:
                row[k], row[pj] = row[pj], row[k]
            for row in V:
                row[k], row[pj] = row[pj], row[k]
            p = A[k][k]
            clean = True
            for i in range(k + 1, rows):
                q = A[i][k] // p
                if q:
                    A[i] = [a - q * b for a, b in zip(A[i], A[k])]
                    U[i] = [a - q * b for a, b in zip(U[i], U[k])]
                clean &= A[i][k] == 0
            for j in range(k + 1, cols):
                q = A[k][j] // p
                if q:
                    for row in A:
                        row[j] -= q * row[k]
                    for row in V:
                        row[j] -= q * row[k]
                clean &= A[k][j] == 0
            if clean:
                break
    return U, A, V


def _affine_fixed_points(map):
    n = map.n
    M = [[int(map.matrix[i][j]) - (i == j) for j in range(n)] for i in range(n)]
    U, D, V = smith_normal_form(M)
    diag = [D[i][i] for i in range(n)]
    # (A - I) x = -b mod Z^n  <=>  D y = -U b mod Z^n  with  x = V y
    c = np.mod(-(np.array(U, dtype=float) @ map.b), 1.0)
    if any(d == 0 for d in diag):
        solvable = all(torus_distance(c[i], 0.0) < 1e-12 for i in range(n) if diag[i] == 0)
        if not solvable:
            return []
        raise DegenerateMap(f"det(A - I) = 0 for A = {map.matrix}: fixed points are not isolated")
    Vf = np.array(V, dtype=float)
    det = abs(round(np.linalg.det(np.array(M, dtype=float))))
    weight = 1.0 / det
    differential = np.array(map.matrix, dtype=float)
    points = []
    for js in itertools.product(*(range(abs(d)) for d in diag)):
        y = np.array([(c[i] + js[i]) / diag[i] for i in range(n)])
        x = np.mod(Vf @ y, 1.0)
        x[x > 1.0 - 1e-13] = 0.0
        points.append(x)
    points.sort(key=lambda p: tuple(np.round(p, 12)))
    return [FixedPointRecord(m=p, differential=differential.copy(), weight=weight) for p in points]


def _circle_fixed_points(map, scan=CIRCLE_SCAN):
    # roots of h(x) = lift(x) - x - j for every integer j crossed on a scan of [0, 1]
    xs = np.linspace(0.0, 1.0, scan + 1)
    hs = map.lift(xs) - xs
    roots = []
    for a, b, ha, hb in zip(xs[:-1], xs[1:], hs[:-1], hs[1:]):
        lo, hi = min(ha, hb), max(ha, hb)
        for j in range(math.ceil(lo), math.floor(hi) + 1):
            fa, fb = ha - j, hb - j
            if fa == 0.0:
                roots.append(a)
            elif fb == 0.0:
                roots.append(b)
            else:
                g = lambda x, j=j: float(map.lift(x) - x - j)
                r = brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
                # one Newton polish step
                slope = float(map.lift_derivative(r)) - 1.0
                if slope != 0.0:
                    step = g(r) / slope
                    if abs(step) < b - a:
                        r -= step
                roots.append(r)
    unique = []
    for r in sorted(float(np.mod(r, 1.0)) for r in roots):
        r = 0.0 if r > 1.0 - 1e-13 else r
        if not any(torus_distance(r, u) < 1e-9 for u in unique):
            unique.append(r)
    records = []
    for r in unique:
        deriv = float(map.lift_derivative(r))
        det = abs(deriv - 1.0)
        records.append(FixedPointRecord(
            m=np.array([r]),
            differential=np.array([[deriv]]),
            weight=1.0 / det if det > 0 else math.inf,
            simple=det >= SIMPLE_TOL,
        ))
    return records


def find_fixed_points(map, geom=None):
    """All fixed points of ``map`` on the fundamental domain ``[0, 1)^n``.

    Affine maps are solved exactly through the Smith normal form of ``A - I``;
    circle maps by bracketing integer crossings of ``lift(x) - x`` followed by
    Brent's method and a Newton step.
    """
    if geom is not None and geom.n != map.n:
        raise ValueError(f"map acts on T^{map.n} but geometry is T^{geom.n}")
    if isinstance(map, AffineMap):
        records = _affine_fixed_points(map)
    else:
        records = _circle_fixed_points(map)
    for rec in records:
        det = abs(np.linalg.det(rec.differential - np.eye(map.n)))
        if det < SIMPLE_TOL:
            raise NonSimpleFixedPoint(
                f"fixed point {rec.m.tolist()} has |det(dphi - I)| = {det:.3e} < {SIMPLE_TOL}")
        gap = torus_distance(apply_map(map, rec.m), rec.m)
        if gap >= FIXED_POINT_TOL:
            raise NonSimpleFixedPoint(f"solver returned {rec.m.tolist()} with residual {gap:.3e}")
    return records
