"""The relative tangent groupoid of a finite fixed-point set M in a torus V.

As a set, the groupoid is ``V x V x (0, 1]`` glued to ``T_mV + T_mV`` for
each fixed point m.  Sections are stored as :class:`DeformationKernel`
objects with a ``bulk`` callable for t > 0 and a ``boundary`` callable for
the t = 0 fibres.  Kernels are kept in reduced form, i.e. as functions of a
single groupoid element, so equivariance holds by construction.

Normalisation: a geometric heat kernel K relates to the section k by
``K(v1, v2, t^2s) = t^-n k(v1, v2, t)``.  The factor ``t^-n`` is applied in
exactly one place, :func:`rescaled_limit`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._reduce import chunked_weighted_sum, map_ordered
from .errors import CrossCheckFailure, NonDecayingBoundary, NonSimpleFixedPoint, OutOfChart, UnboundedLadder
from .geometry import QuadratureGrid, find_fixed_points
from .heatkernel import ThetaKernel, gaussian_model_kernel
from .superalgebra import GradedEndomorphism, supertrace, zeta_de_rham

CROSS_CHECK_TOL = 1e-8


# ---------------------------------------------------------------------------
# charts of the deformation space

@dataclass(frozen=True)
class DeformationChart:
    """Chart ``(v, t) -> (v_p, (v_q - m_q) / t, t)`` around a submanifold.

    The first ``p`` coordinates are tangential to M, the remaining ``q`` are
    normal.  ``radius`` (optional) bounds the normal coordinates of the
    chart domain.
    """

    p: int
    q: int
    center: tuple = None
    radius: float = None

    def __post_init__(self):
        c = np.zeros(self.p + self.q) if self.center is None else np.asarray(self.center, float)
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    def forward(self, v, t):
        if t <= 0:
            raise ValueError("chart_forward needs t > 0")
        v = np.asarray(v, dtype=float)
        normal = v[..., self.p:] - np.asarray(self.center)[self.p:]
        if self.radius is not None and np.any(np.abs(normal) > self.radius):
            raise OutOfChart(f"normal coordinates {normal.tolist()} outside radius {self.radius}")
        return np.concatenate([v[..., :self.p], normal / t], axis=-1), t

    def inverse(self, coords, t):
        coords = np.asarray(coords, dtype=float)
        normal = coords[..., self.p:] * t + np.asarray(self.center)[self.p:]
        return np.concatenate([coords[..., :self.p], normal], axis=-1)


def chart_forward(chart, v, t):
    return chart.forward(v, t)


def _centered(v, m):
    d = np.asarray(v, dtype=float) - np.asarray(m, dtype=float)
    return d - np.round(d)


def groupoid_chart_forward(m, v1, v2, t, radius=None):
    """Coordinates ``((v1 - m) / t, (v2 - m) / t, t)`` on the groupoid near m.

    Differences are taken as minimal images on the torus.
    """
    if t <= 0:
        raise ValueError("groupoid chart needs t > 0")
    d1, d2 = _centered(v1, m), _centered(v2, m)
    if radius is not None and (np.any(np.abs(d1) > radius) or np.any(np.abs(d2) > radius)):
        raise OutOfChart(f"points farther than {radius} from the fixed point {m}")
    return d1 / t, d2 / t, t


def taylor_coefficient(f, m, X, r, nodes=64, radius=0.25):
    """(1/r!) d^r/ds^r f(m + s X) at s = 0 via the Cauchy integral.

    ``f`` must accept complex arguments.  The trapezoid rule on the circle is
    exact for polynomials of degree below ``nodes``.
    """
    m = np.asarray(m, dtype=float)
    X = np.asarray(X, dtype=float)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    z = radius * np.exp(1j * theta)
    vals = np.array([f(m + zk * X) for zk in z])
    coeff = np.mean(vals * np.exp(-1j * r * theta)) / radius ** r
    return float(coeff.real)


@dataclass
class DeformationFunction:
    """Smooth function on the deformation space built from f in C^inf(V).

    ``order = 0`` is the plain lift ``(v, t) -> f(v)``, ``X_m -> f(m)``.
    For f vanishing to order r at m, ``order = r`` gives
    ``(v, t) -> t^-r f(v)`` and ``X_m -> X_m^r(f) / r!``.
    """

    f: Callable
    m: np.ndarray
    order: int = 0

    def bulk(self, v, t):
        return self.f(np.asarray(v, dtype=float)) / t ** self.order

    def boundary(self, X):
        if self.order == 0:
            return float(self.f(np.asarray(self.m, dtype=float)))
        return taylor_coefficient(self.f, self.m, X, self.order)

    def along_curve(self, X, t):
        """Bulk value at the point ``m + t X``, which tends to ``boundary(X)``."""
        return self.bulk(np.asarray(self.m, dtype=float) + t * np.asarray(X, dtype=float), t)


# ---------------------------------------------------------------------------
# sections and the pair groupoid

@dataclass
class DeformationKernel:
    """Section of r*F (x) s*F^* over the relative tangent groupoid.

    ``bulk(v1, v2, t)`` takes ``(m, n)`` point arrays and returns either an
    ``(m,)`` scalar array or a batched GradedEndomorphism.
    ``boundary(X, Y, m)`` does the same on ``T_mV + T_mV``.
    """

    n: int
    bulk: Callable
    boundary: Callable = None
    translation_invariant_at_0: bool = False
    normalization_scale: int = None

    def __post_init__(self):
        if self.normalization_scale is None:
            self.normalization_scale = self.n


def check_translation_invariance(k, m, samples=32, scale=2.0, seed=0):
    """max |boundary(X, Y) - boundary(X - Y, 0)| over random samples."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-scale, scale, size=(samples, k.n))
    Y = rng.uniform(-scale, scale, size=(samples, k.n))
    a = _as_blocks(k.boundary(X, Y, m))
    b = _as_blocks(k.boundary(X - Y, np.zeros_like(Y), m))
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))


def _as_blocks(value):
    if isinstance(value, GradedEndomorphism):
        return value.blocks
    return [np.asarray(value)]


def pair_groupoid_family(kernel):
    """Constant family on the pair groupoid V x V.

    The source fibre over x is ``V x {x}``; every fibre carries the operator
    with Schwartz kernel ``kernel``.
    """
    def family(x):
        return lambda h_prime, h: kernel(h_prime[0], h[0])
    return family


def reduced_kernel(family):
    """k_P(g) = k_{s(g)}(g, s(g)) on the pair groupoid, g = (v1, v2)."""
    def kP(v1, v2):
        return family(v2)((v1, v2), (v2, v2))
    return kP


def equivariance_defect(family, samples):
    """max |k_{r(g)}(h', h) - k_{s(g)}(h' g, h g)| over sampled (g, h', h)."""
    worst = 0.0
    for a, b, u, w in samples:
        # g = (a, b) goes from b to a; h', h lie in the source fibre over a
        lhs = family(a)((u, a), (w, a))
        rhs = family(b)((u, b), (w, b))
        worst = max(worst, float(np.max(np.abs(np.asarray(lhs) - np.asarray(rhs)))))
    return worst


# ---------------------------------------------------------------------------
# trace functionals

def _pointwise(value, graded):
    if isinstance(value, GradedEndomorphism):
        if graded:
            return supertrace(value)
        return sum(np.trace(b, axis1=-2, axis2=-1) for b in value.blocks)
    # scalar kernels live in degree 0
    return np.asarray(value)


def _diagonal_integral(k, t, grid, graded):
    def integrand(v):
        return np.real(_pointwise(k.bulk(v, v, t), graded))
    return float(chunked_weighted_sum(integrand, grid))


def trace_t(k, t, geom, grid=None):
    """Tr_t(k) = integral over V of the trace of k(v, v, t)."""
    if t <= 0:
        raise ValueError("trace_t needs t > 0; use trace_0 for the boundary")
    return _diagonal_integral(k, t, grid or geom.grid(), graded=False)


def supertrace_t(k, t, geom, grid=None):
    """Str_t(k) = integral over V of str k(v, v, t)."""
    if t <= 0:
        raise ValueError("supertrace_t needs t > 0; use supertrace_0 for the boundary")
    return _diagonal_integral(k, t, grid or geom.grid(), graded=True)


@dataclass(frozen=True)
class _Box:
    """Tensor Gauss-Legendre rule on one axis-aligned box."""

    nodes: tuple
    weights: tuple

    @property
    def size(self):
        return int(np.prod([len(a) for a in self.nodes]))

    def _index(self, start, stop):
        return np.unravel_index(np.arange(start, stop), [len(a) for a in self.nodes])

    def slice(self, start, stop):
        idx = self._index(start, stop)
        return np.stack([np.asarray(a)[i] for a, i in zip(self.nodes, idx)], axis=-1)

    def weight_slice(self, start, stop):
        idx = self._index(start, stop)
        return np.prod([np.asarray(w)[i] for w, i in zip(self.weights, idx)], axis=0)


def expanding_cube_integral(f, n, tol=1e-10, start=1.0, nodes=64, max_doublings=16):
    """Integral of f over R^n on cubes [-L, L]^n with L doubled each step.

    Each new shell ``[-2L, 2L]^n minus [-L, L]^n`` is tiled by the 3^n - 1
    boxes of the product partition ``{[-2L,-L], [-L,L], [L,2L]}`` with a
    ``nodes``-point Gauss-Legendre rule per axis.  Stops once a shell adds
    less than ``tol``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)

    def segment(lo, hi):
        half = 0.5 * (hi - lo)
        return tuple(lo + half * (x + 1)), tuple(half * w)

    def box_integral(bounds):
        segs = [segment(lo, hi) for lo, hi in bounds]
        box = _Box(tuple(s[0] for s in segs), tuple(s[1] for s in segs))
        return chunked_weighted_sum(f, box)

    L = start
    total = box_integral([(-L, L)] * n)
    for _ in range(max_doublings):
        parts = [(-2 * L, -L), (-L, L), (L, 2 * L)]
        shell = 0.0
        for combo in itertools.product(range(3), repeat=n):
            if all(c == 1 for c in combo):
                continue
            shell = shell + box_integral([parts[c] for c in combo])
        total = total + shell
        L *= 2
        if np.max(np.abs(shell)) < tol:
            return total
    raise NonDecayingBoundary(f"boundary integral still changing by {np.max(np.abs(shell)):.3e} at L = {L}")


def _fixed_point_list(fixed_points):
    return [np.atleast_1d(np.asarray(getattr(fp, "m", fp), dtype=float)) for fp in fixed_points]


def trace_0(k, fixed_points, tol=1e-10):
    """Tr_0(k) = sum over m of the integral over T_mV of tr k(X, X, m)."""
    total = 0.0
    for m in _fixed_point_list(fixed_points):
        total += expanding_cube_integral(
            lambda X, m=m: np.real(_pointwise(k.boundary(X, X, m), graded=False)), k.n, tol)
    return float(total)


def supertrace_0(k, fixed_points, tol=1e-10):
    """Str_0(k) = sum over m of the integral over T_mV of str k(X, X, m)."""
    total = 0.0
    for m in _fixed_point_list(fixed_points):
        total += expanding_cube_integral(
            lambda X, m=m: np.real(_pointwise(k.boundary(X, X, m), graded=True)), k.n, tol)
    return float(total)


# ---------------------------------------------------------------------------
# twisting by the map

def _times(zeta_value, value):
    if zeta_value is None:
        return value
    if isinstance(value, GradedEndomorphism):
        return zeta_value @ value
    return zeta_value.scale(value)


def _zeta_field(map, zeta):
    if zeta == "de_rham":
        return lambda x: zeta_de_rham(map, x)
    return zeta


def twist_by_map(k, map, zeta="de_rham"):
    """The section (zeta . k)_phi.

    Bulk ``(v1, v2, t) -> zeta(v1) k(phi(v1), v2, t)``; boundary
    ``(X, Y, m) -> zeta_m k(dphi_m X, Y, m)``.  ``zeta`` is ``"de_rham"``
    (pullback on forms), ``None`` (ungraded, identity) or a callable
    returning a GradedEndomorphism at a batch of points.
    """
    zf = _zeta_field(map, zeta)

    def bulk(v1, v2, t):
        value = k.bulk(map.apply(v1), v2, t)
        return _times(None if zf is None else zf(v1), value)

    def boundary(X, Y, m):
        D = map.differential(m)
        value = k.boundary(X @ D.T, Y, m)
        return _times(None if zf is None else zf(m), value)

    return DeformationKernel(k.n, bulk, boundary, translation_invariant_at_0=False,
                             normalization_scale=k.normalization_scale)


def _local_str(zeta_value):
    if zeta_value is None:
        return 1.0
    return float(np.real(supertrace(zeta_value)))


def trace_0_of_twist(k, map, zeta="de_rham", fixed_points=None, tol=CROSS_CHECK_TOL):
    """Str_0 of the twisted section, by two independent routes.

    Route one integrates ``str(zeta_m k(dphi X, X))`` directly over each
    tangent space.  Route two integrates ``k(X, 0)`` once and applies the
    change of variables ``|det(dphi - 1)|^-1``.  Raises CrossCheckFailure if
    they differ by more than ``tol``.
    """
    if not k.translation_invariant_at_0:
        raise ValueError("trace_0_of_twist needs a kernel flagged translation invariant at t = 0")
    if fixed_points is None:
        fixed_points = find_fixed_points(map)
    zf = _zeta_field(map, zeta)
    via_det = 0.0
    for m in _fixed_point_list(fixed_points):
        D = np.atleast_2d(map.differential(m))
        det = abs(float(np.linalg.det(D - np.eye(k.n))))
        if det < 1e-8:
            raise NonSimpleFixedPoint(f"|det(dphi - 1)| = {det:.3e} at {m.tolist()}")
        mass = _integrate_boundary_at_zero(k, m)
        via_det += float(np.real(_pointwise(_times(None if zf is None else zf(m), mass), graded=True))) / det
    # the direct route only after every point is known to be simple
    direct = supertrace_0(twist_by_map(k, map, zeta), fixed_points)
    if abs(direct - via_det) > tol:
        raise CrossCheckFailure(f"direct quadrature {direct!r} vs determinant formula {via_det!r}")
    return via_det, direct


def _integrate_boundary_at_zero(k, m):
    """Integral over T_mV of the (possibly graded) value k(X, 0, m), entrywise."""
    probe = k.boundary(np.zeros((1, k.n)), np.zeros((1, k.n)), m)
    if not isinstance(probe, GradedEndomorphism):
        return float(expanding_cube_integral(
            lambda X: np.real(k.boundary(X, np.zeros_like(X), m)), k.n))
    shapes = [b.shape[-2:] for b in probe.blocks]

    def flat(X):
        value = k.boundary(X, np.zeros_like(X), m)
        return np.concatenate([b.reshape(len(X), -1) for b in value.blocks], axis=1).real

    entries = expanding_cube_integral(flat, k.n)
    blocks, offset = [], 0
    for shape in shapes:
        size = shape[0] * shape[1]
        blocks.append(entries[offset:offset + size].reshape(shape))
        offset += size
    return GradedEndomorphism(blocks)


# ---------------------------------------------------------------------------
# the t -> 0 limit

@dataclass
class TraceLadder:
    t_values: list
    values: list
    extrapolated: float
    method: str = "richardson-1"
    residuals: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    observed_orders: list = field(default_factory=list)

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.t_values, self.t_values[1:])):
            raise ValueError("t_values must be strictly decreasing")
        if not math.isfinite(self.extrapolated):
            raise ValueError("extrapolated limit is not finite")


def geometric_ladder(t_max, ratio, rungs):
    if not 0 < ratio < 1:
        raise ValueError("ladder ratio must lie in (0, 1)")
    return [t_max * ratio ** j for j in range(rungs)]


def rescaled_limit(k, t_values, n, grid_for=None, geom=None, functional="supertrace", min_rungs=4):
    """Evaluate f(t) = t^-n Str_t(k) on a geometric ladder and extrapolate t -> 0.

    One Richardson step assumes ``f(t) = f0 + c t + o(t)`` and uses the two
    smallest rungs.  ``grid_for(t)`` chooses the quadrature grid per rung.
    Raises UnboundedLadder when |f| grows monotonically by more than 10x.
    """
    t_values = [float(t) for t in t_values]
    if len(t_values) < min_rungs:
        raise ValueError(f"need at least {min_rungs} rungs, got {len(t_values)}")
    ratios = [b / a for a, b in zip(t_values, t_values[1:])]
    if not all(0 < r < 1 for r in ratios) or max(ratios) - min(ratios) > 1e-9:
        raise ValueError("t ladder must be geometric and decreasing")
    rho = ratios[0]
    fn = supertrace_t if functional == "supertrace" else trace_t
    if grid_for is None:
        grid_for = lambda t: geom.grid()

    values = map_ordered(lambda t: t ** (-n) * fn(k, t, geom, grid_for(t)), t_values)

    mags = [abs(v) for v in values]
    growing = all(b > a for a, b in zip(mags, mags[1:]))
    if growing and mags[-1] > 10 * mags[0] and mags[-1] > 1e-8:
        raise UnboundedLadder(f"|t^-{n} Str_t| grows from {mags[0]:.3e} to {mags[-1]:.3e}")

    f_prev, f_last = values[-2], values[-1]
    f0 = (f_last - rho * f_prev) / (1 - rho)
    slope = (f_prev - f_last) / (t_values[-2] - t_values[-1])
    residuals = [v - (f0 + slope * t) for v, t in zip(values, t_values)]
    errors = [abs(v - f0) for v in values]
    orders = []
    for a, b in zip(errors, errors[1:]):
        orders.append(math.log(a / b) / math.log(1 / rho) if a > 0 and b > 0 else math.inf)
    return TraceLadder(t_values, values, f0, residuals=residuals, errors=errors, observed_orders=orders)


# ---------------------------------------------------------------------------
# the heat kernel as a section

def heat_deformation_kernel(n, graded=True, s=1):
    """Section of the de Rham heat family exp(-t^2s Delta) on T^n.

    Bulk ``t^n K(v1, v2, t^2s)`` times the identity on forms; boundary the
    Euclidean model kernel ``(4 pi)^(-n/2) exp(-|X - Y|^2 / 4)``.  The
    boundary is the t -> 0 limit in groupoid coordinates when s = 1.
    """
    def wrap(scalar):
        if not graded:
            return scalar
        return GradedEndomorphism.identity(n).scale(scalar)

    def bulk(v1, v2, t):
        kernel = ThetaKernel(n, t ** (2 * s))
        return wrap(t ** n * kernel(v1, v2))

    def boundary(X, Y, m):
        return wrap(gaussian_model_kernel(np.asarray(X) - np.asarray(Y), n))

    return DeformationKernel(n, bulk, boundary, translation_invariant_at_0=True)


def auto_grid(n, t, s=1, minimum=32):
    """Torus grid with spacing at most sqrt(tau) / 3 for tau = t^2s."""
    tau = t ** (2 * s)
    return QuadratureGrid(n, max(minimum, int(math.ceil(3.0 / math.sqrt(tau)))))
