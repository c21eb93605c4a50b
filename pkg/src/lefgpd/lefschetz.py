"""Three-way check of the Lefschetz fixed point formula on flat tori.

For a torus map phi with pullback action T on forms, four numbers are
compared:

* the fixed-point side  sum_m |det(dphi_m - 1)|^-1 str(zeta_m);
* the cohomological side  sum_p (-1)^p tr(T | H^p);
* the spectral supertrace  Str(T exp(-tau Delta))  summed over Fourier modes
  (affine maps only);
* the geometric heat trace  t^-n Str_t((zeta k)_phi)  on a ladder t -> 0,
  extrapolated with one Richardson step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._reduce import chunked_weighted_sum
from .errors import LefgpdError
from .geometry import AffineMap, CircleMap, TorusGeometry, find_fixed_points, torus_distance
from .groupoid import auto_grid, geometric_ladder, heat_deformation_kernel, rescaled_limit, twist_by_map
from .heatkernel import HeatTime, ThetaKernel, spectral_supertrace
from .superalgebra import exterior_algebra_action, multi_indices, supertrace, zeta_de_rham

T_INDEPENDENCE_TOL = 1e-12


@dataclass
class VerificationConfig:
    geom: TorusGeometry
    map: AffineMap | CircleMap
    zeta: object = None  # None: de Rham pullback; otherwise x -> GradedEndomorphism
    s: int = 1
    t_max: float = 0.2
    ratio: float = 0.5
    rungs: int = 4
    spectral_tol: float = 1e-10
    geometric_tol: float = 1e-4

    def __post_init__(self):
        if self.rungs < 4:
            raise ValueError(f"t ladder needs at least 4 rungs, got {self.rungs}")
        if not 0 < self.ratio < 1:
            raise ValueError("ladder ratio must lie in (0, 1)")
        if not 0 < self.t_max <= 1:
            raise ValueError("t_max must lie in (0, 1]")
        if self.t_max ** (2 * self.s) > 0.25:
            raise ValueError(f"t_max^(2s) = {self.t_max ** (2 * self.s)} exceeds 0.25")
        if self.geom.n != self.map.n:
            raise ValueError(f"map acts on T^{self.map.n} but geometry is T^{self.geom.n}")

    @property
    def t_values(self):
        return geometric_ladder(self.t_max, self.ratio, self.rungs)

    @property
    def zeta_field(self):
        if self.zeta is None:
            return lambda x: zeta_de_rham(self.map, x)
        return self.zeta


def _zeta(map, zeta):
    return (lambda x: zeta_de_rham(map, x)) if zeta in (None, "de_rham") else zeta


def fixed_point_records(map, zeta=None, geom=None):
    """Fixed points of ``map`` annotated with their local supertrace str(zeta_m)."""
    zf = _zeta(map, zeta)
    out = []
    for rec in find_fixed_points(map, geom):
        local = float(np.real(supertrace(zf(rec.m))))
        out.append(type(rec)(rec.m, rec.differential, rec.weight, rec.simple, local))
    return out


def fixed_point_side(map, zeta=None, geom=None):
    """sum over fixed points of |det(dphi_m - 1)|^-1 str(zeta_m)."""
    return float(sum(rec.weight * rec.local_supertrace for rec in fixed_point_records(map, zeta, geom)))


def circle_degree(map):
    return int(round(float(map.lift(1.0) - map.lift(0.0))))


def cohomological_side(map, geom=None):
    """Alternating trace of the pullback on de Rham cohomology of the torus.

    Harmonic forms on T^n are the constant-coefficient forms, on which an
    affine map acts by Lambda^p(A^T) (translations act trivially).  On the
    circle the action is 1 on H^0 and the degree on H^1.
    """
    if isinstance(map, AffineMap):
        A = np.array(map.matrix, dtype=float)
        g = exterior_algebra_action(A.T)
        return float(sum((-1) ** p * np.trace(b) for p, b in enumerate(g.blocks)))
    return float(1 - circle_degree(map))


def geometric_supertrace(map, zeta, geom, ht, grid=None):
    """Str(T exp(-tau Delta)) = integral of str(zeta(v)) K_tau(phi(v), v) over the torus.

    On flat tori the Hodge Laplacian acts componentwise, so the heat kernel
    is the scalar theta kernel times the identity on forms.
    """
    kernel = ThetaKernel(geom.n, ht.tau)
    zf = _zeta(map, zeta)
    grid = grid or geom.grid()

    def integrand(v):
        return np.real(supertrace(zf(v))) * kernel(map.apply(v), v)

    return float(chunked_weighted_sum(integrand, grid))


def localization_fraction(map, zeta, geom, tau, grid=None, radius_factor=10.0):
    """Share of the absolute geometric integrand within radius_factor*sqrt(tau) of the fixed set."""
    kernel = ThetaKernel(geom.n, tau)
    zf = _zeta(map, zeta)
    grid = grid or geom.grid()
    fixed = [rec.m for rec in find_fixed_points(map, geom)]
    radius = radius_factor * math.sqrt(tau)

    def absolute(v):
        return np.abs(np.real(supertrace(zf(v))) * kernel(map.apply(v), v))

    def near(v):
        if not fixed:
            return np.zeros(len(v))
        dist = np.min([torus_distance(v, m) for m in fixed], axis=0)
        return np.where(dist <= radius, absolute(v), 0.0)

    total = chunked_weighted_sum(absolute, grid)
    return float(chunked_weighted_sum(near, grid) / total) if total > 0 else math.nan


# ---------------------------------------------------------------------------
# T commutes with d

def _exterior_basis(n):
    return [I for p in range(n + 1) for I in multi_indices(n, p)]


def wedge_matrix(k):
    """Matrix of omega -> (sum_j k_j dx^j) ^ omega on the full exterior algebra."""
    k = np.asarray(k)
    n = len(k)
    basis = _exterior_basis(n)
    index = {I: i for i, I in enumerate(basis)}
    W = np.zeros((len(basis), len(basis)), dtype=k.dtype)
    for col, I in enumerate(basis):
        for j in range(n):
            if j in I or k[j] == 0:
                continue
            sign = (-1) ** sum(1 for i in I if i < j)
            W[index[tuple(sorted(I + (j,)))], col] += sign * k[j]
    return W


def _block_diag(g):
    size = sum(b.shape[-1] for b in g.blocks)
    out = np.zeros((size, size), dtype=g.blocks[0].dtype)
    offset = 0
    for b in g.blocks:
        r = b.shape[-1]
        out[offset:offset + r, offset:offset + r] = b
        offset += r
    return out


def _affine_commutation(map, cutoff):
    # T(e^{2 pi i k.x} w) = e^{2 pi i k.b} e^{2 pi i (A^T k).x} Lambda(A^T) w and
    # d(e^{2 pi i k.x} w) = 2 pi i e^{2 pi i k.x} (k ^ w); the unimodular phase
    # and the common 2 pi i factor are dropped so the comparison is in integers
    A = np.array(map.matrix, dtype=np.int64)
    L = np.rint(_block_diag(exterior_algebra_action(A.T.astype(float)))).astype(np.int64)
    worst = 0.0
    n = map.n
    for k in np.ndindex(*(2 * cutoff + 1,) * n):
        k = np.array(k, dtype=np.int64) - cutoff
        dT = wedge_matrix(A.T @ k) @ L
        Td = L @ wedge_matrix(k)
        worst = max(worst, 2 * math.pi * float(np.abs(dT - Td).max()))
    return worst


def _circle_commutation(map, cutoff):
    # Jacobi-Anger: e^{2 pi i k lift} has sidebands of each frequency f out to
    # about 2 pi |k a| + 15 multiples; oversampling beyond that only amplifies
    # roundoff in the spectral derivative
    band = cutoff * abs(map.degree) + sum(abs(f) * (2 * math.pi * cutoff * abs(a) + 15) for f, a in map.sin + map.cos)
    N = 1 << max(6, int(math.ceil(math.log2(3 * band + 1))))
    x = np.arange(N) / N
    lift = map.lift(x)
    dlift = map.lift_derivative(x)
    wave = np.fft.fftfreq(N, d=1.0 / N)
    worst = 0.0
    for k in range(-cutoff, cutoff + 1):
        pulled = np.exp(2j * np.pi * k * lift)
        # d(T f): spectral derivative of the sampled pullback
        dT = np.fft.ifft(2j * np.pi * wave * np.fft.fft(pulled))
        # T(d f): pullback of the 1-form 2 pi i k e^{2 pi i k x} dx
        Td = 2j * np.pi * k * pulled * dlift
        worst = max(worst, float(np.abs(dT - Td).max()))
    # on 1-forms d vanishes identically on both sides
    return worst


def commutation_check(map, geom=None, mode_cutoff=8):
    """max ||(dT - Td) e|| over Fourier basis forms e with |k| <= mode_cutoff."""
    if isinstance(map, AffineMap):
        return _affine_commutation(map, mode_cutoff)
    return _circle_commutation(map, mode_cutoff)


# ---------------------------------------------------------------------------
# the full comparison

@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    limits: dict = field(default_factory=dict)
    fixed_points: list = field(default_factory=list)
    verdict: dict = field(default_factory=dict)
    ladder: dict = field(default_factory=dict)
    error: str | None = None
    error_type: str | None = None

    @property
    def passed(self):
        return self.error is None and bool(self.verdict) and all(v for v in self.verdict.values() if v is not None)

    def to_dict(self):
        return {
            "passed": self.passed,
            "error": self.error,
            "error_type": self.error_type,
            "limits": dict(self.limits),
            "verdict": dict(self.verdict),
            "rows": [dict(r) for r in self.rows],
            "ladder": dict(self.ladder),
            "fixed_points": [fp.to_dict() for fp in self.fixed_points],
        }


def _error_report(exc):
    chain = [cls.__name__ for cls in type(exc).__mro__ if issubclass(cls, LefgpdError) and cls is not LefgpdError]
    return ConvergenceReport(error=str(exc), error_type=" < ".join(chain) or type(exc).__name__)


def verify(config):
    """Run all four computations for ``config`` and compare them.

    Math-domain failures are returned as a report with ``error`` set rather
    than raised.
    """
    try:
        return _verify(config)
    except LefgpdError as exc:
        return _error_report(exc)


def _verify(config):
    map, geom, n = config.map, config.geom, config.geom.n
    records = fixed_point_records(map, config.zeta, geom)
    fps = float(sum(r.weight * r.local_supertrace for r in records))
    cohom = cohomological_side(map, geom) if config.zeta is None else None

    t_values = config.t_values
    heat_times = [HeatTime(t, config.s) for t in t_values]
    affine = isinstance(map, AffineMap)
    spectral = [spectral_supertrace(map, ht) for ht in heat_times] if affine else None

    section = twist_by_map(heat_deformation_kernel(n, s=config.s), map, config.zeta_field)
    grid_for = lambda t: auto_grid(n, t, config.s, minimum=geom.grid_size)
    ladder = rescaled_limit(section, t_values, n, grid_for=grid_for, geom=geom)

    rows = []
    for i, ht in enumerate(heat_times):
        rows.append({
            "t": ht.t,
            "tau": ht.tau,
            "grid_size": grid_for(ht.t).size_per_axis,
            "str_t_geometric": ladder.values[i],
            "str_spectral": None if spectral is None else spectral[i],
            "running_error": abs(ladder.values[i] - fps),
        })

    limits = {
        "fixed_point_side": fps,
        "cohomological": cohom,
        "spectral": None if spectral is None else spectral[-1],
        "geometric_extrapolated": ladder.extrapolated,
    }
    verdict = {
        "geometric_vs_fixed_point": abs(ladder.extrapolated - fps) <= config.geometric_tol,
        "spectral_vs_fixed_point": None if spectral is None else abs(spectral[-1] - fps) <= config.spectral_tol,
        "spectral_t_independent": None if spectral is None else max(spectral) - min(spectral) < T_INDEPENDENCE_TOL,
        "cohomological_vs_fixed_point": None if cohom is None else abs(cohom - fps) <= config.spectral_tol,
    }
    ladder_info = {
        "method": ladder.method,
        "residuals": ladder.residuals,
        "errors": ladder.errors,
        "observed_orders": ladder.observed_orders,
    }
    return ConvergenceReport(rows=rows, limits=limits, fixed_points=records, verdict=verdict, ladder=ladder_info)


def sweep_table(report):
    """CSV rows for a finished report, one per rung in descending t."""
    fps = report.limits["fixed_point_side"]
    return [{
        "t": row["t"],
        "tau": row["tau"],
        "str_t_geometric": row["str_t_geometric"],
        "str_spectral": math.nan if row["str_spectral"] is None else row["str_spectral"],
        "fixed_point_side": fps,
        "abs_error": abs(row["str_t_geometric"] - fps),
    } for row in report.rows]


def sweep(config):
    report = verify(config)
    return report, ([] if report.error is not None else sweep_table(report))
