"""Exact heat kernels on flat models.

* the periodised Gaussian (theta function) on T^n, evaluated as a product of
  one-dimensional lattice sums;
* Fourier-mode heat operators and the spectral supertrace of an affine
  pullback composed with the de Rham heat operator;
* kernels of constant-coefficient elliptic operators on R^n with matrix
  coefficients, obtained as inverse Fourier transforms of ``exp(-q(xi))``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EllipticityFailure, FrequencyBoxTooSmall, TruncationTooSmall
from .superalgebra import exterior_algebra_action, supertrace

THETA_TAIL_TOL = 1e-12
BOX_EDGE_SYMBOL = 36.0
SPHERE_SAMPLES = 1024


@dataclass(frozen=True)
class HeatTime:
    t: float
    s: int = 1

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"deformation parameter t must lie in (0, 1], got {self.t}")
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"half-order s must be a positive integer, got {self.s}")

    @property
    def tau(self):
        return self.t ** (2 * self.s)


# ---------------------------------------------------------------------------
# theta kernel on the torus

def _theta_tail_ratio(tau, radius, n):
    """Bound on the relative truncation error of the product of 1-d sums.

    Per axis the omitted terms satisfy |z| > R, their sum is below
    2 (1 + sqrt(pi tau)) exp(-R^2 / 4 tau), and the retained sum is at least
    exp(-1 / 16 tau) because the nearest image is within 1/2.
    """
    log_ratio = math.log(2.0 * (1.0 + math.sqrt(math.pi * tau))) - (radius ** 2 - 0.25) / (4.0 * tau)
    per_axis = math.exp(min(log_ratio, 0.0))
    return math.expm1(n * math.log1p(per_axis)) if per_axis < 1 else math.inf


def default_truncation_radius(tau, n):
    needed = math.sqrt(0.25 + 4.0 * tau * math.log(2.0 * n * (1.0 + math.sqrt(math.pi * tau)) * 1e13))
    return max(1.5, 8.0 * math.sqrt(tau), needed)


@dataclass(frozen=True)
class ThetaKernel:
    """Heat kernel of the flat Laplacian on T^n at heat time ``tau``."""

    n: int
    tau: float
    truncation_radius: float = None
    tail_bound: float = field(init=False, default=None)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("heat time must be positive")
        if self.truncation_radius is None:
            object.__setattr__(self, "truncation_radius", default_truncation_radius(self.tau, self.n))
        ratio = _theta_tail_ratio(self.tau, self.truncation_radius, self.n)
        if ratio > THETA_TAIL_TOL:
            raise TruncationTooSmall(
                f"radius {self.truncation_radius} leaves relative tail {ratio:.2e} at tau={self.tau}")
        object.__setattr__(self, "tail_bound", ratio)

    def _axis_sum(self, d):
        R = self.truncation_radius
        J = math.ceil(R + 0.5)
        z = d[..., None] + np.arange(-J, J + 1)
        terms = np.where(np.abs(z) <= R, np.exp(-(z * z) / (4.0 * self.tau)), 0.0)
        return terms.sum(axis=-1) / math.sqrt(4.0 * math.pi * self.tau)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.n == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        d = x - y
        d = d - np.round(d)
        return np.prod(self._axis_sum(d), axis=-1)


def theta_kernel_eval(k, x, y):
    """Lattice sum sum_m (4 pi tau)^(-n/2) exp(-|x - y + m|^2 / 4 tau)."""
    out = k(x, y)
    return float(out) if np.ndim(out) == 0 else out


def heat_kernel_fourier(x, y, tau, n, cutoff=None):
    """Fourier side of the same kernel: sum_k exp(-4 pi^2 |k|^2 tau) e^{2 pi i k.(x-y)}."""
    if cutoff is None:
        cutoff = int(math.ceil(math.sqrt(40.0 / (4 * math.pi ** 2 * tau)))) + 1
    x = np.asarray(x, dtype=float).reshape(-1, n) if n > 1 or np.ndim(x) else np.array([[float(x)]])
    y = np.asarray(y, dtype=float).reshape(-1, n) if n > 1 or np.ndim(y) else np.array([[float(y)]])
    ks = np.arange(-cutoff, cutoff + 1)
    d = x - y
    factors = []
    for i in range(n):
        phase = np.exp(-4 * np.pi ** 2 * ks ** 2 * tau) * np.cos(2 * np.pi * ks * d[:, i:i + 1])
        factors.append(phase.sum(axis=-1))
    return np.prod(factors, axis=0)


def wavenumbers(shape):
    """Integer wavenumber grids matching ``numpy.fft.fftn`` on a unit torus."""
    axes = [np.fft.fftfreq(N, d=1.0 / N) for N in shape]
    return np.meshgrid(*axes, indexing="ij")


def spectral_heat_apply(coeffs, tau):
    """Apply exp(-tau Delta) to Fourier coefficients on the unit torus."""
    ks = wavenumbers(coeffs.shape)
    k2 = sum(k * k for k in ks)
    return coeffs * np.exp(-4 * np.pi ** 2 * tau * k2)


def fixed_modes(A, cutoff):
    """Integer modes k with A^T k = k and |k|_inf <= cutoff."""
    A = np.asarray(A, dtype=int)
    n = A.shape[0]
    ks = np.array(list(itertools.product(range(-cutoff, cutoff + 1), repeat=n)), dtype=int)
    keep = np.all(ks @ A == ks, axis=1)
    return ks[keep]


def spectral_supertrace(map, ht):
    """Str(T exp(-tau Delta)) for the de Rham complex on T^n, summed mode by mode.

    T maps the mode e^{2 pi i k.x} dx^I to e^{2 pi i k.b} e^{2 pi i (A^T k).x}
    Lambda(A^T) dx^I, so only modes with A^T k = k lie on the diagonal; each
    contributes e^{2 pi i k.b} det(I - A^T) e^{-4 pi^2 |k|^2 tau}.
    """
    A = np.array(map.matrix, dtype=float)
    local = float(supertrace(exterior_algebra_action(A.T)))
    if local == 0.0:
        # every diagonal mode carries the factor det(I - A^T) = 0
        return 0.0
    # det(A - I) != 0, so A^T - I is injective and the search box only needs k = 0
    total = 0.0
    for k in fixed_modes(np.array(map.matrix), cutoff=1):
        phase = math.cos(2 * math.pi * float(k @ map.b))
        total += phase * local * math.exp(-4 * math.pi ** 2 * float(k @ k) * ht.tau)
    return total


# ---------------------------------------------------------------------------
# constant-coefficient model operators on R^n

def sphere_samples(n, count=SPHERE_SAMPLES):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        theta = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    # Fibonacci points on S^2, lifted to S^{n-1} by padding and normalising
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    golden = np.pi * (1 + 5 ** 0.5) * i
    pts = np.stack([np.cos(golden) * np.sin(phi), np.sin(golden) * np.sin(phi), np.cos(phi)], axis=-1)
    if n > 3:
        rng = np.random.default_rng(12345)
        extra = rng.normal(size=(count, n))
        extra /= np.linalg.norm(extra, axis=-1, keepdims=True)
        pts = np.concatenate([np.pad(pts, ((0, 0), (0, n - 3))), extra])
    return pts


@dataclass
class EllipticSymbol:
    """q(xi) = sum_alpha a_alpha xi^alpha with |alpha| = 2s and matrix coefficients."""

    n: int
    s: int
    terms: list

    def __post_init__(self):
        clean = []
        for alpha, coeff in self.terms:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n:
                raise ValueError(f"multi-index {alpha} does not have {self.n} entries")
            if sum(alpha) != 2 * self.s or min(alpha) < 0:
                raise ValueError(f"multi-index {alpha} must have order {2 * self.s}")
            coeff = np.atleast_2d(np.asarray(coeff, dtype=float))
            clean.append((alpha, coeff))
        ranks = {c.shape for _, c in clean}
        if len(ranks) != 1 or any(r[0] != r[1] for r in ranks):
            raise ValueError("coefficients must be square matrices of a common size")
        self.terms = clean

    @property
    def rank(self):
        return self.terms[0][1].shape[0]

    @classmethod
    def laplacian_power(cls, n, s, coeff=1.0):
        """Symbol ``coeff * |xi|^(2s)`` expanded into monomials."""
        terms = []
        for combo in itertools.product(range(s + 1), repeat=n):
            if sum(combo) != s:
                continue
            mult = math.factorial(s)
            for c in combo:
                mult //= math.factorial(c)
            terms.append((tuple(2 * c for c in combo), mult * np.atleast_2d(np.asarray(coeff, dtype=float))))
        return cls(n, s, terms)

    def __call__(self, xi):
        """Evaluate q on frequencies of shape (..., n); returns (..., r, r)."""
        xi = np.asarray(xi, dtype=float)
        out = 0.0
        for alpha, coeff in self.terms:
            mono = np.prod(xi ** np.array(alpha), axis=-1)
            out = out + mono[..., None, None] * coeff
        return out

    def check_ellipticity(self):
        """Raise EllipticityFailure unless every coefficient and q on the sphere are PD.

        Returns the smallest and largest eigenvalue of q over the sphere sample.
        """
        for alpha, coeff in self.terms:
            if not np.allclose(coeff, coeff.T, atol=1e-14):
                raise EllipticityFailure(f"coefficient of xi^{alpha} is not symmetric")
            if np.linalg.eigvalsh(coeff).min() <= 0:
                raise EllipticityFailure(f"coefficient of xi^{alpha} is not positive definite")
        omega = sphere_samples(self.n)
        eig = np.linalg.eigvalsh(self(omega))
        worst = int(np.argmin(eig[:, 0]))
        low = float(eig[worst, 0])
        if low <= 1e-10:
            raise EllipticityFailure(
                f"q(xi) has eigenvalue {low:.3e} in direction {omega[worst].tolist()}",
                direction=omega[worst].tolist())
        return low, float(eig[:, -1].max())


def _expm_neg_sym(q):
    """exp(-q) for symmetric q by eigendecomposition, batched."""
    if q.shape[-1] == 1:
        return np.exp(-q)
    w, v = np.linalg.eigh(q)
    return (v * np.exp(-w)[..., None, :]) @ np.swapaxes(v, -1, -2)


DEFAULT_SAMPLES = {1: 1 << 12, 2: 1 << 9}


@dataclass
class FrequencyGrid:
    """Uniform frequency grid on [-L, L)^n carrying exp(-q(xi))."""

    axis: np.ndarray
    values: np.ndarray  # (N,)*n + (r, r)
    half_width: float

    @property
    def step(self):
        return float(self.axis[1] - self.axis[0])


def frequency_grid(sym, samples=None):
    low, _ = sym.check_ellipticity()
    L = 1.05 * (BOX_EDGE_SYMBOL / low) ** (1.0 / (2 * sym.s))
    N = samples or DEFAULT_SAMPLES.get(sym.n, 1 << 6)
    axis = -L + 2 * L * np.arange(N) / N
    # the box boundary is where q is smallest relative to the interior
    edge = []
    for i in range(sym.n):
        for sign in (-1.0, 1.0):
            face = np.meshgrid(*[axis if j != i else np.array([sign * L]) for j in range(sym.n)], indexing="ij")
            edge.append(np.stack([f.ravel() for f in face], axis=-1))
    edge = np.concatenate(edge)
    edge_min = np.linalg.eigvalsh(sym(edge))[:, 0].min()
    if math.exp(-edge_min) > 1e-14:
        raise FrequencyBoxTooSmall(f"exp(-q) = {math.exp(-edge_min):.2e} on the box edge L = {L}")
    mesh = np.meshgrid(*([axis] * sym.n), indexing="ij")
    xi = np.stack(mesh, axis=-1)
    return FrequencyGrid(axis=axis, values=_expm_neg_sym(sym(xi)), half_width=L)


def _contract_points(fg, X):
    """(h / 2 pi)^n sum_xi exp(-q(xi)) e^{i X.xi} at each row of X."""
    n = X.shape[-1]
    h = fg.step
    out = fg.values.astype(complex)
    E = np.exp(1j * X[:, 0, None] * fg.axis[None, :])
    out = np.tensordot(E, out, axes=([1], [0]))  # (m, N, ..., r, r)
    for i in range(1, n):
        E = np.exp(1j * X[:, i, None] * fg.axis[None, :])
        out = np.einsum("mk,mk...->m...", E, out)
    return (out * (h / (2 * np.pi)) ** n).real


def _contract_tensor(fg, axis_points):
    """Kernel on the tensor grid axis_points^n; returns (M,)*n + (r, r)."""
    h = fg.step
    E = np.exp(1j * np.asarray(axis_points)[:, None] * fg.axis[None, :])
    out = fg.values.astype(complex)
    n = out.ndim - 2
    for i in range(n):
        out = np.tensordot(E, out, axes=([1], [i]))
        out = np.moveaxis(out, 0, i)
    return (out * (h / (2 * np.pi)) ** n).real


def model_kernel(sym, X, samples=None, chunk=64):
    """Heat kernel at time 1 of the operator with symbol q, evaluated at X.

    The inverse Fourier transform of exp(-q(xi)) is computed by the
    trapezoid rule on a truncated frequency box whose edge has q >= 36.
    Returns an (r, r) matrix for a single point or (m, r, r) for m points.
    """
    fg = frequency_grid(sym, samples)
    X = np.asarray(X, dtype=float)
    single = X.ndim == 0 or (X.ndim == 1 and X.shape[0] == sym.n and sym.n > 1) or (X.ndim == 1 and sym.n == 1 and X.shape[0] == 1)
    pts = X.reshape(-1, sym.n)
    parts = [_contract_points(fg, pts[i:i + chunk]) for i in range(0, len(pts), chunk)]
    out = np.concatenate(parts)
    return out[0] if single else out


def model_kernel_total_integral(sym, tol=1e-10, samples=None, max_doublings=10):
    """Integral of the model kernel over R^n by the trapezoid rule on expanding boxes.

    The spatial step pi / L keeps aliasing below exp(-q) at twice the
    frequency box edge.  The box doubles until the integral changes by less
    than ``tol``.
    """
    fg = frequency_grid(sym, samples)
    _, high = sym.check_ellipticity()
    dx = math.pi / fg.half_width
    radius = 8.0 * max(1.0, high) ** (1.0 / (2 * sym.s))
    previous = None
    for _ in range(max_doublings):
        count = int(math.ceil(radius / dx))
        axis = dx * np.arange(-count, count + 1)
        values = _contract_tensor(fg, axis)
        total = values.reshape((-1,) + values.shape[-2:]).sum(axis=0) * dx ** sym.n
        if previous is not None and np.abs(total - previous).max() < tol:
            return total
        previous = total
        radius *= 2.0
    raise FrequencyBoxTooSmall(f"kernel integral did not stabilise within radius {radius}")


def gaussian_model_kernel(X, n, coeff=1.0):
    """Closed form for the symbol coeff * |xi|^2: (4 pi c)^(-n/2) exp(-|X|^2 / 4c)."""
    X = np.asarray(X, dtype=float)
    if n == 1 and (X.ndim == 0 or X.shape[-1] != 1):
        X = X[..., None]
    r2 = np.sum(X * X, axis=-1)
    return (4 * np.pi * coeff) ** (-n / 2) * np.exp(-r2 / (4 * coeff))


def rescaled_symbol_kernel(sym_field, m, t, X, offset=0.0, samples=None):
    """Frozen-coefficient kernel of exp(-sum a_alpha(tX + m) d^alpha) at ``offset``.

    ``sym_field`` maps a base point to an EllipticSymbol.  Lower-order terms
    are dropped; at t = 0 this is the model kernel with coefficients a(m).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    base = np.asarray(m, dtype=float) + t * np.asarray(X, dtype=float)
    return model_kernel(sym_field(base), offset, samples=samples)
