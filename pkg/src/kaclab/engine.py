"""Exact simulation of the Kac walk and its Poissonized continuous-time evolution.

Conventions: the collision rate per unit time is N (lambda = 1) and the
energy is fixed to E = N, so 1D states live on the sphere of radius sqrt(N).
Random numbers for a batch of collisions are drawn up front with numpy and
the collisions themselves are applied by numba kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba as nb
import numpy as np
from scipy import special

from . import streams

REPROJECT_EVERY = 1_000_000
ENERGY_RTOL = 1e-9
THETA_TABLE_SIZE = 4096
C_TABLE_SIZE = 1024


class InvalidEnsembleError(ValueError):
    pass


class InvalidKernelError(ValueError):
    pass


def _gl_panels(a: float, b: float, n_panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _quantile_table(x: np.ndarray, pdf: np.ndarray, size: int) -> np.ndarray:
    """Inverse-CDF table at `size` equally spaced probability levels."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    # drop flat stretches so the inverse is single valued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    levels = np.linspace(0.0, 1.0, size)
    return np.interp(levels, cdf[keep], x[keep])


def _table_lookup(table: np.ndarray, u: np.ndarray) -> np.ndarray:
    pos = np.asarray(u) * (table.size - 1)
    k = np.minimum(pos.astype(np.int64), table.size - 2)
    frac = pos - k
    return table[k] + frac * (table[k + 1] - table[k])


# ---------------------------------------------------------------------------
# collision-angle law


@dataclass(frozen=True)
class ScatteringDensity:
    """Collision-angle density rho on [-pi, pi] (per radian).

    `density` must be vectorized. Construction validates normalization,
    evenness and non-negativity and builds a 4096-point inverse-CDF table.
    """

    density: Callable[[np.ndarray], np.ndarray]
    uniform: bool = False
    name: str = "custom"
    n_quad: int = 64
    table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.linspace(-np.pi, np.pi, 65537)
        vals = np.asarray(self.density(grid), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise InvalidKernelError(f"{self.name}: density must be finite and non-negative")
        if np.max(np.abs(vals - vals[::-1])) > 1e-12 * max(1.0, vals.max()):
            raise InvalidKernelError(f"{self.name}: density must be even in theta")
        x, w = _gl_panels(-np.pi, np.pi, 512, 20)
        mass = float(np.dot(w, self.density(x)))
        if abs(mass - 1.0) > 1e-10:
            raise InvalidKernelError(f"{self.name}: density integrates to {mass!r}, expected 1")
        object.__setattr__(self, "table", _quantile_table(grid, vals, THETA_TABLE_SIZE))

    def __call__(self, theta):
        return self.density(np.asarray(theta, dtype=float))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if self.uniform:
            return rng.uniform(-np.pi, np.pi, size)
        return _table_lookup(self.table, rng.random(size))

    def quadrature(self, n: int | None = None):
        """Nodes and rho-weights for integrals of 2pi-periodic functions.

        Periodic trapezoid rule: exact for trigonometric polynomials of
        degree below n times rho.
        """
        n = self.n_quad if n is None else n
        theta = -np.pi + 2.0 * np.pi * np.arange(n) / n
        return theta, (2.0 * np.pi / n) * self(theta)

    def expect(self, g: Callable[[np.ndarray], np.ndarray], n: int | None = None) -> float:
        """int g(theta) rho(theta) d theta."""
        theta, w = self.quadrature(n)
        return float(np.dot(w, g(theta)))

    def cosine_coefficient(self, k: int) -> float:
        """c_k = int cos(k theta) rho(theta) d theta."""
        n = max(self.n_quad, 4 * k + 8)
        return self.expect(lambda t: np.cos(k * t), n)


def uniform_rho() -> ScatteringDensity:
    return ScatteringDensity(lambda t: np.full(np.shape(t), 1.0 / (2.0 * np.pi)), True, "uniform")


def cos2_rho() -> ScatteringDensity:
    return ScatteringDensity(lambda t: np.cos(t) ** 2 / np.pi, False, "cos2")


def one_plus_cos_rho() -> ScatteringDensity:
    return ScatteringDensity(lambda t: (1.0 + np.cos(t)) / (2.0 * np.pi), False, "one_plus_cos")


def _von_mises(t, center, kappa):
    return np.exp(kappa * (np.cos(t - center) - 1.0)) / (2.0 * np.pi * special.i0e(kappa))


def bump_rho(center: float, width: float = 0.1) -> ScatteringDensity:
    """Symmetric pair of smooth periodic bumps at +-center with angular width `width`."""
    kappa = 1.0 / width**2
    n = max(64, int(16 / width))

    def dens(t):
        return 0.5 * (_von_mises(t, center, kappa) + _von_mises(t, -center, kappa))

    return ScatteringDensity(dens, False, f"bump:{center:g}:{width:g}", n)


def small_angle_rho(width: float = 0.1) -> ScatteringDensity:
    return bump_rho(0.0, width)


def scattering_from_spec(spec: str) -> ScatteringDensity:
    """Parse 'uniform', 'cos2', 'one_plus_cos', 'bump:<c>:<w>', 'small_angle:<w>'."""
    parts = spec.split(":")
    kind = parts[0]
    args = [float(p) for p in parts[1:]]
    if kind == "uniform":
        return uniform_rho()
    if kind == "cos2":
        return cos2_rho()
    if kind == "one_plus_cos":
        return one_plus_cos_rho()
    if kind == "bump":
        return bump_rho(*args)
    if kind == "small_angle":
        return small_angle_rho(*args)
    raise InvalidKernelError(f"unknown scattering kernel {spec!r}")


# ---------------------------------------------------------------------------
# 3D angular kernel


@dataclass(frozen=True)
class AngularKernel3D:
    """Kernel B on [-1, 1] with (1/2) int B = 1; c = e.w is drawn from density B/2."""

    kernel: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    B1: float = field(init=False)
    B2: float = field(init=False)
    table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, w = _gl_panels(-1.0, 1.0, 64, 20)
        b = np.asarray(self.kernel(x), dtype=float)
        if np.any(b < 0) or not np.all(np.isfinite(b)):
            raise InvalidKernelError(f"{self.name}: kernel must be finite and non-negative")
        mass = 0.5 * float(np.dot(w, b))
        if abs(mass - 1.0) > 1e-10:
            raise InvalidKernelError(f"{self.name}: (1/2) int B = {mass!r}, expected 1")
        object.__setattr__(self, "B1", 0.5 * float(np.dot(w, x * b)))
        object.__setattr__(self, "B2", 0.5 * float(np.dot(w, x * x * b)))
        grid = np.linspace(-1.0, 1.0, 65537)
        object.__setattr__(self, "table", _quantile_table(grid, self.kernel(grid), C_TABLE_SIZE))

    def __call__(self, x):
        return self.kernel(np.asarray(x, dtype=float))

    def legendre_moment(self, l: int) -> float:
        """lambda_l = (1/2) int B(x) P_l(x) dx."""
        x, w = _gl_panels(-1.0, 1.0, 64, 20)
        return 0.5 * float(np.dot(w, self.kernel(x) * special.eval_legendre(l, x)))

    def sample_cos(self, rng, size=None):
        return _table_lookup(self.table, rng.random(size))


def uniform_kernel3d() -> AngularKernel3D:
    return AngularKernel3D(lambda x: np.ones(np.shape(x)), "uniform")


def exponential_kernel3d(kappa: float) -> AngularKernel3D:
    """B(x) = kappa exp(kappa x) / sinh(kappa); forward peaked for kappa > 0."""
    if kappa == 0:
        return uniform_kernel3d()
    k = float(kappa)

    def b(x):
        # kappa e^{kappa x}/sinh(kappa) written to avoid overflow
        return 2.0 * abs(k) * np.exp(k * x - abs(k)) / (-np.expm1(-2.0 * abs(k)))

    return AngularKernel3D(b, f"exponential:{k:g}")


def kernel3d_from_spec(spec: str) -> AngularKernel3D:
    parts = spec.split(":")
    if parts[0] == "uniform":
        return uniform_kernel3d()
    if parts[0] == "exponential":
        return exponential_kernel3d(float(parts[1]))
    raise InvalidKernelError(f"unknown 3D kernel {spec!r}")


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class Ensemble1D:
    v: np.ndarray

    def __post_init__(self):
        self.v = np.array(self.v, dtype=float)
        if self.v.ndim != 1 or self.v.size < 2:
            raise InvalidEnsembleError("a 1D ensemble needs N >= 2 scalar velocities")
        e = float(np.dot(self.v, self.v))
        if abs(e - self.N) > ENERGY_RTOL * self.N:
            raise InvalidEnsembleError(f"energy {e!r} differs from N = {self.N}")

    @property
    def N(self) -> int:
        return self.v.size

    @classmethod
    def project(cls, v) -> "Ensemble1D":
        """Rescale arbitrary nonzero velocities onto the sphere of radius sqrt(N)."""
        v = np.asarray(v, dtype=float)
        norm2 = float(np.dot(v, v))
        if norm2 <= 0:
            raise InvalidEnsembleError("cannot project the zero vector")
        return cls(v * math.sqrt(v.size / norm2))

    def copy(self) -> "Ensemble1D":
        return Ensemble1D(self.v.copy())


@dataclass
class Ensemble3D:
    v: np.ndarray

    def __post_init__(self):
        self.v = np.array(self.v, dtype=float)
        if self.v.ndim != 2 or self.v.shape[1] != 3 or self.v.shape[0] < 2:
            raise InvalidEnsembleError("a 3D ensemble needs an (N, 3) array with N >= 2")
        e = float(np.sum(self.v * self.v))
        if abs(e - self.N) > ENERGY_RTOL * self.N:
            raise InvalidEnsembleError(f"energy {e!r} differs from N = {self.N}")
        p = self.v.sum(axis=0)
        if np.max(np.abs(p)) > ENERGY_RTOL * self.N:
            raise InvalidEnsembleError(f"total momentum {p!r} is not zero")

    @property
    def N(self) -> int:
        return self.v.shape[0]

    @classmethod
    def project(cls, v) -> "Ensemble3D":
        v = np.asarray(v, dtype=float)
        v = v - v.mean(axis=0)
        norm2 = float(np.sum(v * v))
        if norm2 <= 0:
            raise InvalidEnsembleError("cannot project a state with zero relative energy")
        return cls(v * math.sqrt(v.shape[0] / norm2))

    def copy(self) -> "Ensemble3D":
        return Ensemble3D(self.v.copy())


@dataclass
class JumpClock:
    """Elapsed time and applied-collision count of one trajectory (rate lambda*N, lambda = 1)."""

    N: int
    t: float = 0.0
    k: int = 0
    null: int = 0

    @property
    def rate(self) -> float:
        return float(self.N)


# ---------------------------------------------------------------------------
# kernels


@nb.njit(cache=True)
def _reproject_1d(v):
    n = v.shape[0]
    s = 0.0
    for a in range(n):
        s += v[a] * v[a]
    scale = math.sqrt(n / s)
    for a in range(n):
        v[a] *= scale


@nb.njit(cache=True)
def _run_1d(v, ii, jj, theta, count0, every):
    count = count0
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        c = math.cos(theta[k])
        s = math.sin(theta[k])
        vi = v[i]
        vj = v[j]
        v[i] = vi * c - vj * s
        v[j] = vi * s + vj * c
        count += 1
        if count % every == 0:
            _reproject_1d(v)
    return count


@nb.njit(cache=True)
def _reproject_3d(v):
    n = v.shape[0]
    for d in range(3):
        m = 0.0
        for a in range(n):
            m += v[a, d]
        m /= n
        for a in range(n):
            v[a, d] -= m
    s = 0.0
    for a in range(n):
        for d in range(3):
            s += v[a, d] * v[a, d]
    scale = math.sqrt(n / s)
    for a in range(n):
        for d in range(3):
            v[a, d] *= scale


@nb.njit(cache=True)
def _collide_3d(v, i, j, c, phi):
    """Apply one collision; returns False for a degenerate (v_i == v_j) pair."""
    g0 = v[i, 0] - v[j, 0]
    g1 = v[i, 1] - v[j, 1]
    g2 = v[i, 2] - v[j, 2]
    g = math.sqrt(g0 * g0 + g1 * g1 + g2 * g2)
    if g == 0.0:
        return False
    e0, e1, e2 = g0 / g, g1 / g, g2 / g
    # complete e to an orthonormal frame using the axis least aligned with it
    a0, a1, a2 = abs(e0), abs(e1), abs(e2)
    if a0 <= a1 and a0 <= a2:
        p0, p1, p2 = 1.0 - e0 * e0, -e0 * e1, -e0 * e2
    elif a1 <= a2:
        p0, p1, p2 = -e1 * e0, 1.0 - e1 * e1, -e1 * e2
    else:
        p0, p1, p2 = -e2 * e0, -e2 * e1, 1.0 - e2 * e2
    pn = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
    p0, p1, p2 = p0 / pn, p1 / pn, p2 / pn
    q0 = e1 * p2 - e2 * p1
    q1 = e2 * p0 - e0 * p2
    q2 = e0 * p1 - e1 * p0
    sn = math.sqrt(max(0.0, 1.0 - c * c))
    cp = math.cos(phi)
    sp = math.sin(phi)
    w0 = c * e0 + sn * (cp * p0 + sp * q0)
    w1 = c * e1 + sn * (cp * p1 + sp * q1)
    w2 = c * e2 + sn * (cp * p2 + sp * q2)
    s0 = v[i, 0] + v[j, 0]
    s1 = v[i, 1] + v[j, 1]
    s2 = v[i, 2] + v[j, 2]
    v[i, 0] = 0.5 * (s0 + g * w0)
    v[i, 1] = 0.5 * (s1 + g * w1)
    v[i, 2] = 0.5 * (s2 + g * w2)
    v[j, 0] = 0.5 * (s0 - g * w0)
    v[j, 1] = 0.5 * (s1 - g * w1)
    v[j, 2] = 0.5 * (s2 - g * w2)
    return True


@nb.njit(cache=True)
def _run_3d(v, ii, jj, cc, phi, count0, every):
    count = count0
    null = 0
    for k in range(ii.shape[0]):
        if not _collide_3d(v, ii[k], jj[k], cc[k], phi[k]):
            null += 1
        count += 1
        if count % every == 0:
            _reproject_3d(v)
    return count, null


def _draw_pairs(rng: np.random.Generator, n: int, k: int):
    i = rng.integers(0, n, size=k)
    j = rng.integers(0, n - 1, size=k)
    j = j + (j >= i)
    return i, j


# ---------------------------------------------------------------------------
# operations


def sample_theta(rho: ScatteringDensity, rng: np.random.Generator, size=None):
    return rho.sample(rng, size)


def rotate_pair(vi, vj, theta):
    c, s = math.cos(theta), math.sin(theta)
    return vi * c - vj * s, vi * s + vj * c


def kac_step(e: Ensemble1D, rho: ScatteringDensity, rng: np.random.Generator,
             theta: float | None = None, pair: tuple[int, int] | None = None) -> Ensemble1D:
    """One collision: a uniformly chosen pair rotated by theta ~ rho. Returns a new ensemble."""
    if e.N < 2:
        raise InvalidEnsembleError("need at least two particles")
    if pair is None:
        i, j = (int(x[0]) for x in _draw_pairs(rng, e.N, 1))
    else:
        i, j = pair
    th = float(rho.sample(rng)) if theta is None else float(theta)
    v = e.v.copy()
    v[i], v[j] = rotate_pair(v[i], v[j], th)
    return Ensemble1D(v)


def kac_step_3d(e: Ensemble3D, B: AngularKernel3D, rng: np.random.Generator,
                w_cos: float | None = None, pair: tuple[int, int] | None = None) -> Ensemble3D:
    """One 3D collision; a degenerate pair is a null collision (the law is the identity there)."""
    if pair is None:
        i, j = (int(x[0]) for x in _draw_pairs(rng, e.N, 1))
    else:
        i, j = pair
    c = float(B.sample_cos(rng)) if w_cos is None else float(w_cos)
    phi = float(rng.uniform(0.0, 2.0 * np.pi))
    v = e.v.copy()
    _collide_3d(v, i, j, c, phi)
    return Ensemble3D(v)


def run_collisions(v: np.ndarray, k: int, kernel, rng: np.random.Generator, clock: JumpClock | None = None):
    """Apply k collisions in place to a raw velocity array (1D if v.ndim == 1)."""
    n = v.shape[0]
    count0 = clock.k if clock is not None else 0
    if k == 0:
        return v
    ii, jj = _draw_pairs(rng, n, k)
    if v.ndim == 1:
        theta = kernel.sample(rng, k)
        count = _run_1d(v, ii, jj, theta, count0, REPROJECT_EVERY)
        null = 0
    else:
        cc = kernel.sample_cos(rng, k)
        phi = rng.uniform(0.0, 2.0 * np.pi, k)
        count, null = _run_3d(v, ii, jj, cc, phi, count0, REPROJECT_EVERY)
    if clock is not None:
        clock.k = int(count)
        clock.null += int(null)
    return v


def evolve(e, t: float, kernel, rng: np.random.Generator, clock: JumpClock | None = None):
    """Advance by time t: K ~ Poisson(N t) collisions. Returns a new ensemble."""
    if t < 0:
        raise ValueError("time must be non-negative")
    k = int(rng.poisson(e.N * t)) if t > 0 else 0
    v = e.v.copy()
    run_collisions(v, k, kernel, rng, clock)
    if clock is not None:
        clock.t += t
    return type(e)(v)


@dataclass
class TraceResult:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    collisions: np.ndarray  # mean collision count per replica at each time

    def fit_rate(self, t_min: float = 0.0):
        """Weighted least-squares decay rate of log(mean) against t (positive means only)."""
        sel = (self.times >= t_min) & (self.mean > 0)
        t = self.times[sel]
        y = np.log(self.mean[sel])
        se = np.where(self.stderr[sel] > 0, self.stderr[sel] / self.mean[sel], 1.0)
        w = 1.0 / se**2
        A = np.vstack([np.ones_like(t), t]).T
        cov = np.linalg.inv(A.T @ (A * w[:, None]))
        coef = cov @ (A.T @ (w * y))
        return -coef[1], math.sqrt(cov[1, 1])


def observable_trace(e0, observable: Callable[[np.ndarray], float], times, replicas: int, kernel,
                     seed: int, experiment: str = "trace") -> TraceResult:
    """Monte Carlo mean and standard error of observable(V_t) over independent replicas.

    Replica r uses the stream (seed, experiment, r), so results do not
    depend on the order in which replicas are run.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("empty time list")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and ascending")
    if replicas < 1:
        raise ValueError("need at least one replica")
    n = e0.N
    vals = np.empty((replicas, times.size))
    counts = np.empty((replicas, times.size))
    for r in range(replicas):
        rng = streams.stream(seed, experiment, r)
        v = e0.v.copy()
        clock = JumpClock(n)
        t_prev = 0.0
        for a, t in enumerate(times):
            dt = t - t_prev
            k = int(rng.poisson(n * dt)) if dt > 0 else 0
            run_collisions(v, k, kernel, rng, clock)
            clock.t = t
            t_prev = t
            vals[r, a] = observable(v)
            counts[r, a] = clock.k
    mean = vals.mean(axis=0)
    if replicas > 1:
        stderr = vals.std(axis=0, ddof=1) / math.sqrt(replicas)
    else:
        stderr = np.zeros(times.size)
    return TraceResult(times, mean, stderr, counts.mean(axis=0))
