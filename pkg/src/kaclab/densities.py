"""One-dimensional velocity densities with closed-form or tabulated representations.

All densities expose the same duck-typed surface used by the PDE solver, the
chaos samplers and the entropy estimators: ``pdf``, ``logpdf``, ``sample``,
``moment``, ``sup``, ``charfn`` (Fourier characteristic function),
``square_charfn`` (characteristic function of v**2) and
``pair_square_density`` (density of v1**2 + v2**2 for an independent pair).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def gaussian_logpdf(v, variance: float = 1.0):
    v = np.asarray(v, dtype=float)
    return -0.5 * v * v / variance - LOG_SQRT_2PI - 0.5 * math.log(variance)


def _double_factorial_odd(k: int) -> float:
    # (k-1)!! for even k, the k-th moment of a standard normal
    out = 1.0
    for j in range(k - 1, 0, -2):
        out *= j
    return out


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of Gaussians, sum_k w_k N(mu_k, a_k)."""

    weights: tuple[float, ...]
    variances: tuple[float, ...]
    means: tuple[float, ...] | None = None
    name: str = "mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        a = np.asarray(self.variances, dtype=float)
        if w.shape != a.shape or w.ndim != 1 or w.size == 0:
            raise ValueError("weights and variances must be matching 1-d sequences")
        if np.any(w <= 0) or np.any(a <= 0):
            raise ValueError("weights and variances must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if self.means is not None and len(self.means) != w.size:
            raise ValueError("means must match weights")

    @property
    def _w(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def _a(self):
        return np.asarray(self.variances, dtype=float)

    @property
    def _mu(self):
        if self.means is None:
            return np.zeros(len(self.weights))
        return np.asarray(self.means, dtype=float)

    @property
    def centered(self) -> bool:
        return self.means is None or not np.any(self._mu)

    @property
    def is_maxwellian(self) -> bool:
        """True when the density is the standard Gaussian, so f/gamma == 1."""
        return (
            self.centered
            and np.allclose(self._a, 1.0, rtol=0, atol=0)
        )

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)[..., None]
        a, mu = self._a, self._mu
        terms = np.log(self._w) - 0.5 * (v - mu) ** 2 / a - LOG_SQRT_2PI - 0.5 * np.log(a)
        if terms.shape[-1] == 1:
            return terms[..., 0]
        return special.logsumexp(terms, axis=-1)

    def pdf(self, v):
        return np.exp(self.logpdf(v))

    def sample(self, rng: np.random.Generator, size):
        comp = rng.choice(len(self.weights), size=size, p=self._w)
        z = rng.standard_normal(size)
        return self._mu[comp] + np.sqrt(self._a[comp]) * z

    def moment(self, k: int) -> float:
        """Raw moment E[v**k], exact."""
        total = 0.0
        for w, a, mu in zip(self._w, self._a, self._mu):
            # E[(mu + s Z)^k] by binomial expansion
            s = math.sqrt(a)
            acc = 0.0
            for j in range(0, k + 1, 2):
                acc += math.comb(k, j) * mu ** (k - j) * s**j * _double_factorial_odd(j)
            total += w * acc
        return total

    @property
    def sup(self) -> float:
        if self.centered:
            return float(self.pdf(0.0))
        lo = float(np.min(self._mu - 8 * np.sqrt(self._a)))
        hi = float(np.max(self._mu + 8 * np.sqrt(self._a)))
        return float(np.max(self.pdf(np.linspace(lo, hi, 20001))))

    def charfn(self, xi):
        xi = np.asarray(xi, dtype=float)[..., None]
        vals = self._w * np.exp(1j * xi * self._mu - 0.5 * self._a * xi * xi)
        return vals.sum(axis=-1)

    def square_charfn(self, t):
        """E[exp(i t v**2)]."""
        t = np.asarray(t, dtype=float)[..., None]
        denom = 1.0 - 2j * t * self._a
        vals = self._w * np.exp(1j * t * self._mu**2 / denom) / np.sqrt(denom)
        return vals.sum(axis=-1)

    def pair_square_density(self, y):
        """Density of v1**2 + v2**2 for an independent pair drawn from this density."""
        if not self.centered:
            return _pair_square_density_quadrature(self, y)
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        pos = y > 0
        yy = y[pos]
        acc = np.zeros_like(yy)
        w, a = self._w, self._a
        for k in range(w.size):
            for l in range(w.size):
                A, B = 0.5 / a[k], 0.5 / a[l]
                # circle integral of two centred Gaussians: I0 Bessel form
                acc += (
                    w[k] * w[l] / (2.0 * math.sqrt(a[k] * a[l]))
                    * np.exp(-yy * min(A, B))
                    * special.i0e(0.5 * yy * abs(A - B))
                )
        out[pos] = acc
        return out


@dataclass(frozen=True)
class FDeltaDensity(GaussianMixture):
    """Two-temperature state: a fraction delta of hot particles carrying half the energy.

    ``f_delta = delta * N(0, 1/(2 delta)) + (1 - delta) * N(0, 1/(2 (1 - delta)))``,
    with unit second moment for every delta in (0, 1/2].
    """

    delta: float = 0.25

    @property
    def is_maxwellian(self) -> bool:
        return self.delta == 0.5


def fdelta(delta: float) -> FDeltaDensity:
    if not 0.0 < delta <= 0.5:
        raise ValueError(f"delta must lie in (0, 1/2], got {delta!r}")
    if delta == 0.5:
        return FDeltaDensity((1.0,), (1.0,), None, f"fdelta:{delta:g}", delta)
    return FDeltaDensity(
        (delta, 1.0 - delta),
        (1.0 / (2.0 * delta), 1.0 / (2.0 * (1.0 - delta))),
        None,
        f"fdelta:{delta:g}",
        delta,
    )


def maxwellian() -> GaussianMixture:
    return GaussianMixture((1.0,), (1.0,), None, "gaussian")


def gaussian(variance: float) -> GaussianMixture:
    return GaussianMixture((1.0,), (float(variance),), None, f"gaussian:{variance:g}")


def bimodal(variance: float = 0.25) -> GaussianMixture:
    """Symmetric pair of Gaussians at +-m with m**2 + variance = 1 (unit energy)."""
    if not 0.0 < variance < 1.0:
        raise ValueError("component variance must lie in (0, 1)")
    m = math.sqrt(1.0 - variance)
    return GaussianMixture((0.5, 0.5), (variance, variance), (-m, m), f"bimodal:{variance:g}")


def _pair_square_density_quadrature(dens, y, n_theta: int = 256):
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    r = np.sqrt(y[pos])[..., None]
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    vals = dens.pdf(r * np.cos(th)) * dens.pdf(r * np.sin(th))
    out[pos] = 0.5 * 2.0 * np.pi * vals.mean(axis=-1)
    return out


@dataclass(frozen=True)
class TabulatedDensity:
    """Density given by values on a uniform grid; linear interpolation, zero outside."""

    v: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    name: str = "tabulated"

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if v.ndim != 1 or v.shape != f.shape or v.size < 3:
            raise ValueError("grid and values must be matching 1-d arrays")
        if np.any(np.diff(v) <= 0):
            raise ValueError("grid must be increasing")
        if np.any(f < 0):
            raise ValueError("density values must be non-negative")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "f", f / np.trapezoid(f, v))

    is_maxwellian = False

    def pdf(self, x):
        return np.interp(x, self.v, self.f, left=0.0, right=0.0)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def sample(self, rng, size):
        # piecewise-linear CDF inversion on the midpoint rule
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (self.f[1:] + self.f[:-1]) * np.diff(self.v))])
        cdf /= cdf[-1]
        return np.interp(rng.random(size), cdf, self.v)

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.v**k * self.f, self.v))

    @property
    def sup(self) -> float:
        return float(self.f.max())

    def charfn(self, xi):
        xi = np.asarray(xi, dtype=float)
        w = np.full(self.v.size, self.v[1] - self.v[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return np.exp(1j * np.multiply.outer(xi, self.v)) @ (w * self.f)

    def square_charfn(self, t):
        t = np.asarray(t, dtype=float)
        w = np.full(self.v.size, self.v[1] - self.v[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return np.exp(1j * np.multiply.outer(t, self.v**2)) @ (w * self.f)

    def pair_square_density(self, y):
        return _pair_square_density_quadrature(self, y)


def sigma_stat(dens) -> float:
    """Sigma = sqrt(int (v^2 - 1)^2 f dv), the fluctuation scale of the energy per particle."""
    from scipy import integrate

    if isinstance(dens, TabulatedDensity):
        return math.sqrt(np.trapezoid((dens.v**2 - 1.0) ** 2 * dens.f, dens.v))
    val, _ = integrate.quad(lambda x: (x * x - 1.0) ** 2 * float(dens.pdf(x)), -np.inf, np.inf, limit=400)
    return math.sqrt(val)
