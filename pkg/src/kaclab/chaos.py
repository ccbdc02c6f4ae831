"""Chaotic families on the energy sphere: uniform measure, Mehler marginals,
conditioned tensor products and the normalization Z_N.

Z_N(f, sqrt(u)) = int (f/gamma)^{(x)N} d sigma_u equals p_U(u) / p_{chi2_N}(u),
where U = sum v_i^2 with v_i iid from f. Both estimators below rest on this
identity.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import mpmath as mp
import numba as nb
import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .densities import GaussianMixture, TabulatedDensity, gaussian_logpdf, sigma_stat
from .spectral import log_sphere_area


# ---------------------------------------------------------------------------
# uniform sphere and its marginals


def sample_uniform_sphere(N: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on S^{N-1}(sqrt N)."""
    if N < 2:
        raise ValueError("N >= 2 required")
    shape = (N,) if size is None else (size, N)
    z = rng.standard_normal(shape)
    r2 = np.sum(z * z, axis=-1, keepdims=True)
    while np.any(r2 == 0):  # probability zero
        bad = (r2 == 0).ravel()
        z[bad] = rng.standard_normal((int(bad.sum()), N))
        r2 = np.sum(z * z, axis=-1, keepdims=True)
    return z * np.sqrt(N / r2)


def log_mehler_marginal(N: int, k: int, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if k > N - 2:
        raise ValueError("k <= N - 2 required")
    r2 = v * v if k == 1 else np.sum(v * v, axis=-1)
    x = 1.0 - r2 / N
    const = log_sphere_area(N - k) - log_sphere_area(N) - 0.5 * k * math.log(N)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = const + 0.5 * (N - k - 2) * np.log(np.where(x > 0, x, 1.0))
    return np.where(x > 0, out, -np.inf)


def mehler_marginal_density(N: int, k: int, v) -> np.ndarray:
    """Density of (v_1..v_k) under the uniform measure on S^{N-1}(sqrt N).

    For k == 1 a plain array of velocities is accepted; for k > 1 the last
    axis holds the k coordinates. Zero outside the support.
    """
    return np.exp(log_mehler_marginal(N, k, v))


# ---------------------------------------------------------------------------
# conditioned products


def log_ratio_gaussian(f, v) -> np.ndarray:
    """log(f/gamma)(v); identically zero for the standard Gaussian."""
    v = np.asarray(v, dtype=float)
    if getattr(f, "is_maxwellian", False):
        return np.zeros_like(v)
    return f.logpdf(v) - gaussian_logpdf(v)


@dataclass
class ConditionedProduct:
    """[f^{(x)N}] restricted to S^{N-1}(sqrt N); density (f/gamma)^{(x)N}/Z_N w.r.t. sigma."""

    f: object
    N: int
    bound: float | None = None
    logZ: float | None = None
    logZ_stderr: float | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N >= 2 required")
        m1, m2, m4 = self.f.moment(1), self.f.moment(2), self.f.moment(4)
        if abs(m1) > 1e-8:
            raise ValueError(f"base density must be centred, mean = {m1!r}")
        if abs(m2 - 1.0) > 1e-8:
            raise ValueError(f"base density must have unit energy, int v^2 f = {m2!r}")
        if not np.isfinite(m4):
            raise ValueError("base density must have a finite fourth moment")
        if self.bound is None:
            self.bound = float(self.f.sup)
        if not np.isfinite(self.bound) or self.bound <= 0:
            raise ValueError("base density must be bounded")

    def log_weight(self, v) -> np.ndarray:
        """sum_i log(f/gamma)(v_i) along the last axis."""
        return np.sum(log_ratio_gaussian(self.f, v), axis=-1)

    def log_density(self, v) -> np.ndarray:
        """log F_N(v) relative to sigma; needs logZ."""
        if self.logZ is None:
            raise ValueError("logZ has not been estimated")
        return self.log_weight(v) - self.logZ


# ---------------------------------------------------------------------------
# MCMC with Kac-rotation proposals


@nb.njit(cache=True)
def _logf(x, kind, p0, p1, p2):
    if kind == 0:
        m = -np.inf
        for c in range(p0.shape[0]):
            t = p0[c] - 0.5 * (x - p2[c]) ** 2 / p1[c] - 0.5 * math.log(2.0 * math.pi * p1[c])
            if t > m:
                m = t
        s = 0.0
        for c in range(p0.shape[0]):
            s += math.exp(p0[c] - 0.5 * (x - p2[c]) ** 2 / p1[c] - 0.5 * math.log(2.0 * math.pi * p1[c]) - m)
        return m + math.log(s)
    # kind 1: linear interpolation on a uniform grid p0 with values p1
    lo = p0[0]
    h = p0[1] - p0[0]
    n = p0.shape[0]
    if x < lo or x > p0[n - 1]:
        return -np.inf
    pos = (x - lo) / h
    k = min(int(pos), n - 2)
    fr = pos - k
    val = p1[k] + fr * (p1[k + 1] - p1[k])
    if val <= 0.0:
        return -np.inf
    return math.log(val)


@nb.njit(cache=True)
def _mcmc_chunk(v, lf, ii, jj, theta, logu, kind, p0, p1, p2, out, out_pos, thin, burn_left, step0):
    accepted = 0
    n_out = out.shape[0]
    step = step0
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        c = math.cos(theta[k])
        s = math.sin(theta[k])
        vi = v[i] * c - v[j] * s
        vj = v[i] * s + v[j] * c
        li = _logf(vi, kind, p0, p1, p2)
        lj = _logf(vj, kind, p0, p1, p2)
        if logu[k] < li + lj - lf[i] - lf[j]:
            v[i] = vi
            v[j] = vj
            lf[i] = li
            lf[j] = lj
            accepted += 1
        step += 1
        if step > burn_left and (step - burn_left) % thin == 0 and out_pos < n_out:
            out[out_pos, :] = v
            out_pos += 1
    return accepted, out_pos, step


def _density_params(f):
    if isinstance(f, GaussianMixture):
        return 0, np.log(np.asarray(f.weights, float)), np.asarray(f.variances, float), f._mu.astype(float)
    if isinstance(f, TabulatedDensity):
        return 1, f.v.astype(float), f.f.astype(float), np.zeros(1)
    raise TypeError("MCMC supports GaussianMixture and TabulatedDensity base densities")


@dataclass
class ChainResult:
    samples: np.ndarray
    acceptance: float
    proposals: int


def sample_conditioned(cp: ConditionedProduct, n_samples: int, rng: np.random.Generator,
                       burn_in: int | None = None, thin: int | None = None,
                       chunk: int = 1_000_000) -> ChainResult:
    """Metropolis chain whose proposals are single Kac rotations (uniform pair, uniform angle).

    Rotations preserve sigma, so the acceptance ratio is
    f(v_i')f(v_j') / (f(v_i)f(v_j)). Defaults: burn-in 10 N proposals,
    thinning N proposals per retained sample.
    """
    N = cp.N
    burn = 10 * N if burn_in is None else burn_in
    thin = N if thin is None else thin
    kind, p0, p1, p2 = _density_params(cp.f)
    x0 = cp.f.sample(rng, N)
    v = x0 * math.sqrt(N / float(np.dot(x0, x0)))
    lf = np.array([_logf(x, kind, p0, p1, p2) for x in v])
    while not np.all(np.isfinite(lf)):  # start inside the support
        x0 = cp.f.sample(rng, N)
        v = x0 * math.sqrt(N / float(np.dot(x0, x0)))
        lf = np.array([_logf(x, kind, p0, p1, p2) for x in v])
    out = np.empty((n_samples, N))
    total = burn + n_samples * thin
    pos, step, acc = 0, 0, 0
    while step < total:
        k = min(chunk, total - step)
        ii = rng.integers(0, N, k)
        jj = rng.integers(0, N - 1, k)
        jj = jj + (jj >= ii)
        theta = rng.uniform(-np.pi, np.pi, k)
        logu = np.log(rng.random(k))
        a, pos, step = _mcmc_chunk(v, lf, ii, jj, theta, logu, kind, p0, p1, p2, out, pos, thin, burn, step)
        acc += a
    return ChainResult(out, acc / total, total)


# ---------------------------------------------------------------------------
# exact sampling for centred two-component mixtures (the f_delta family)


def _two_components(f):
    if not isinstance(f, GaussianMixture) or not f.centered or len(f.weights) > 2:
        raise NotImplementedError("exact sampling needs a centred mixture of at most two Gaussians")
    w = list(f.weights)
    a = list(f.variances)
    if len(w) == 1:
        w, a = [w[0], 0.0], [a[0], a[0]]
    # hot component first
    if a[1] > a[0]:
        w, a = w[::-1], a[::-1]
    return w, a


def _log_pU_given_K(u, n, K, a1, a2):
    """log density at u of a1 chi2_K + a2 chi2_{n-K} (mpmath)."""
    s1, s2 = 2 * mp.mpf(a1), 2 * mp.mpf(a2)
    u = mp.mpf(u)
    al, nn = mp.mpf(K) / 2, mp.mpf(n) / 2
    return ((nn - 1) * mp.log(u) - u / s2 - al * mp.log(s1) - (nn - al) * mp.log(s2)
            - mp.loggamma(nn) + mp.log(mp.hyp1f1(al, nn, u * (1 / s2 - 1 / s1))))


def log_pU_exact(f, u: float, n: int) -> float:
    """log density of U = sum_{i<=n} v_i^2 at u, v_i iid from a centred 2-Gaussian mixture."""
    w, a = _two_components(f)
    if w[1] == 0.0:
        return float(_log_chi2(u / a[0], n) - mp.log(a[0]))
    terms = []
    for K in range(n + 1):
        lb = mp.log(mp.binomial(n, K)) + K * mp.log(w[0]) + (n - K) * mp.log(w[1])
        terms.append(lb + _log_pU_given_K(u, n, K, a[0], a[1]))
    m = max(terms)
    return float(m + mp.log(mp.fsum(mp.e ** (t - m) for t in terms)))


def _log_chi2(u, n):
    u = mp.mpf(u)
    return (mp.mpf(n) / 2 - 1) * mp.log(u) - u / 2 - (mp.mpf(n) / 2) * mp.log(2) - mp.loggamma(mp.mpf(n) / 2)


def log_chi2_pdf(u, n) -> float:
    return float(special.xlogy(0.5 * n - 1, u) - 0.5 * u - 0.5 * n * math.log(2) - special.gammaln(0.5 * n))


def log_z_exact(f, N: int, u: float | None = None) -> float:
    """Exact log Z_N(f, sqrt u) for a centred mixture of at most two Gaussians."""
    u = float(N) if u is None else u
    return log_pU_exact(f, u, N) - float(_log_chi2(u, N))


class ExactConditionedSampler:
    """Independent draws from [f^{(x)N}] on S^{N-1}(sqrt N) for f a centred 2-Gaussian mixture.

    Conditional on the component labels the squared velocities in each group
    are scaled chi-square variables, so: draw the hot count K from its exact
    conditional law, the hot-group energy A from a tilted Beta law (tabulated
    inverse CDF), then uniform directions within each group.
    """

    def __init__(self, f, N: int, table_size: int = 8193):
        self.f = f
        self.N = N
        self.w, self.a = _two_components(f)
        self.table_size = table_size
        self._tables: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        if self.w[1] == 0.0:
            self.pK = np.zeros(N + 1)
            self.pK[N] = 1.0
        else:
            mp.mp.dps = max(mp.mp.dps, 30)
            lw = np.array([float(mp.log(mp.binomial(N, K)) + K * mp.log(self.w[0]) + (N - K) * mp.log(self.w[1])
                                 + _log_pU_given_K(N, N, K, self.a[0], self.a[1])) for K in range(N + 1)])
            self.pK = np.exp(lw - special.logsumexp(lw))

    def _energy_table(self, K: int):
        if K not in self._tables:
            N = self.N
            y = np.linspace(0.0, 1.0, self.table_size)
            z = 0.5 * (1.0 - np.cos(np.pi * y))
            dz = 0.5 * np.pi * np.sin(np.pi * y)
            s1, s2 = 2 * self.a[0], 2 * self.a[1]
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = (special.xlogy(0.5 * K - 1, z) + special.xlog1py(0.5 * (N - K) - 1, -z)
                      + N * z * (1 / s2 - 1 / s1) + np.log(dz))
            lg[~np.isfinite(lg)] = -np.inf
            g = np.exp(lg - lg.max())
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]))])
            cdf /= cdf[-1]
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            self._tables[K] = (cdf[keep], z[keep])
        return self._tables[K]

    def sample(self, n: int, rng: np.random.Generator, shuffle: bool = True) -> np.ndarray:
        N = self.N
        Ks = rng.choice(N + 1, size=n, p=self.pK)
        out = np.empty((n, N))
        for K in np.unique(Ks):
            idx = np.nonzero(Ks == K)[0]
            m = idx.size
            if K == 0:
                A = np.zeros(m)
            elif K == N:
                A = np.full(m, float(N))
            else:
                cdf, z = self._energy_table(int(K))
                A = N * np.interp(rng.random(m), cdf, z)
            zh = rng.standard_normal((m, K))
            zc = rng.standard_normal((m, N - K))
            if K > 0:
                zh *= np.sqrt(A / np.sum(zh * zh, axis=1))[:, None]
            if K < N:
                zc *= np.sqrt((N - A) / np.sum(zc * zc, axis=1))[:, None]
            out[idx, :K] = zh
            out[idx, K:] = zc
        if shuffle:
            out = rng.permuted(out, axis=1)
        return out


def sample_conditioned_exact(cp: ConditionedProduct, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    return ExactConditionedSampler(cp.f, cp.N).sample(n_samples, rng)


# ---------------------------------------------------------------------------
# Z_N estimation


def _cf_grid(f, m: int, x_max: float, tol: float = 1e-16):
    """t-grid, trapezoid weights and m log psi(t) for inverting the CF of U_m on [0, x_max]."""
    sig = sigma_stat(f)
    a_max = max(getattr(f, "variances", (1.0,)))
    # alias period well beyond the support that matters
    period = 2.0 * (x_max + m + 40.0 * math.sqrt(m) * sig + 60.0 * a_max)
    dt = 2.0 * math.pi / period
    T = dt * 64
    while m * math.log(max(abs(complex(f.square_charfn(T))), 1e-300)) > math.log(tol):
        T *= 1.5
        if T / dt > 5e6:
            raise RuntimeError("characteristic function decays too slowly; use a larger block")
    t = np.arange(0.0, T + dt, dt)
    psi = f.square_charfn(t)
    # continuous branch of m log psi
    lm = m * (np.log(np.abs(psi)) + 1j * np.unwrap(np.angle(psi)))
    w = np.full(t.size, dt)
    w[0] *= 0.5
    return t, w, lm


def square_sum_pdf(f, m: int, x, x_max: float | None = None) -> np.ndarray:
    """p_{U_m}(x) = (1/pi) int_0^inf Re[psi(t)^m e^{-itx}] dt, psi(t) = E exp(i t v^2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t, w, lm = _cf_grid(f, m, float(x.max()) if x_max is None else x_max)
    vals = np.empty(x.size)
    step = 512
    for s in range(0, x.size, step):
        xs = x[s:s + step]
        vals[s:s + step] = (np.exp(lm[None, :] - 1j * np.multiply.outer(xs, t)).real @ w) / math.pi
    return vals


class SquareSumDensity:
    """Density of U_m = sum_{i<=m} v_i^2 (v_i iid from f), by characteristic-function inversion,
    tabulated on [0, x_max] and interpolated by a cubic spline."""

    def __init__(self, f, m: int, x_max: float, n_x: int = 4097):
        self.m = m
        self.x_max = x_max
        self.x = np.linspace(0.0, x_max, n_x)
        self.values = square_sum_pdf(f, m, self.x, x_max)
        self._spline = CubicSpline(self.x, self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x > 0) & (x <= self.x_max)
        out[inside] = self._spline(x[inside])
        return np.maximum(out, 0.0)


@dataclass
class ZEstimate:
    logZ: float
    stderr: float
    ess: float
    samples: int
    method: str
    block: int | None = None

    @property
    def Z(self) -> float:
        return math.exp(self.logZ)

    @property
    def Z_stderr(self) -> float:
        return self.Z * self.stderr


def _square_sum_samples(f, n: int, size: int, rng) -> np.ndarray:
    """Draws of sum_{i<=n} v_i^2 with v_i iid from f."""
    if n == 0:
        return np.zeros(size)
    if isinstance(f, GaussianMixture) and f.centered:
        counts = rng.multinomial(n, f._w, size=size)
        out = np.zeros(size)
        for c, a in enumerate(f._a):
            k = counts[:, c]
            pos = k > 0
            out[pos] += a * rng.chisquare(k[pos])
        return out
    out = np.zeros(size)
    for s in range(0, size, 4096):
        m = min(4096, size - s)
        x = f.sample(rng, (m, n))
        out[s:s + m] = np.sum(x * x, axis=1)
    return out


MIN_INVERT = 12  # smallest m whose characteristic function psi^m is inverted numerically
MIN_BLOCK = 20  # smallest random-split block; the inversion table gets expensive below this


def default_block(n: int) -> int:
    """Half the coordinates, but at least MIN_BLOCK: psi^m decays only like t^{-m/2}."""
    return min(n, max(n // 2, MIN_BLOCK))


def estimate_pU(f, u: float, n: int, M: int, rng, block: int | None = None):
    """Conditional Monte Carlo for p_U(u): average of p_{U_m}(u - S) over draws of S = U_{n-m}."""
    m = default_block(n) if block is None else block
    if not 1 <= m <= n:
        raise ValueError("block must lie in [1, n]")
    dens = SquareSumDensity(f, m, x_max=u * 1.0 + 1e-9)
    S = _square_sum_samples(f, n - m, M, rng)
    W = dens(u - S)
    return W, m


def z_n_estimate(f, N: int, M: int, rng: np.random.Generator, method: str = "conditional",
                 block: int | None = None, u: float | None = None, chunk: int = 20000) -> ZEstimate:
    """log Z_N(f, sqrt u) with a delta-method standard error (u defaults to N).

    For N < MIN_INVERT the conditional method uses the exact two-component
    formula, or the sphere estimator for other densities.

    method="conditional": exact density of a block of m coordinates'
    squared sum (m = N // 2 by default), averaged over Monte Carlo draws of
    the remaining N - m coordinates.
    method="sphere": plain average of prod (f/gamma)(v_i) over uniform
    sphere samples, accumulated with a streaming log-sum-exp; only usable
    for small N or f close to gamma.
    """
    u = float(N) if u is None else float(u)
    if u <= 0:
        raise ValueError("u must be positive")
    if getattr(f, "is_maxwellian", False) and u == N:
        return ZEstimate(0.0, 0.0, float(M), M, method, block)
    if method == "conditional" and N < MIN_INVERT and block in (None, N):
        # psi^N decays too slowly to invert; use the exact mixture law when available
        try:
            return ZEstimate(log_z_exact(f, N, u), 0.0, math.inf, 0, "exact", N)
        except NotImplementedError:
            method = "sphere"
    if method == "conditional":
        block = default_block(N) if block is None else block
        if block == N:
            # the whole sum is handled by quadrature; no randomness left
            val = float(square_sum_pdf(f, N, u)[0])
            return ZEstimate(math.log(val) - log_chi2_pdf(u, N), 0.0, math.inf, 0, method, N)
        W, m = estimate_pU(f, u, N, M, rng, block)
        mean = float(W.mean())
        if mean <= 0:
            raise RuntimeError("all conditional weights vanished; estimation failed")
        sd = float(W.std(ddof=1))
        ess = float(W.sum() ** 2 / np.sum(W * W))
        if ess < 100:
            warnings.warn(f"effective sample size {ess:.1f} < 100", RuntimeWarning, stacklevel=2)
        return ZEstimate(math.log(mean) - log_chi2_pdf(u, N), sd / (mean * math.sqrt(M)), ess, M, method, m)
    if method == "sphere":
        r = math.sqrt(u / N)
        run_max = -math.inf
        s1 = s2 = 0.0
        for s in range(0, M, chunk):
            m = min(chunk, M - s)
            x = sample_uniform_sphere(N, rng, m) * r
            lw = np.sum(log_ratio_gaussian(f, x), axis=1)
            mx = float(lw.max())
            if mx == -math.inf:
                continue
            if mx > run_max:
                scale = math.exp(run_max - mx) if run_max > -math.inf else 0.0
                s1 *= scale
                s2 *= scale * scale
                run_max = mx
            e = np.exp(lw - run_max)
            s1 += float(e.sum())
            s2 += float(np.sum(e * e))
        if run_max == -math.inf:
            raise RuntimeError("all sphere samples have zero weight; estimation failed")
        mean = s1 / M
        var = max(s2 / M - mean * mean, 0.0) * M / max(M - 1, 1)
        ess = s1 * s1 / s2
        if ess < 100:
            warnings.warn(f"effective sample size {ess:.1f} < 100", RuntimeWarning, stacklevel=2)
        return ZEstimate(math.log(mean) + run_max, math.sqrt(var / M) / mean, ess, M, method)
    raise ValueError(f"unknown method {method!r}")


def z_limit(f) -> float:
    """sqrt(2) / Sigma."""
    return math.sqrt(2.0) / sigma_stat(f)


# ---------------------------------------------------------------------------
# Z_{N-j}(f, sqrt u) against its leading Gaussian profile


def admissible_delta(N: int, beta: float = 0.1) -> float:
    """delta_N = N^{-1/(1 + 2.5 beta)}, inside the window delta^{1+2b} N -> inf, delta^{1+3b} N -> 0."""
    if not 0 < beta < 1.0 / 6.0:
        raise ValueError("beta must lie in (0, 1/6)")
    return float(N) ** (-1.0 / (1.0 + 2.5 * beta))


def window_exponents(N: int, delta: float, beta: float = 0.1):
    """(delta^{1+2b} N, delta^{1+3b} N): the first must grow, the second shrink with N."""
    return delta ** (1 + 2 * beta) * N, delta ** (1 + 3 * beta) * N


@dataclass
class ProfileCheck:
    N: int
    j: int
    u: float
    log_mc: float
    mc_stderr: float  # relative
    log_profile: float
    rel_deviation: float
    z_score: float


def _log_sphere_factor(n, u):
    # Z is int f^{(x)n} d(area) on S^{n-1}(sqrt u) = 2 p_U(u) / (|S^{n-1}| u^{n/2-1})
    return math.log(2.0) - log_sphere_area(n) - (0.5 * n - 1.0) * math.log(u)


def z_n_profile(f, N: int, j: int, u: float, M: int, rng, block: int | None = None) -> ProfileCheck:
    """Monte Carlo Z_{N-j}(f, sqrt u) versus the leading Gaussian profile
    (2 pi n Sigma^2)^{-1/2} exp(-(u-n)^2 / (2 n Sigma^2)) with the same sphere factor, n = N - j."""
    if u <= 0:
        raise ValueError("u must be positive")
    n = N - j
    sig2 = sigma_stat(f) ** 2
    W, _ = estimate_pU(f, u, n, M, rng, block)
    mean = float(W.mean())
    se = float(W.std(ddof=1)) / math.sqrt(M)
    log_gauss = -0.5 * math.log(2 * math.pi * n * sig2) - (u - n) ** 2 / (2 * n * sig2)
    fac = _log_sphere_factor(n, u)
    log_mc = math.log(mean) + fac if mean > 0 else -math.inf
    rel = se / mean if mean > 0 else math.inf
    prof = math.exp(log_gauss)
    return ProfileCheck(N, j, u, log_mc, rel, log_gauss + fac,
                        (mean - prof) / prof, (mean - prof) / se if se > 0 else math.inf)


# ---------------------------------------------------------------------------
# empirical marginals


@dataclass
class Histogram:
    edges: list
    mass: np.ndarray  # probability per bin
    count: int

    @property
    def density(self) -> np.ndarray:
        vol = np.ones_like(self.mass)
        for d, e in enumerate(self.edges):
            shape = [1] * len(self.edges)
            shape[d] = -1
            vol = vol * np.diff(e).reshape(shape)
        return self.mass / vol


def empirical_marginal(samples: np.ndarray, k: int = 1, bins=60, range_=(-5.0, 5.0), pool: bool = True) -> Histogram:
    """k-dimensional histogram of (v_1..v_k); with pool=True all disjoint k-blocks of coordinates are used.

    Mass falling outside the range is kept in the normalization, so the
    histogram integrates to the in-range probability.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample set")
    if samples.ndim == 1:
        samples = samples[None, :]
    if k > 3:
        raise ValueError("k <= 3 supported")
    if pool:
        nb_ = samples.shape[1] // k
        pts = samples[:, : nb_ * k].reshape(-1, k)
    else:
        pts = samples[:, :k]
    edges = [np.linspace(range_[0], range_[1], bins + 1)] * k
    counts, _ = np.histogramdd(pts, bins=edges)
    return Histogram(edges, counts / pts.shape[0], pts.shape[0])


def _bin_masses_1d(pdf, edges, order=8):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return np.sum(pdf(pts) * w[None, :], axis=1) * half


def l1_to_density(h: Histogram, pdf, order: int = 8) -> float:
    """Sum over bins of |empirical mass - reference mass| (reference via Gauss-Legendre per bin).

    For k = 2 `pdf` takes an array with last axis of length 2.
    """
    if len(h.edges) == 1:
        ref = _bin_masses_1d(pdf, h.edges[0], order)
    elif len(h.edges) == 2:
        x, w = np.polynomial.legendre.leggauss(order)
        e0, e1 = h.edges
        p0 = (0.5 * (e0[:-1] + e0[1:]))[:, None] + (0.5 * np.diff(e0))[:, None] * x[None, :]
        p1 = (0.5 * (e1[:-1] + e1[1:]))[:, None] + (0.5 * np.diff(e1))[:, None] * x[None, :]
        X = p0[:, None, :, None]
        Y = p1[None, :, None, :]
        X, Y = np.broadcast_arrays(X, Y)
        vals = pdf(np.stack([X, Y], axis=-1))
        ww = np.multiply.outer(w, w)
        ref = np.sum(vals * ww, axis=(2, 3)) * np.multiply.outer(0.5 * np.diff(e0), 0.5 * np.diff(e1))
    else:
        raise ValueError("k <= 2 supported for reference densities")
    return float(np.sum(np.abs(h.mass - ref)))


def l1_between(h1: Histogram, h2: Histogram) -> float:
    return float(np.sum(np.abs(h1.mass - h2.mass)))


def product_gap(samples: np.ndarray, bins: int = 30, range_=(-4.0, 4.0)) -> float:
    """L1 distance between the empirical 2-marginal and the product of empirical 1-marginals."""
    h2 = empirical_marginal(samples, 2, bins, range_)
    h1 = empirical_marginal(samples, 1, bins, range_)
    prod = np.multiply.outer(h1.mass, h1.mass)
    return float(np.sum(np.abs(h2.mass - prod)))


def geweke_z(x: np.ndarray, first: float = 0.1, last: float = 0.5, n_batches: int = 20) -> float:
    """Geweke convergence statistic: difference of early and late means over batch-means errors."""
    x = np.asarray(x, dtype=float)
    a = x[: int(first * x.size)]
    b = x[x.size - int(last * x.size):]

    def var_mean(y):
        nb_ = min(n_batches, max(2, y.size // 10))
        bm = np.array([c.mean() for c in np.array_split(y, nb_)])
        return bm.var(ddof=1) / nb_

    return float((a.mean() - b.mean()) / math.sqrt(var_mean(a) + var_mean(b)))


def dump_samples_csv(samples: np.ndarray, path, k: int, replica: int = 0, append: bool = False):
    """Rows (replica, index, v_1..v_k)."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(["replica", "index"] + [f"v_{d + 1}" for d in range(k)])
        for i, row in enumerate(samples[:, :k]):
            w.writerow([replica, i] + [format(float(x), ".17g") for x in row])
