"""Relative entropy and entropy production on the energy sphere.

For F = (f/gamma)^{(x)N} / Z_N relative to the uniform measure sigma,

    H(F | sigma) = E_F[sum_i log(f/gamma)(v_i)] - log Z_N,

and the production D = <N (I - Q_N) F, log F> can be written, using the
self-adjointness of Q_N, either as

    D = N E_F[x]                      (log-ratio form)
    D = (N/2) E_F[(1 - e^{-x}) x]     (symmetrized Dirichlet form)

with x = log F(v) - log F(R v), R a random Kac rotation. Both forms are
unbiased; the log-ratio form has much smaller variance for f_delta states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from . import streams
from .chaos import (ConditionedProduct, ExactConditionedSampler, admissible_delta, log_ratio_gaussian,
                    z_n_estimate)
from .densities import fdelta, gaussian_logpdf
from .engine import ScatteringDensity, uniform_rho


def relative_entropy_density(f, reference=None, lim: float | None = None) -> float:
    """H(f | reference) = int f log(f / reference), 0 log 0 = 0; inf if f charges a reference null set."""
    ref_logpdf = gaussian_logpdf if reference is None else reference.logpdf
    if getattr(f, "is_maxwellian", False) and reference is None:
        return 0.0
    if f is reference:
        return 0.0
    if isinstance(getattr(f, "v", None), np.ndarray) and isinstance(getattr(f, "f", None), np.ndarray):
        # grid-represented density (tabulated or PDE state)
        v, fv = f.v, f.f
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(fv) - ref_logpdf(v)
        if np.any((fv > 0) & ~np.isfinite(lr)):
            return math.inf
        return float(np.trapezoid(np.where(fv > 0, fv * lr, 0.0), v))
    if lim is None:
        sd = math.sqrt(max(getattr(f, "variances", (1.0,))))
        lim = 40.0 * max(sd, 1.0)

    def integrand(x):
        lf = float(f.logpdf(x))
        if lf == -math.inf:
            return 0.0
        lr = float(ref_logpdf(np.array(x)))
        if lr == -math.inf:
            return math.inf
        return math.exp(lf) * (lf - lr)

    val = 0.0
    for a, b in ((-lim, 0.0), (0.0, lim)):
        part, _ = integrate.quad(integrand, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
        val += part
    return val


def kac_production_density(f, rho: ScatteringDensity | None = None, n_alpha: int = 512, panels: int = 80) -> float:
    """Entropy production -d/dt H(f | gamma) of the Kac equation at f (centred Gaussian mixtures).

    With (v, w) = r (cos a, sin a) a collision shifts a by theta, so
    D = int r dr da p (L - int rho(theta) L(a + theta)), p = f(v) f(w), L = log p.
    The angular average is a circular correlation, done by FFT.
    """
    rho = uniform_rho() if rho is None else rho
    scales = np.sqrt(np.asarray(getattr(f, "variances", (1.0,)), dtype=float))
    x, w = np.polynomial.legendre.leggauss(20)
    edges = np.unique(np.concatenate([np.linspace(0.0, 12.0 * s, panels) for s in scales]))
    lo, hi = edges[:-1, None], edges[1:, None]
    r = (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel()
    wr = (0.5 * (hi - lo) * w).ravel()
    a = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    L = f.logpdf(r[:, None] * np.cos(a)) + f.logpdf(r[:, None] * np.sin(a))
    _, tw = rho.quadrature(n_alpha)
    # Lbar[a] = sum_k tw[k] L[a + theta_k]; theta_k = -pi + 2 pi k / n
    kern = np.roll(tw, -(n_alpha // 2))
    Lbar = np.fft.ifft(np.fft.fft(L, axis=1) * np.conj(np.fft.fft(kern))[None, :], axis=1).real
    return float(np.sum(wr[:, None] * r[:, None] * np.exp(L) * (L - Lbar)) * (2.0 * np.pi / n_alpha))


@dataclass
class Estimate:
    value: float
    stderr: float
    samples: int
    rejected: int = 0


@dataclass
class EntropyReport:
    N: int
    H: float
    H_stderr: float
    D: float
    D_stderr: float
    delta: float | None = None

    @property
    def ratio(self) -> float:
        return self.D / self.H if self.H > 0 else math.nan

    @property
    def ratio_stderr(self) -> float:
        if self.H <= 0:
            return math.nan
        return abs(self.ratio) * math.hypot(self.D_stderr / self.D if self.D else 0.0, self.H_stderr / self.H)

    @property
    def villani_bound(self) -> float:
        return 2.0 / (self.N - 1)


def _mean_stderr(x: np.ndarray, batches: int | None):
    """Plain standard error for iid samples; batch means for correlated chains."""
    if batches is None:
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
    bm = np.array([b.mean() for b in np.array_split(x, batches)])
    return float(x.mean()), float(bm.std(ddof=1) / math.sqrt(batches))


def entropy_sphere_conditioned(cp: ConditionedProduct, samples: np.ndarray, logZ: float | None = None,
                               logZ_stderr: float | None = None, batches: int | None = None) -> Estimate:
    """H(F_N | sigma) from samples of F_N and an estimate of log Z_N."""
    logZ = cp.logZ if logZ is None else logZ
    logZ_stderr = (cp.logZ_stderr or 0.0) if logZ_stderr is None else logZ_stderr
    if logZ is None:
        raise ValueError("log Z_N is required")
    if getattr(cp.f, "is_maxwellian", False):
        return Estimate(0.0, 0.0, len(samples))
    lw = cp.log_weight(samples)
    m, se = _mean_stderr(lw, batches)
    return Estimate(m - logZ, math.hypot(se, logZ_stderr), lw.size)


def _pair_indices(rng, M, N):
    perm = rng.permuted(np.tile(np.arange(N), (M, 1)), axis=1)
    return perm[:, 0:2 * (N // 2):2], perm[:, 1:2 * (N // 2):2]


def entropy_production(cp: ConditionedProduct | Callable, samples: np.ndarray, rng: np.random.Generator,
                       rho: ScatteringDensity | None = None, form: str = "log_ratio", n_theta: int = 48,
                       batches: int | None = None, chunk_elems: int = 4_000_000) -> Estimate:
    """D = <N (I - Q_N) F, log F> under the F-measure.

    `cp` is a ConditionedProduct (product structure is used: each sample
    contributes floor(N/2) disjoint random pairs, and the angle is
    integrated by quadrature) or a callable log F on sphere points (all
    pairs, used for small-N checks). The normalization of F cancels.
    """
    rho = uniform_rho() if rho is None else rho
    if form not in ("log_ratio", "symmetrized"):
        raise ValueError(f"unknown form {form!r}")
    samples = np.asarray(samples, dtype=float)
    M, N = samples.shape
    theta, tw = rho.quadrature(n_theta)
    c, s = np.cos(theta), np.sin(theta)
    if isinstance(cp, ConditionedProduct) and getattr(cp.f, "is_maxwellian", False):
        return Estimate(0.0, 0.0, M)
    per = np.empty(M)
    keep = np.ones(M, dtype=bool)
    if isinstance(cp, ConditionedProduct):
        per = _production_per_sample(cp, samples, rng, rho, form, n_theta, chunk_elems)
        keep = np.all(np.isfinite(cp.f.logpdf(samples)), axis=1)
        per = np.where(keep, per, 0.0)
    else:
        logF = cp
        iu, ju = np.triu_indices(N, 1)
        scale = N / iu.size if form == "log_ratio" else 0.5 * N / iu.size
        step = max(1, chunk_elems // (iu.size * theta.size * N))
        r = np.arange(iu.size)[:, None]
        for a in range(0, M, step):
            V = samples[a:a + step]
            l0 = np.asarray(logF(V), dtype=float)
            ok = np.isfinite(l0)
            pts = np.broadcast_to(V[:, None, None, :], (V.shape[0], iu.size, theta.size, N)).copy()
            vi, vj = V[:, iu][..., None], V[:, ju][..., None]
            pts[:, r, np.arange(theta.size)[None, :], iu[:, None]] = vi * c - vj * s
            pts[:, r, np.arange(theta.size)[None, :], ju[:, None]] = vi * s + vj * c
            x = np.where(ok[:, None, None], l0[:, None, None] - logF(pts), 0.0)
            per[a:a + step] = np.where(ok, _reduce(x, tw, form) * scale, 0.0)
            keep[a:a + step] = ok
    m, se = _mean_stderr(per[keep], batches)
    return Estimate(m, se, int(keep.sum()), int((~keep).sum()))


def _reduce(x: np.ndarray, tw: np.ndarray, form: str) -> np.ndarray:
    """Sum over pairs of the rho-integral of the integrand, per sample."""
    if form == "log_ratio":
        g = x
    else:
        g = -np.expm1(-x) * x
        if np.any(g < 0):
            raise AssertionError("symmetrized production integrand must be non-negative")
    return np.sum(g @ tw, axis=1)


@dataclass
class VillaniReport:
    N: int
    ratio: float
    stderr: float
    bound: float
    margin: float  # (ratio - bound) / stderr
    passed: bool
    inconclusive: bool


def villani_ratio_check(report: EntropyReport, n_sigma: float = 3.0) -> VillaniReport:
    """Checks D/H >= 2/(N-1) - n_sigma * stderr; inconclusive when H is not resolved from 0."""
    bound = report.villani_bound
    if report.H <= n_sigma * report.H_stderr or report.H <= 0:
        return VillaniReport(report.N, math.nan, math.nan, bound, math.nan, True, True)
    r, se = report.ratio, report.ratio_stderr
    return VillaniReport(report.N, r, se, bound, (r - bound) / se if se > 0 else math.inf,
                         r >= bound - n_sigma * se, False)


def conditioned_report(f, N: int, seed: int, experiment: str, n_samples: int, z_samples: int,
                       rho: ScatteringDensity | None = None, n_theta: int = 48, form: str = "log_ratio",
                       delta: float | None = None) -> EntropyReport:
    """H and D for the conditioned product of a centred two-Gaussian mixture, using exact sampling."""
    cp = ConditionedProduct(f, N)
    z = z_n_estimate(f, N, z_samples, streams.stream(seed, experiment + "/Z", N))
    cp.logZ, cp.logZ_stderr = z.logZ, z.stderr
    sampler = ExactConditionedSampler(f, N)
    rng = streams.stream(seed, experiment + "/F", N)
    lw_all, d_all = [], []
    step = max(1000, 2_000_000 // N)
    for a in range(0, n_samples, step):
        X = sampler.sample(min(step, n_samples - a), rng)
        lw_all.append(cp.log_weight(X))
        d_all.append(_production_per_sample(cp, X, rng, rho, form, n_theta))
    lw = np.concatenate(lw_all)
    dv = np.concatenate(d_all)
    H = float(lw.mean()) - z.logZ
    H_se = math.hypot(float(lw.std(ddof=1)) / math.sqrt(lw.size), z.stderr)
    return EntropyReport(N, H, H_se, float(dv.mean()), float(dv.std(ddof=1)) / math.sqrt(dv.size), delta)


def _production_per_sample(cp, X, rng, rho, form, n_theta, chunk_elems=4_000_000):
    """Per-sample production using floor(N/2) disjoint random pairs and angle quadrature."""
    rho = uniform_rho() if rho is None else rho
    theta, tw = rho.quadrature(n_theta)
    c, s = np.cos(theta), np.sin(theta)
    M, N = X.shape
    P = N // 2
    scale = N / P if form == "log_ratio" else 0.5 * N / P
    out = np.empty(M)
    step = max(1, chunk_elems // (P * theta.size))
    for a in range(0, M, step):
        Y = X[a:a + step]
        ii, jj = _pair_indices(rng, Y.shape[0], N)
        vi = np.take_along_axis(Y, ii, 1)[..., None]
        vj = np.take_along_axis(Y, jj, 1)[..., None]
        lf = cp.f.logpdf
        x = lf(vi) + lf(vj) - lf(vi * c - vj * s) - lf(vi * s + vj * c)
        x = np.where(np.isfinite(x), x, 0.0)
        out[a:a + step] = _reduce(x, tw, form) * scale
    return out


@dataclass
class TrendResult:
    reports: list
    envelope: np.ndarray
    exponent: float
    exponent_stderr: float
    decreasing: bool
    above_villani: bool
    constant: float  # max ratio / envelope


def einav_trend(N_list, beta: float = 0.1, seed: int = 0, n_samples: int = 20000, z_samples: int = 20000,
                rho: ScatteringDensity | None = None, experiment: str = "einav-trend") -> TrendResult:
    """D/H for conditioned f_{delta_N} with delta_N = N^{-1/(1+2.5 beta)}.

    The exponent p is fitted by least squares of log(ratio / log N) on log N;
    the envelope log N / N^{1-2 beta} predicts p = 1 - 2 beta.
    """
    N_arr = np.asarray(N_list, dtype=float)
    reports = []
    for N in N_list:
        d = admissible_delta(N, beta)
        reports.append(conditioned_report(fdelta(d), int(N), seed, experiment, n_samples, z_samples, rho,
                                          delta=d))
    ratios = np.array([r.ratio for r in reports])
    rse = np.array([r.ratio_stderr for r in reports])
    env = np.log(N_arr) / N_arr ** (1 - 2 * beta)
    y = np.log(ratios / np.log(N_arr))
    wts = (ratios / rse) ** 2
    A = np.vstack([np.ones_like(N_arr), np.log(N_arr)]).T
    cov = np.linalg.inv(A.T @ (A * wts[:, None]))
    coef = cov @ (A.T @ (wts * y))
    dec = bool(np.all(np.diff(ratios) < 0))
    above = all(r.ratio >= r.villani_bound for r in reports)
    return TrendResult(reports, env, float(-coef[1]), float(math.sqrt(cov[1, 1])), dec, above,
                       float(np.max(ratios / env)))


def loglog_slope(x, y, yerr=None):
    """Weighted least-squares slope of log y against log x, with its standard error."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    w = np.ones_like(x) if yerr is None else (np.exp(y) / np.asarray(yerr, float)) ** 2
    A = np.vstack([np.ones_like(x), x]).T
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    coef = cov @ (A.T @ (w * y))
    if yerr is None:
        resid = y - A @ coef
        dof = max(len(x) - 2, 1)
        cov = cov * float(resid @ resid) / dof
    return float(coef[1]), float(math.sqrt(cov[1, 1]))
