"""Gap formulas, the transition operator Q_N by quadrature, and the K correlation operator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import special

from .engine import AngularKernel3D, ScatteringDensity, uniform_rho


def log_sphere_area(n: float) -> float:
    """log |S^{n-1}|, the area of the unit sphere in R^n."""
    return math.log(2.0) + 0.5 * n * math.log(math.pi) - special.gammaln(0.5 * n)


@dataclass(frozen=True)
class SphereAreaRatio:
    """|S^{a-1}| / |S^{b-1}| for unit spheres in R^a and R^b, via log-gamma."""

    a: float
    b: float

    @property
    def log_value(self) -> float:
        return log_sphere_area(self.a) - log_sphere_area(self.b)

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


# ---------------------------------------------------------------------------
# Q_N and L_N by quadrature


def _check_sphere(v, tol=1e-9):
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    e = np.sum(v * v, axis=-1)
    if np.any(np.abs(e - n) > tol * n):
        raise ValueError("point is not on the sphere of radius sqrt(N)")
    return v


def apply_Q(phi: Callable[[np.ndarray], np.ndarray], v, rho: ScatteringDensity | None = None,
            order: int = 64) -> float:
    """(Q_N phi)(v): average over pairs i<j and theta ~ rho of phi(R_ij(theta) v).

    `phi` must accept an array of shape (..., N).
    """
    rho = uniform_rho() if rho is None else rho
    v = _check_sphere(v)
    n = v.size
    theta, w = rho.quadrature(max(order, rho.n_quad))
    c, s = np.cos(theta), np.sin(theta)
    iu, ju = np.triu_indices(n, 1)
    pts = np.broadcast_to(v, (iu.size, theta.size, n)).copy()
    vi = v[iu][:, None]
    vj = v[ju][:, None]
    pts[np.arange(iu.size)[:, None], np.arange(theta.size)[None, :], iu[:, None]] = vi * c - vj * s
    pts[np.arange(iu.size)[:, None], np.arange(theta.size)[None, :], ju[:, None]] = vi * s + vj * c
    vals = np.asarray(phi(pts))
    return float(np.sum(vals * w[None, :]) / iu.size)


def apply_L(phi, v, rho=None, order: int = 64) -> float:
    """(L_N phi)(v) = N (phi(v) - (Q_N phi)(v))."""
    v = np.asarray(v, dtype=float)
    return v.size * (float(phi(v)) - apply_Q(phi, v, rho, order))


def gap_eigenfunction(N: int) -> Callable[[np.ndarray], np.ndarray]:
    """F(v) = sum_j (v_j^4 - 3N/(N+2))."""
    if N < 2:
        raise ValueError("N >= 2 required")
    shift = 3.0 * N / (N + 2.0)

    def F(v):
        v = np.asarray(v, dtype=float)
        return np.sum(v**4 - shift, axis=-1)

    return F


# ---------------------------------------------------------------------------
# gap values


@dataclass
class GapReport:
    N: float
    gap: float
    eigenfunction: str
    method: str = "closed-form"
    exact: bool = True
    gamma2: float | None = None
    delta2: float | None = None
    condition: bool | None = None
    candidates: dict = field(default_factory=dict)
    note: str = ""


@dataclass(frozen=True)
class Delta2Result:
    value: float
    k: int
    values: np.ndarray


def gamma2(rho: ScatteringDensity) -> float:
    """Gamma_2 = 2 int (1 - cos 4 theta) rho."""
    return 2.0 * (1.0 - rho.cosine_coefficient(4))


def delta2(rho: ScatteringDensity, k_max: int = 32) -> Delta2Result:
    """Delta_2 = 2 min_{1<=k<=k_max} int (1 - cos k theta) rho, with the minimizing k."""
    if k_max < 4:
        raise ValueError("k_max >= 4 required")
    vals = np.array([2.0 * (1.0 - rho.cosine_coefficient(k)) for k in range(1, k_max + 1)])
    k = int(np.argmin(vals))
    return Delta2Result(float(vals[k]), k + 1, vals)


def gap_value(N, rho: ScatteringDensity | None = None) -> GapReport:
    """Gamma_N = (1/4)(N+2)/(N-1) Gamma_2; N may be math.inf.

    For uniform rho this is the gap. Otherwise the report flags whether
    Delta_2 > 0.45 Gamma_2, the sufficient condition for Gamma_N to be the
    gap for all large enough N; the threshold in N is not known, so the
    flag is informational.
    """
    rho = uniform_rho() if rho is None else rho
    if N < 2:
        raise ValueError("N >= 2 required")
    g2 = gamma2(rho)
    factor = 1.0 if math.isinf(N) else (N + 2.0) / (N - 1.0)
    gN = 0.25 * factor * g2
    d2 = delta2(rho)
    cond = d2.value > 0.45 * g2
    if rho.uniform:
        return GapReport(N, gN, "sum_j v_j^4 - 3N/(N+2)", "closed-form", True, g2, d2.value, True)
    note = "Gamma_N is the gap for large N" if cond else "Delta_2 <= 0.45 Gamma_2: Gamma_N is only an upper bound"
    return GapReport(N, gN, "sum_j v_j^4 - 3N/(N+2)", "closed-form", False, g2, d2.value, cond, note=note)


def gap_uniform_exact(N: int) -> Fraction:
    return Fraction(N + 2, 2 * (N - 1))


def induction_sequence(N: int) -> list[Fraction]:
    """Lower bounds Delta_2, Delta_3, ..., Delta_N from Delta_k >= Delta_{k-1}(1 - 3/(k^2-1))."""
    if N < 2:
        raise ValueError("N >= 2 required")
    out = [Fraction(2)]
    for k in range(3, N + 1):
        out.append(out[-1] * (1 - Fraction(3, k * k - 1)))
    return out


def induction_bound(N: int) -> Fraction:
    return induction_sequence(N)[-1]


# ---------------------------------------------------------------------------
# K operator


def K_prefactor(N: float) -> float:
    """|S^{N-3}| / |S^{N-2}| (unit spheres)."""
    return SphereAreaRatio(N - 2, N - 1).value


_jacobi_cache: dict = {}


def _jacobi_rule(order: int, alpha: float):
    key = (order, alpha)
    if key not in _jacobi_cache:
        _jacobi_cache[key] = special.roots_jacobi(order, alpha, alpha)
    return _jacobi_cache[key]


def K_apply(h: Callable[[np.ndarray], np.ndarray], v, N: int, order: int = 128):
    """(K h)(v) = c_N int_{-1}^{1} h(sqrt(N - v^2) s) (1 - s^2)^{(N-4)/2} ds.

    Gauss-Jacobi with alpha = beta = (N-4)/2; K 1 = 1.
    """
    if N < 4:
        raise ValueError("N >= 4 required")
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(v) > math.sqrt(N) * (1 + 1e-12)):
        raise ValueError("|v| must not exceed sqrt(N)")
    s, w = _jacobi_rule(order, 0.5 * (N - 4))
    r = np.sqrt(np.maximum(N - v * v, 0.0))
    vals = h(np.multiply.outer(r, s))
    return K_prefactor(N) * (vals @ w)


def K_eigenvalue(m: int, N: float) -> float:
    """alpha_{2m} = (-1)^m (1/2)_m / ((N-1)/2)_m.

    This is (-1)^m c_N int_0^pi cos^{2m} t sin^{N-3} t dt in closed form.
    """
    if m < 0:
        raise ValueError("m >= 0 required")
    if N < 3:
        raise ValueError("N >= 3 required")
    if m == 0:
        return 1.0
    log_abs = (special.gammaln(m + 0.5) - special.gammaln(0.5)
               + special.gammaln(0.5 * (N - 1)) - special.gammaln(m + 0.5 * (N - 1)))
    return (-1.0) ** m * math.exp(log_abs)


def K_eigenvalue_quadrature(m: int, N: float) -> float:
    """Same quantity by direct quadrature of the trigonometric integral."""
    from scipy import integrate

    val, _ = integrate.quad(lambda t: math.cos(t) ** (2 * m) * math.sin(t) ** (N - 3), 0, math.pi,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return (-1.0) ** m * K_prefactor(N) * val


def k_eigenpolynomials(N: int, max_degree: int) -> list[np.ndarray]:
    """Monic-orthogonal polynomials in v (power-basis coefficients, lowest first).

    Gram-Schmidt on monomials in the weight (1 - v^2/N)^{(N-3)/2} on
    [-sqrt(N), sqrt(N)], the single-coordinate marginal of the sphere,
    under which K is self-adjoint.
    """
    if N < 4:
        raise ValueError("N >= 4 required")
    order = max(64, 2 * max_degree + 4)
    x, w = _jacobi_rule(order, 0.5 * (N - 3))
    # work in x = v / sqrt(N) for conditioning, convert at the end
    basis: list[np.ndarray] = []
    for d in range(max_degree + 1):
        c = np.zeros(d + 1)
        c[d] = 1.0
        for b in basis:
            pb = P.polyval(x, b)
            proj = np.dot(w, P.polyval(x, c) * pb) / np.dot(w, pb * pb)
            c = P.polysub(c, proj * b)[: d + 1]
        basis.append(c)
    scale = math.sqrt(N)
    return [c / scale ** np.arange(c.size) for c in basis]


def poly_callable(coefs: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    return lambda v: P.polyval(v, coefs)


# ---------------------------------------------------------------------------
# three dimensions


def delta2_3d(B: AngularKernel3D, l_max: int = 24) -> Delta2Result:
    """Two-particle gap at zero momentum: 2 min_{l>=1} (1 - lambda_l).

    With v_1 = -v_2 = u, a collision replaces the direction of u by w with
    density proportional to B(e.w); spherical harmonics of degree l are
    eigenfunctions with eigenvalue lambda_l = (1/2) int B P_l (Funk-Hecke).
    """
    vals = np.array([2.0 * (1.0 - B.legendre_moment(l)) for l in range(1, l_max + 1)])
    k = int(np.argmin(vals))
    return Delta2Result(float(vals[k]), k + 1, vals)


def gap_3d(N, B: AngularKernel3D, tol: float = 1e-12) -> GapReport:
    if N < 3:
        raise ValueError("N >= 3 required")
    b1, b2 = B.B1, B.B2
    ratio = 1.0 if math.isinf(N) else N / (N - 1.0)
    energy_flux = ratio * (1.0 - b2)
    momentum = 1.0 - b1
    d2 = delta2_3d(B)
    cands = {"sum_j |v_j|^2 v_j": energy_flux, "|v_i|^2-|v_j|^2, v_i-v_j": momentum}
    if b2 > b1 and d2.value >= (20.0 / 9.0) * (1.0 - b2):
        return GapReport(N, energy_flux, "sum_j |v_j|^2 v_j^alpha (3-dim)", "closed-form", True,
                         None, d2.value, True, cands)
    if abs(d2.value - 2.0 * (1.0 - b1)) <= 1e-10 and N >= 7:
        if momentum <= energy_flux:
            eig = "|v_i|^2 - |v_j|^2 and v_i^alpha - v_j^alpha"
            gap = momentum
        else:
            eig = "sum_j |v_j|^2 v_j^alpha (3-dim)"
            gap = energy_flux
        return GapReport(N, gap, eig, "closed-form", True, None, d2.value, True, cands)
    return GapReport(N, min(cands.values()), "conditions not verified", "closed-form", False,
                     None, d2.value, False, cands, note="conditions not verified")


def energy_flux_observable(v: np.ndarray, alpha: int = 0) -> float:
    """Phi^alpha(v) = sum_j |v_j|^2 v_j^alpha."""
    return float(np.sum(np.sum(v * v, axis=1) * v[:, alpha]))
