"""Deterministic solver for the one-dimensional Kac equation in Fourier space.

With phi(xi) = int e^{i xi v} f(v) dv the equation reads

    d/dt phi(xi) = 2 int rho(theta) [phi(xi cos theta) phi(xi sin theta) - phi(xi)] d theta.

The right-hand side is evaluated on the deviation eta = phi - exp(-xi^2/2),
so the Maxwellian is an exact fixed point of the discrete scheme. Off-grid
values of eta come from a fixed 8-point Lagrange stencil, stored as a sparse
interpolation matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import eval_hermitenorm

from .densities import gaussian_logpdf
from .engine import ScatteringDensity, uniform_rho

NEG_TOL = 1e-6


class NegativeDensityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grids:
    """Velocity grid [-V, V] (M points) and frequency grid [-X, X] (M_xi points, odd)."""

    v_max: float = 10.0
    n_v: int = 1001
    xi_max: float = 20.0
    n_xi: int = 1025

    def __post_init__(self):
        if self.n_xi % 2 == 0 or self.n_v % 2 == 0:
            raise ValueError("grid sizes must be odd so both grids contain 0")

    @property
    def v(self):
        return np.linspace(-self.v_max, self.v_max, self.n_v)

    @property
    def xi(self):
        return np.linspace(-self.xi_max, self.xi_max, self.n_xi)


_transform_cache: dict = {}


def _transforms(g: Grids):
    """Dense forward (v -> xi) and inverse (xi -> v) trapezoid transforms."""
    if g not in _transform_cache:
        v, xi = g.v, g.xi
        wv = np.full(v.size, v[1] - v[0])
        wv[[0, -1]] *= 0.5
        wx = np.full(xi.size, xi[1] - xi[0])
        wx[[0, -1]] *= 0.5
        E = np.exp(1j * np.multiply.outer(xi, v))
        fwd = E * wv[None, :]
        inv = (E.conj().T * wx[None, :]) / (2.0 * np.pi)
        _transform_cache[g] = (fwd, inv)
    return _transform_cache[g]


@dataclass
class CharacteristicGrid:
    xi: np.ndarray
    phi: np.ndarray

    def check(self, tol=1e-8):
        mid = self.xi.size // 2
        ok0 = abs(self.phi[mid] - 1.0) < tol
        okb = np.all(np.abs(self.phi) <= 1.0 + tol)
        oks = np.allclose(self.phi[::-1], self.phi.conj(), atol=tol)
        return bool(ok0 and okb and oks)


@dataclass
class VelocityDensity:
    """Density on the velocity grid together with its characteristic function."""

    grids: Grids
    f: np.ndarray
    phi: np.ndarray = field(repr=False)

    @classmethod
    def from_density(cls, dens, grids: Grids | None = None) -> "VelocityDensity":
        """From any object with `pdf` (and optionally an exact `charfn`)."""
        grids = Grids() if grids is None else grids
        m4 = dens.moment(4) if hasattr(dens, "moment") else None
        f = np.asarray(dens.pdf(grids.v), dtype=float)
        if m4 is None:
            m4 = float(np.trapezoid(grids.v**4 * f, grids.v))
        if not np.isfinite(m4):
            raise ValueError("initial density must have a finite fourth moment")
        if hasattr(dens, "charfn"):
            phi = np.asarray(dens.charfn(grids.xi), dtype=complex)
        else:
            phi = _transforms(grids)[0] @ f
        return cls(grids, f, phi)

    @classmethod
    def from_values(cls, f, grids: Grids | None = None) -> "VelocityDensity":
        grids = Grids() if grids is None else grids
        f = np.asarray(f, dtype=float)
        if np.any(f < 0):
            raise ValueError("density values must be non-negative")
        if not np.isfinite(np.trapezoid(grids.v**4 * f, grids.v)):
            raise ValueError("initial density must have a finite fourth moment")
        return cls(grids, f, _transforms(grids)[0] @ f)

    @classmethod
    def from_phi(cls, phi, grids: Grids) -> "VelocityDensity":
        f = (_transforms(grids)[1] @ phi).real
        return cls(grids, f, np.asarray(phi))

    @property
    def v(self):
        return self.grids.v

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.v**k * self.f, self.v))

    @property
    def mass(self):
        return self.moment(0)

    @property
    def momentum(self):
        return self.moment(1)

    @property
    def energy(self):
        return self.moment(2)

    @property
    def characteristic(self) -> CharacteristicGrid:
        return CharacteristicGrid(self.grids.xi, self.phi)

    def clipped(self) -> np.ndarray:
        return np.maximum(self.f, 0.0)

    def pdf(self, x):
        return np.interp(x, self.v, self.clipped(), left=0.0, right=0.0)


# ---------------------------------------------------------------------------
# right-hand side


def _lagrange_matrix(nodes: np.ndarray, points: np.ndarray, width: int = 8):
    """Sparse matrix mapping values on a uniform grid to values at `points`."""
    h = nodes[1] - nodes[0]
    n = nodes.size
    pos = (points - nodes[0]) / h
    start = np.clip(np.floor(pos).astype(np.int64) - width // 2 + 1, 0, n - width)
    idx = start[:, None] + np.arange(width)[None, :]
    W = np.ones((points.size, width))
    for a in range(width):
        for b in range(width):
            if a != b:
                W[:, a] *= (pos - idx[:, b]) / (a - b)
    rows = np.repeat(np.arange(points.size), width)
    return sparse.csr_matrix((W.ravel(), (rows, idx.ravel())), shape=(points.size, n))


@dataclass
class FourierRHS:
    grids: Grids
    rho: ScatteringDensity
    n_theta: int = 64

    def __post_init__(self):
        xi = self.grids.xi
        theta, w = self.rho.quadrature(max(self.n_theta, self.rho.n_quad))
        mid = xi.size // 2
        self._half = xi[mid:]  # xi >= 0
        pc = np.multiply.outer(np.cos(theta), self._half).ravel()
        ps = np.multiply.outer(np.sin(theta), self._half).ravel()
        self._Pc = _lagrange_matrix(xi, pc)
        self._Ps = _lagrange_matrix(xi, ps)
        self._w = w
        self._nt = theta.size
        self._gauss = np.exp(-0.5 * xi**2)
        self._gc = np.exp(-0.5 * pc**2).reshape(self._nt, -1)
        self._gs = np.exp(-0.5 * ps**2).reshape(self._nt, -1)
        self._mid = mid

    def __call__(self, phi: np.ndarray) -> np.ndarray:
        eta = phi - self._gauss
        ec = (self._Pc @ eta).reshape(self._nt, -1)
        es = (self._Ps @ eta).reshape(self._nt, -1)
        # phi(xc) phi(xs) - G(x) with G(xc) G(xs) = G(x) cancelled exactly
        prod = self._gc * es + ec * self._gs + ec * es
        half = 2.0 * (self._w @ prod - self._w.sum() * eta[self._mid:])
        out = np.empty_like(phi)
        out[self._mid:] = half
        out[: self._mid] = half[1:][::-1].conj()
        out[self._mid] = 0.0
        return out


def rhs_fourier(phi, rho: ScatteringDensity | None = None, grids: Grids | None = None, n_theta: int = 64):
    grids = Grids() if grids is None else grids
    rho = uniform_rho() if rho is None else rho
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (grids.n_xi,):
        raise ValueError("phi must live on the frequency grid")
    return FourierRHS(grids, rho, n_theta)(phi)


def collision_rhs_direct(dens, v, rho: ScatteringDensity | None = None, w_max: float = 12.0,
                         n_w: int = 481, n_theta: int = 128):
    """Q(f,f)(v) = 2 int rho int [f(v')f(w') - f(v)f(w)] dw dtheta by direct quadrature.

    v' = v cos t - w sin t, w' = v sin t + w cos t. Uses `dens.pdf` at
    off-grid points, so it is only meant as a low-resolution oracle.
    """
    rho = uniform_rho() if rho is None else rho
    v = np.atleast_1d(np.asarray(v, dtype=float))
    theta, tw = rho.quadrature(n_theta)
    w = np.linspace(-w_max, w_max, n_w)
    ww = np.full(n_w, w[1] - w[0])
    ww[[0, -1]] *= 0.5
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(v.size)
    fw = dens.pdf(w)
    for a, x in enumerate(v):
        vp = x * c[:, None] - w[None, :] * s[:, None]
        wp = x * s[:, None] + w[None, :] * c[:, None]
        gain = dens.pdf(vp) * dens.pdf(wp)
        loss = float(dens.pdf(x)) * fw[None, :]
        out[a] = 2.0 * float(tw @ ((gain - loss) @ ww))
    return out


def fourier_rhs_in_v(phi, rho=None, grids: Grids | None = None):
    """Time derivative of f on the velocity grid implied by rhs_fourier."""
    grids = Grids() if grids is None else grids
    return (_transforms(grids)[1] @ rhs_fourier(phi, rho, grids)).real


# ---------------------------------------------------------------------------
# time integration


@dataclass
class Trajectory:
    times: np.ndarray
    states: list

    def h_values(self):
        return np.array([h_functional(s) for s in self.states])

    def hermite(self, n: int):
        return np.array([hermite_coefficient(s, n) for s in self.states])


def integrate(f0: VelocityDensity, rho: ScatteringDensity | None = None, t_end: float = 1.0,
              dt: float = 0.01, snapshots=None, n_theta: int = 64, check_every: int = 10) -> Trajectory:
    """Classical RK4 in Fourier space; densities recovered by inverse transform.

    Negative values down to -1e-6 are treated as roundoff; larger negativity
    (or NaN) aborts.
    """
    rho = uniform_rho() if rho is None else rho
    if dt <= 0 or 2.0 * dt >= 0.5:
        raise ValueError("dt must be positive with 2 dt < 0.5")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    snaps = np.array([t_end] if snapshots is None else sorted(snapshots), dtype=float)
    if np.any(snaps < 0) or np.any(snaps > t_end + 1e-12):
        raise ValueError("snapshot times must lie in [0, t_end]")
    F = FourierRHS(f0.grids, rho, n_theta)
    inv = _transforms(f0.grids)[1]
    phi = f0.phi.astype(complex).copy()
    t = 0.0
    out_t, out_s = [], []
    step = 0

    def record(ph, tt):
        f = (inv @ ph).real
        _guard(f, tt)
        out_t.append(tt)
        out_s.append(VelocityDensity(f0.grids, np.where(f < 0, 0.0, f), ph.copy()))

    k = 0
    while k < snaps.size and snaps[k] <= 1e-12:
        record(phi, 0.0)
        k += 1
    while k < snaps.size:
        h = min(dt, snaps[k] - t)
        k1 = F(phi)
        k2 = F(phi + 0.5 * h * k1)
        k3 = F(phi + 0.5 * h * k2)
        k4 = F(phi + h * k3)
        phi = phi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        step += 1
        if not np.all(np.isfinite(phi)):
            raise NegativeDensityError(f"non-finite characteristic function at t = {t:.6g}")
        if step % check_every == 0:
            _guard((inv @ phi).real, t)
        while k < snaps.size and abs(snaps[k] - t) <= 1e-12:
            record(phi, snaps[k])
            k += 1
    return Trajectory(np.array(out_t), out_s)


def _guard(f, t):
    if not np.all(np.isfinite(f)):
        raise NegativeDensityError(f"non-finite density at t = {t:.6g}")
    lo = float(f.min())
    if lo < -NEG_TOL:
        raise NegativeDensityError(f"density reached {lo:.3e} at t = {t:.6g}")


# ---------------------------------------------------------------------------
# diagnostics


def h_functional(f: VelocityDensity) -> float:
    """H(f|gamma) = int f log(f/gamma), trapezoid rule, 0 log 0 = 0."""
    v = f.v
    fv = f.clipped()
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(fv > 0, fv * (np.log(fv) - gaussian_logpdf(v)), 0.0)
    return float(np.trapezoid(integrand, v))


def hermite_coefficient(f: VelocityDensity, n: int) -> float:
    """a_n = int f He_n dv / n! (probabilists' Hermite)."""
    if n > 12:
        raise ValueError("n <= 12 required")
    return float(np.trapezoid(f.f * eval_hermitenorm(n, f.v), f.v) / math.factorial(n))


def linearized_rate(n: int, rho: ScatteringDensity | None = None) -> float:
    """2 int rho (1 - cos^n - sin^n), the decay rate of a_n near equilibrium."""
    rho = uniform_rho() if rho is None else rho
    return 2.0 * rho.expect(lambda t: 1.0 - np.cos(t) ** n - np.sin(t) ** n, max(64, 4 * n))


class HermitePerturbation:
    """gamma (1 + eps He_n / scale); exact pdf and characteristic function."""

    def __init__(self, eps: float, n: int = 4, scale: float | None = None):
        self.eps = eps
        self.n = n
        self.scale = math.factorial(n) if scale is None else scale

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(gaussian_logpdf(v)) * (1.0 + self.eps * eval_hermitenorm(self.n, v) / self.scale)

    def charfn(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.exp(-0.5 * xi**2) * (1.0 + self.eps * (1j * xi) ** self.n / self.scale)

    def moment(self, k):
        from scipy import integrate

        return integrate.quad(lambda x: x**k * float(self.pdf(x)), -np.inf, np.inf)[0]


def export_csv(traj: Trajectory, path, kind: str = "density"):
    """Rows (t, v, f) or (t, xi, re_phi, im_phi)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if kind == "density":
            w.writerow(["t", "v", "f"])
            for t, s in zip(traj.times, traj.states):
                for x, y in zip(s.v, s.f):
                    w.writerow([format(t, ".17g"), format(x, ".17g"), format(y, ".17g")])
        else:
            w.writerow(["t", "xi", "re_phi", "im_phi"])
            for t, s in zip(traj.times, traj.states):
                for x, y in zip(s.grids.xi, s.phi):
                    w.writerow([format(t, ".17g"), format(x, ".17g"), format(y.real, ".17g"), format(y.imag, ".17g")])
