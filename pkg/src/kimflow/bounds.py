"""Stability constants and the integrals behind them.

Notation: theta is the Hessian-bound curve of a ``ThetaProfile`` and
Phi(v) = int_0^v theta_u du.  The finite-horizon constants are

    Lambda_T = int_0^T exp(3 Phi(v) - v) dv                  (L2 bound)
    eta_T    = int_0^T d_v exp(Phi(v)) dv,  d_v = e^v lambda_v / u(v)   (L-infinity bound)

with u(v) = e^{2v} - 1 and lambda_v the log-Sobolev constant of the OU
posterior.  Both integrands behave like exp(c sqrt(v)) near v = 0 for the
perturbed family, so quadrature runs in w = sqrt(v), where they are smooth.

The closed-form constants ``lambda_inf`` and ``eta_inf`` are exact only when L = 0;
for L > 0 or gprime0 > 0 they are upper bounds on lim Lambda_T, not equal to
it.  ``lambda_limit`` evaluates the limit itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import ConstructionError, DomainError, QuadratureError
from .ou import ThetaProfile, theta

__all__ = [
    "QuadratureSpec", "ProfileParams", "ghat", "lhat", "theta_integral",
    "theta_integral_quadrature", "lambda_T", "lambda_inf", "lambda_limit",
    "lsi_constant", "eta_T", "eta_inf",
]


@dataclass(frozen=True)
class QuadratureSpec:
    grid: int = 4096
    refinement: int = 2
    rtol: float = 1e-6
    max_refinements: int = 6

    def __post_init__(self):
        if self.grid < 2 or self.grid % 2:
            raise ConstructionError("quadrature grid must be a positive even number of intervals")
        if self.refinement < 2:
            raise ConstructionError("refinement factor must be >= 2")


DEFAULT_QUADRATURE = QuadratureSpec()


def ghat(L: float, r):
    """Comparison function 2 sqrt(L) tanh(r sqrt(L)); identically zero for L = 0."""
    if L < 0 or np.any(np.asarray(r) < 0):
        raise DomainError("ghat needs L >= 0 and r >= 0")
    sL = np.sqrt(L)
    out = 2.0 * sL * np.tanh(np.asarray(r, dtype=float) * sL)
    return float(out) if np.ndim(out) == 0 else out


def lhat(alpha_V: float = 1.0, L_V: float = 0.0, R_V: float = 0.0, *, atol: float = 1e-10) -> float:
    """Smallest L >= 0 with ghat(L, R_V) / R_V >= L_V (0 when R_V = 0).

    L -> ghat(L, R)/R is increasing, so bisection on a doubled bracket is exact
    up to ``atol``.  The upper end of the final bracket is returned, so the
    defining inequality always holds for the result.
    """
    if R_V < 0 or L_V < 0:
        raise DomainError("R_V and L_V must be nonnegative")
    if R_V == 0 or L_V == 0:
        return 0.0

    def ok(L):
        return ghat(L, R_V) / R_V >= L_V

    hi = L_V
    while not ok(hi):
        hi *= 2.0
        if hi > 2.0**60:
            raise QuadratureError("lhat bracket exceeded 2^60")
    lo = 0.0
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ProfileParams:
    """Convexity profile alpha_V outside B(0, R_V), alpha_V - L_V inside."""

    alpha_V: float
    L_V: float = 0.0
    R_V: float = 0.0

    def __post_init__(self):
        if not self.alpha_V > 0:
            raise ConstructionError("alpha_V must be positive")
        if self.L_V < 0 or self.R_V < 0:
            raise ConstructionError("L_V and R_V must be nonnegative")

    @cached_property
    def lhat(self) -> float:
        return lhat(self.alpha_V, self.L_V, self.R_V)

    @property
    def gprime0(self) -> float:
        # right-derivative of 2 sqrt(L) tanh(r sqrt(L)) at r = 0
        return 2.0 * self.lhat

    def to_theta_profile(self) -> ThetaProfile:
        # mu ∝ exp(-V) = gamma exp(-h) with h = V - |x|^2/2, so kappa_h = kappa_V - 1
        return ThetaProfile.convexity_profile(self.alpha_V - 1.0, self.gprime0)


# ---------------------------------------------------------------------------
# Phi(v) = int_0^v theta_u du


def theta_integral(p: ThetaProfile, v):
    """Closed-form Phi(v) for every family.

    perturbed (b = e^{2v} - 1):
        -1/2 log((1 + a b)/(1 + b)) + b L^2 / (2 (1 + a b)) + 2 b L sqrt(a + 1/b) / (1 + a b)
    convexity_profile (w = 1 + (1 - e^{-2v}) a):
        -1/2 log w + (g/2) (1 - e^{-2v}) / w
    Both are rewritten in e^{-2v} to stay finite for large v.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError("Phi is defined for v >= 0")
    em = np.exp(-2.0 * v)
    om = -np.expm1(-2.0 * v)
    a = p.alpha
    if p.family == "convexity_profile":
        w = 1.0 + om * a
        out = -0.5 * np.log(w) + 0.5 * p.gprime0 * om / w
    else:
        D = a * om + em                  # (1 + a b) / (1 + b)
        out = -0.5 * np.log(D)
        if p.L > 0:
            out = out + 0.5 * p.L**2 * om / D + 2.0 * p.L * np.sqrt(om / D)
    return float(out) if out.ndim == 0 else out


def _theta_dw(p: ThetaProfile, w: np.ndarray) -> np.ndarray:
    """d Phi(w^2) / dw = 2 w theta(w^2), including its finite limit at w = 0."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    pos = w > 0
    out[pos] = 2.0 * w[pos] * theta(p, w[pos] ** 2)
    if p.family == "perturbed" and p.L > 0:
        # only the L / sqrt(e^{2u} - 1) term survives: 2 w * 2 L / sqrt(2 w^2)
        out[~pos] = 2.0 * np.sqrt(2.0) * p.L
    return out


def theta_integral_quadrature(p: ThetaProfile, v: float) -> float:
    """Phi(v) by adaptive quadrature of theta in w = sqrt(u) (no endpoint singularity)."""
    if v < 0:
        raise DomainError("Phi is defined for v >= 0")
    if v == 0:
        return 0.0
    val, _ = integrate.quad(lambda w: float(_theta_dw(p, np.array([w]))[0]), 0.0, np.sqrt(v),
                            epsabs=0.0, epsrel=1e-12, limit=500)
    return val


def _refine(fn, q: QuadratureSpec, what: str) -> float:
    n = q.grid
    prev = fn(n)
    for _ in range(q.max_refinements):
        n *= q.refinement
        cur = fn(n)
        if abs(cur - prev) <= q.rtol * abs(cur) or cur == prev:
            return cur
        prev = cur
    raise QuadratureError(f"{what} did not converge to rtol={q.rtol} within "
                          f"{q.max_refinements} refinements (last grid {n})")


def _phi_on_grid(p: ThetaProfile, w: np.ndarray, method: str) -> np.ndarray:
    if method == "closed":
        return theta_integral(p, w**2)
    return integrate.cumulative_simpson(_theta_dw(p, w), x=w, initial=0.0)


def _phi_method(p: ThetaProfile, phi: str) -> str:
    if phi == "auto":
        # no closed-form antiderivative is displayed for the convexity profile
        return "simpson" if p.family == "convexity_profile" else "closed"
    if phi not in ("closed", "simpson"):
        raise ValueError(f"unknown Phi method {phi!r}")
    return phi


def lambda_T(p: ThetaProfile, T: float, q: QuadratureSpec = DEFAULT_QUADRATURE,
             phi: str = "auto") -> float:
    """int_0^T exp(int_0^{T-s} (3 theta_u - 1) du) ds (without the sqrt(FI) factor)."""
    if T < 0:
        raise DomainError("T must be nonnegative")
    if T == 0:
        return 0.0
    method = _phi_method(p, phi)

    def at(n):
        w = np.linspace(0.0, np.sqrt(T), n + 1)
        f = 2.0 * w * np.exp(3.0 * _phi_on_grid(p, w, method) - w**2)
        return float(integrate.simpson(f, x=w))

    return _refine(at, q, "lambda_T")


def lambda_inf(p: ThetaProfile) -> float:
    """Closed-form L2 stability constant by family."""
    a = p.alpha
    if p.family == "convexity_profile":
        return float(np.exp(1.5 * p.gprime0 / (1.0 + a)) / (1.0 + a))
    return float(np.exp(1.5 * p.L**2 / a + 6.0 * p.L / np.sqrt(a)) / a)


def lambda_limit(p: ThetaProfile) -> float:
    """lim_{T->inf} Lambda_T evaluated directly, in r = e^{-v}.

    The integrand is (r^2 + a (1 - r^2))^{-3/2} times the exponential factors;
    replacing r^2/(1-r^2) + a by a recovers ``lambda_inf``.
    """
    a = p.alpha

    def f(r):
        if p.family == "convexity_profile":
            c = 1.0 + a - a * r * r
            return c**-1.5 * np.exp(1.5 * p.gprime0 * (1.0 - r * r) / c)
        c = r * r + a * (1.0 - r * r)
        if p.L == 0:
            return c**-1.5
        k = a + r * r / (1.0 - r * r) if r < 1 else np.inf
        return c**-1.5 * np.exp(1.5 * p.L**2 / k + 6.0 * p.L / np.sqrt(k))

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=500)
    return val


# ---------------------------------------------------------------------------
# L-infinity constants


def lsi_constant(p: ThetaProfile, s):
    """Log-Sobolev constant lambda_s of the OU posterior mu_{y,s}; 0 at s = 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("s must be nonnegative")
    with np.errstate(over="ignore", divide="ignore"):
        inv_u = 1.0 / np.expm1(2.0 * s)   # 1/u(s); inf at s=0, 0 as s -> inf
    a = p.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        if p.family == "convexity_profile":
            k = 1.0 + a + inv_u
            out = np.exp(p.gprime0 / k) / k
        else:
            k = a + inv_u
            out = np.exp(p.L**2 / k + 4.0 * p.L / np.sqrt(k)) / k
    out = np.where(s == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _lsi_rate(p: ThetaProfile, v: np.ndarray, reading: str) -> np.ndarray:
    """d_v = e^v lambda / u(v), written without 0/0 at v = 0.

    ``reading="lemma"`` evaluates lambda at time v (lambda expressed through
    u(v)); ``"literal"`` evaluates lambda at time u(v), the other way to read
    the subscript lambda_{u(T-s)}.
    """
    em = np.exp(-2.0 * v)
    om = -np.expm1(-2.0 * v)
    a = p.alpha
    if reading == "lemma":
        if p.family == "convexity_profile":
            D = (1.0 + a) * om + em
            return np.exp(-v) / D * np.exp(p.gprime0 * om / D)
        D = a * om + em
        return np.exp(-v) / D * np.exp(p.L**2 * om / D + 4.0 * p.L * np.sqrt(om / D))
    if reading != "literal":
        raise ValueError(f"unknown lambda reading {reading!r}")
    u = np.expm1(2.0 * v)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        big = np.expm1(2.0 * u)
        ratio = np.where(u > 0, u / big, 0.5)      # u(v) / u(u(v))
        inv_big = np.where(u > 0, 1.0 / big, np.inf)
    ratio = np.nan_to_num(ratio, nan=0.0)
    base = 1.0 + a if p.family == "convexity_profile" else a
    denom = base * u + ratio                      # u(v) * (base + 1/u(u(v)))
    with np.errstate(divide="ignore"):
        k = base + inv_big
        if p.family == "convexity_profile":
            expo = p.gprime0 / k
        else:
            expo = p.L**2 / k + 4.0 * p.L / np.sqrt(k)
    return np.exp(v) / denom * np.exp(expo)


def eta_T(p: ThetaProfile, T: float, q: QuadratureSpec = DEFAULT_QUADRATURE,
          phi: str = "auto", reading: str = "lemma") -> float:
    """int_0^T d_{T-s} exp(int_0^{T-s} theta_u du) ds (without the sqrt(FI_inf) factor)."""
    if T < 0:
        raise DomainError("T must be nonnegative")
    if T == 0:
        return 0.0
    method = _phi_method(p, phi)

    def at(n):
        w = np.linspace(0.0, np.sqrt(T), n + 1)
        v = w**2
        f = 2.0 * w * _lsi_rate(p, v, reading) * np.exp(_phi_on_grid(p, w, method))
        return float(integrate.simpson(f, x=w))

    return _refine(at, q, "eta_T")


def eta_inf(p: ThetaProfile) -> float:
    """Closed-form L-infinity stability constant (expected to coincide with ``lambda_inf``)."""
    if p.family == "convexity_profile":
        return float(1.0 / (1.0 + p.alpha) * np.exp(3.0 * p.gprime0 / (2.0 * (1.0 + p.alpha))))
    return float(1.0 / p.alpha * np.exp(3.0 * p.L * p.L / (2.0 * p.alpha) + 6.0 * p.L / np.sqrt(p.alpha)))
