"""Ornstein-Uhlenbeck semigroup: exact evolution, evolved scores, Hessian-bound curves.

The OU kernel is q_t(.|x) = N(e^{-t} x, (1 - e^{-2t}) I), so a Gaussian
component N(m, S) evolves to N(e^{-t} m, e^{-2t} S + (1 - e^{-2t}) I).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import ConstructionError, DomainError, UnsupportedOperation
from .measures import (Gaussian, GaussianMixture, PerturbedSLC, SamplerSeed,
                       TargetMeasure, _points, as_seed)

THETA_FAMILIES = ("slc", "perturbed", "convexity_profile")


@dataclass(frozen=True)
class ThetaProfile:
    """Upper bound u -> theta_u on lambda_max(I + Hess log q_u).

    ``slc``               alpha > 0
    ``perturbed``         alpha > 0, L >= 0 (slc is the L = 0 case)
    ``convexity_profile`` alpha > -1, gprime0 >= 0
    """

    family: str
    alpha: float
    L: float = 0.0
    gprime0: float = 0.0

    def __post_init__(self):
        if self.family not in THETA_FAMILIES:
            raise ConstructionError(f"unknown theta family {self.family!r}")
        if self.family == "convexity_profile":
            if not self.alpha > -1:
                raise ConstructionError("convexity_profile needs alpha > -1")
            if self.gprime0 < 0:
                raise ConstructionError("gprime0 must be nonnegative")
        elif not self.alpha > 0:
            raise ConstructionError(f"{self.family} needs alpha > 0")
        if self.L < 0:
            raise ConstructionError("L must be nonnegative")
        if self.family == "slc" and self.L != 0:
            raise ConstructionError("slc profile has no L; use family='perturbed'")

    @classmethod
    def slc(cls, alpha: float) -> "ThetaProfile":
        return cls("slc", float(alpha))

    @classmethod
    def perturbed(cls, alpha: float, L: float) -> "ThetaProfile":
        return cls("perturbed", float(alpha), L=float(L))

    @classmethod
    def convexity_profile(cls, alpha: float, gprime0: float) -> "ThetaProfile":
        return cls("convexity_profile", float(alpha), gprime0=float(gprime0))

    def describe(self) -> dict:
        out = {"family": self.family, "alpha": self.alpha}
        if self.family == "perturbed":
            out["L"] = self.L
        if self.family == "convexity_profile":
            out["gprime0"] = self.gprime0
        return out


def theta(p: ThetaProfile, u):
    """Evaluate theta_u; scalar in, scalar out.

    Written in terms of e^{-2u} so large u never overflows.  For the perturbed
    family with L > 0 the value at u = 0 is +inf (integrable singularity).
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("theta is defined for u >= 0")
    em = np.exp(-2.0 * u_arr)          # e^{-2u}
    om = -np.expm1(-2.0 * u_arr)       # 1 - e^{-2u}
    a = p.alpha
    if p.family == "convexity_profile":
        w = 1.0 + om * a
        out = -em / w * (a - p.gprime0 / w)
    else:
        D = a * om + em                # (a (e^{2u} - 1) + 1) e^{-2u}
        out = (1.0 - a) * em / D
        if p.L > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                extra = em * p.L**2 / D**2 + 2.0 * p.L * em / (D**1.5 * np.sqrt(om))
            out = out + np.where(u_arr == 0, np.inf, extra)
    return float(out) if np.ndim(out) == 0 else out


class EvolvedMeasure:
    """Law of the forward OU process at time t started from ``base``."""

    def __init__(self, base: TargetMeasure, t: float):
        if not isinstance(base, (Gaussian, GaussianMixture)):
            raise UnsupportedOperation(
                f"exact OU evolution needs a gaussian or gaussian_mixture, got {base.family}; "
                "use evolved_score_generic")
        if not (t >= 0 and np.isfinite(t)):
            raise DomainError("evolution time must be finite and >= 0")
        self.base = base
        self.t = float(t)
        decay = np.exp(-self.t)
        I = np.eye(base.dim)
        # I + e^{-2t}(S - I) rather than e^{-2t} S + (1 - e^{-2t}) I: keeps S = I fixed exactly
        cov = I + decay**2 * (base.cov - I)
        if isinstance(base, Gaussian):
            self.measure = Gaussian(decay * base.mean, cov)
        else:
            self.measure = GaussianMixture(decay * base.means, cov, base.weights)

    @property
    def means(self) -> np.ndarray:
        m = self.measure
        return m.mean[None, :] if isinstance(m, Gaussian) else m.means

    @property
    def cov(self) -> np.ndarray:
        return self.measure.cov

    @property
    def weights(self) -> np.ndarray:
        m = self.measure
        return np.ones(1) if isinstance(m, Gaussian) else m.weights

    def score(self, y):
        return self.measure.score(y)

    def log_density(self, y):
        return self.measure.log_density(y)

    def hessian(self, y):
        return self.measure.hessian(y)


def ou_evolve(m: TargetMeasure | EvolvedMeasure, t: float) -> EvolvedMeasure:
    if isinstance(m, EvolvedMeasure):
        # Q_s Q_t = Q_{s+t}: evolve the already-evolved parameters
        out = EvolvedMeasure(m.measure, t)
        out.base, out.t = m.base, m.t + float(t)
        return out
    return EvolvedMeasure(m, t)


def evolved_score(m: TargetMeasure, t: float, y):
    return EvolvedMeasure(m, t).score(y)


class EvolvedScore:
    """Score oracle tau -> grad log (mu Q_tau), with a per-time cache.

    One instance is meant to live for one flow integration; it is not shared
    across threads.
    """

    def __init__(self, measure: TargetMeasure):
        self.measure = measure
        self._cache: dict[float, EvolvedMeasure] = {}

    def evolved(self, tau: float) -> EvolvedMeasure:
        ev = self._cache.get(tau)
        if ev is None:
            ev = self._cache[tau] = EvolvedMeasure(self.measure, tau)
        return ev

    def __call__(self, tau: float, y: np.ndarray) -> np.ndarray:
        return self.evolved(tau).score(y)


class GenericScoreEstimate(NamedTuple):
    estimate: np.ndarray
    stderr: np.ndarray
    ess: np.ndarray
    low_ess: bool


def _proposal_gaussian(m: TargetMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Mean and precision of the Gaussian whose tilt gives ``m``."""
    if isinstance(m, Gaussian):
        return m.mean, m.precision
    if isinstance(m, GaussianMixture):
        return np.zeros(m.dim), m.precision
    if isinstance(m, PerturbedSLC):
        return np.zeros(m.dim), m.A
    raise UnsupportedOperation(f"no proposal for family {m.family}")


def evolved_score_generic(m: TargetMeasure, t: float, y, n: int,
                          seed: SamplerSeed | int) -> GenericScoreEstimate:
    """Self-normalised importance-sampling estimate of grad log (mu Q_t)(y).

    Uses grad log (mu Q_t)(y) = (e^{-t} E[X | Y=y] - y) / (1 - e^{-2t}), the
    posterior being mu_{y,t}(x) ∝ q_t(y|x) mu(x).  The proposal is that
    posterior with mu replaced by the Gaussian part of its density, so the
    importance weights are exactly the tilt factors.
    """
    if not t > 0:
        raise DomainError("evolved_score_generic needs t > 0 (the OU kernel degenerates at t = 0)")
    pts, single = _points(y, m.dim)
    a, v = np.exp(-t), -np.expm1(-2.0 * t)
    m0, P0 = _proposal_gaussian(m)
    post_prec = P0 + (a * a / v) * np.eye(m.dim)
    post_cov = np.linalg.inv(post_prec)
    chol = np.linalg.cholesky(0.5 * (post_cov + post_cov.T))
    post_means = (P0 @ m0 + (a / v) * pts) @ post_cov  # n_points, d (post_cov symmetric)

    z = as_seed(seed).generator().standard_normal((n, m.dim))
    est = np.empty_like(pts)
    se = np.empty_like(pts)
    ess = np.empty(pts.shape[0])
    for i, mean in enumerate(post_means):
        xs = mean + z @ chol.T
        logw = _log_tilt(m, xs)
        w = np.exp(logw - logsumexp(logw))
        xbar = w @ xs
        var = (w[:, None] ** 2 * (xs - xbar) ** 2).sum(axis=0)
        est[i] = (a * xbar - pts[i]) / v
        se[i] = a * np.sqrt(var) / v
        ess[i] = 1.0 / np.sum(w * w)
    low = bool(np.any(ess < 50))
    if single:
        return GenericScoreEstimate(est[0], se[0], ess[:1], low)
    return GenericScoreEstimate(est, se, ess, low)


def _log_tilt(m: TargetMeasure, xs: np.ndarray) -> np.ndarray:
    if isinstance(m, Gaussian):
        return np.zeros(xs.shape[0])
    if isinstance(m, GaussianMixture):
        P = m.precision
        logits = (m.log_weights[None, :] + xs @ P @ m.means.T
                  - 0.5 * np.einsum("ki,ij,kj->k", m.means, P, m.means)[None, :])
        return logsumexp(logits, axis=1)
    return -m.perturbation(xs)


def theta_empirical_check(m: TargetMeasure, p: ThetaProfile, t: float, probes) -> float:
    """max over probes of lambda_max(I + Hess log q_t(y)) - theta_t."""
    ev = EvolvedMeasure(m, t)
    H = ev.hessian(np.atleast_2d(probes))
    lam = np.linalg.eigvalsh(H + np.eye(m.dim))[:, -1]
    return float(lam.max() - theta(p, t))


def one_sided_lipschitz_ratio(m: TargetMeasure, t: float, x, y) -> np.ndarray:
    """<x - y, s_t(x) - s_t(y)> / |x - y|^2 + 1 for paired rows of x and y.

    The drift of the reverse flow is y + s_t(y); this ratio is what the
    profile theta_t has to dominate.
    """
    ev = EvolvedMeasure(m, t)
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    dx = x - y
    ds = ev.score(x) - ev.score(y)
    return np.sum(dx * ds, axis=1) / np.sum(dx * dx, axis=1) + 1.0
