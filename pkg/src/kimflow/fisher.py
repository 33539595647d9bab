"""Relative Fisher information, its sup variant, and Gaussian oracles.

FI(nu || mu) = E_nu |grad log nu - grad log mu|^2; normalising constants
cancel in the score difference so unnormalised targets are fine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bounds import theta_integral
from .errors import DomainError
from .measures import (Gaussian, SamplerSeed, TargetMeasure, as_seed, draw_variates,
                       sample)
from .ou import EvolvedMeasure, ThetaProfile

FI_INF_STEPS = 20
FI_INF_STEP_SCALE = 0.05
FD_STEP = 1e-4


class Estimate(NamedTuple):
    estimate: float
    stderr: float


def _check_pair(nu: TargetMeasure, mu: TargetMeasure):
    if nu.dim != mu.dim:
        raise DomainError(f"dimension mismatch: nu has d={nu.dim}, mu has d={mu.dim}")


def score_gap_sq(nu, mu, x: np.ndarray) -> np.ndarray:
    """|score_nu(x) - score_mu(x)|^2 row-wise; NaN raises with the offending point."""
    diff = nu.score(x) - mu.score(x)
    out = np.einsum("ni,ni->n", diff, diff)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out)))
        raise DomainError(f"non-finite score difference at x={x[bad].tolist()}")
    return out


def _mean_se(vals: np.ndarray) -> Estimate:
    n = vals.shape[0]
    mean = float(np.mean(vals))     # numpy's mean uses pairwise summation
    se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se)


def fi(nu: TargetMeasure, mu: TargetMeasure, n: int, seed: SamplerSeed | int, *,
       mcmc: bool = False) -> Estimate:
    """Monte Carlo FI(nu || mu) with x ~ nu; returns (estimate, standard error).

    ``mcmc=True`` allows approximate Langevin draws when nu is perturbed_slc.
    """
    _check_pair(nu, mu)
    x = sample(nu, seed, n, mcmc=mcmc)
    return _mean_se(score_gap_sq(nu, mu, x))


def fi_gaussian_closed(g1: Gaussian, g2: Gaussian) -> float:
    """Exact FI(g1 || g2).

    The score gap is affine, s1(x) - s2(x) = A x + c with A = S2^{-1} - S1^{-1}
    and c = S1^{-1} m1 - S2^{-1} m2, so under x ~ N(m1, S1) its mean square is
    |A m1 + c|^2 + tr(A S1 A^T).
    """
    _check_pair(g1, g2)
    A = g2.precision - g1.precision
    c = g1.precision @ g1.mean - g2.precision @ g2.mean
    shift = A @ g1.mean + c
    return float(shift @ shift + np.trace(A @ g1.cov @ A.T))


class SupEstimate(NamedTuple):
    estimate: float
    argmax: np.ndarray
    lower_bound: bool = True


def fi_inf(nu: TargetMeasure, mu: TargetMeasure, n: int, seed: SamplerSeed | int,
           refine_steps: int = FI_INF_STEPS, *, mcmc: bool = False) -> SupEstimate:
    """Lower bound on esssup_nu |grad log(nu/mu)|^2.

    Each of ``n`` draws from nu is pushed uphill on the squared score gap for
    ``refine_steps`` steps of length 0.05 * max(|x|, 1) along the normalised
    finite-difference gradient (h = 1e-4); a step is kept only if it increases
    the gap.  Both targets have full support, so every visited point is a valid
    witness for the supremum.
    """
    _check_pair(nu, mu)
    x = sample(nu, seed, n, mcmc=mcmc)
    f = score_gap_sq(nu, mu, x)
    d = nu.dim
    for _ in range(refine_steps):
        g = np.empty_like(x)
        for i in range(d):
            e = np.zeros(d)
            e[i] = FD_STEP
            g[:, i] = (score_gap_sq(nu, mu, x + e) - score_gap_sq(nu, mu, x - e)) / (2 * FD_STEP)
        gnorm = np.linalg.norm(g, axis=1)
        movable = gnorm > 0
        if not movable.any():
            break
        step = FI_INF_STEP_SCALE * np.maximum(np.linalg.norm(x, axis=1), 1.0)
        cand = x.copy()
        cand[movable] += (step[movable] / gnorm[movable])[:, None] * g[movable]
        fc = score_gap_sq(nu, mu, cand)
        better = fc > f
        x[better], f[better] = cand[better], fc[better]
    k = int(np.argmax(f))
    return SupEstimate(float(f[k]), x[k].copy())


@dataclass
class DecayCurve:
    times: np.ndarray
    estimates: np.ndarray
    stderr: np.ndarray
    envelope: np.ndarray
    envelope_se: np.ndarray
    fi0: Estimate
    profile: ThetaProfile
    meta: dict = field(default_factory=dict)

    def within_envelope(self, k: float = 3.0) -> np.ndarray:
        """Pointwise estimate <= envelope up to k combined standard errors."""
        slack = k * np.hypot(self.stderr, self.envelope_se) + 1e-12 * np.maximum(self.envelope, 1.0)
        return self.estimates <= self.envelope + slack


def gronwall_factor(p: ThetaProfile, t) -> np.ndarray:
    """exp(-2 int_0^t (1 - 2 theta_u) du) = exp(-2 t + 4 Phi(t))."""
    t = np.asarray(t, dtype=float)
    return np.exp(-2.0 * t + 4.0 * np.asarray(theta_integral(p, t)))


def fi_decay_curve(nu: TargetMeasure, mu: TargetMeasure, p: ThetaProfile, times, n: int,
                   seed: SamplerSeed | int) -> DecayCurve:
    """FI(q_t^nu || q_t^mu) on a time grid plus its Gronwall envelope.

    The evolved nu is sampled directly (evolve, then sample) with the same
    underlying variates at every time, so the curve is smooth in t.
    """
    _check_pair(nu, mu)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or np.any(times < 0):
        raise DomainError("decay times must be nonnegative and strictly increasing")
    u, z = draw_variates(seed, n, nu.dim)
    est = np.empty_like(times)
    se = np.empty_like(times)
    for j, t in enumerate(times):
        nu_t, mu_t = EvolvedMeasure(nu, t).measure, EvolvedMeasure(mu, t).measure
        e = _mean_se(score_gap_sq(nu_t, mu_t, nu_t.sample_from_variates(u, z)))
        est[j], se[j] = e
    if times[0] == 0:
        fi0 = Estimate(float(est[0]), float(se[0]))
    else:
        fi0 = _mean_se(score_gap_sq(nu, mu, nu.sample_from_variates(u, z)))
    factor = gronwall_factor(p, times)
    return DecayCurve(times, est, se, factor * fi0.estimate, factor * fi0.stderr, fi0, p,
                      meta={"n": n, "seed": as_seed(seed).seed})


class RateCheck(NamedTuple):
    derivative: float       # d/dt FI(q_t^nu || q_t^mu), central difference
    bound: float            # -2 E |gap|^2_{(-2 Hess log q_t^mu - I)}
    stderr: float


def decay_rate_check(nu: TargetMeasure, mu: TargetMeasure, t: float, n: int,
                     seed: SamplerSeed | int, h: float = 1e-4) -> RateCheck:
    """Both sides of the instantaneous Fisher-information decay inequality at time t.

    Common random numbers make the finite-difference derivative of the
    Monte Carlo estimate essentially noise-free in h.
    """
    if not t > h:
        raise DomainError("need t > h for a central difference")
    _check_pair(nu, mu)
    u, z = draw_variates(seed, n, nu.dim)

    def fi_at(s):
        nu_s, mu_s = EvolvedMeasure(nu, s).measure, EvolvedMeasure(mu, s).measure
        return float(np.mean(score_gap_sq(nu_s, mu_s, nu_s.sample_from_variates(u, z))))

    deriv = (fi_at(t + h) - fi_at(t - h)) / (2 * h)
    nu_t, mu_t = EvolvedMeasure(nu, t).measure, EvolvedMeasure(mu, t).measure
    x = nu_t.sample_from_variates(u, z)
    gap = nu_t.score(x) - mu_t.score(x)
    M = -2.0 * mu_t.hessian(x) - np.eye(nu.dim)
    vals = -2.0 * np.einsum("ni,nij,nj->n", gap, M, gap)
    e = _mean_se(vals)
    return RateCheck(deriv, e.estimate, e.stderr)


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def w2_gaussian(g1: Gaussian, g2: Gaussian) -> float:
    """Bures-Wasserstein W2 between two Gaussians."""
    _check_pair(g1, g2)
    r2 = _psd_sqrt(g2.cov)
    cross = _psd_sqrt(r2 @ g1.cov @ r2)
    sq = float(np.sum((g1.mean - g2.mean) ** 2) + np.trace(g1.cov + g2.cov - 2.0 * cross))
    return float(np.sqrt(max(sq, 0.0)))


def kl_gaussian(g1: Gaussian, g2: Gaussian) -> float:
    """KL(g1 || g2) = int log(g1/g2) dg1."""
    _check_pair(g1, g2)
    d = g1.dim
    dm = g2.mean - g1.mean
    logdet1 = 2.0 * np.log(np.diag(g1.chol)).sum()
    logdet2 = 2.0 * np.log(np.diag(g2.chol)).sum()
    return float(0.5 * (np.trace(g2.precision @ g1.cov) + dm @ g2.precision @ dm - d
                        + logdet2 - logdet1))
