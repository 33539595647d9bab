"""Target measures with exact log-densities, scores and Hessians.

Three families are supported:

* ``Gaussian``         N(m, S)
* ``GaussianMixture``  sum_k w_k N(m_k, Sigma) with a *shared* covariance
* ``PerturbedSLC``     exp(-V - H), V(x) = 1/2 x^T A x, H Lipschitz

A shared-covariance mixture is itself a tilt of a Gaussian:
log mu = -V + H_mix with V = 1/2 |x|^2_{Sigma^{-1}} and H_mix the log-sum-exp
of the linear tilts.  ``PerturbedSLC`` uses the opposite sign (exp(-V - H)).
Every stability constant depends on H only through its Lipschitz constant, so
H -> -H changes nothing downstream.

All evaluation methods accept a single point of shape ``(d,)`` or a batch of
shape ``(n, d)`` and return results with the matching leading shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np
from scipy.special import logsumexp

from .errors import ConstructionError, DomainError, UnsupportedOperation

LOG_2PI = float(np.log(2.0 * np.pi))
MAX_HESSIAN_DIM = 8
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SamplerSeed:
    """A (seed, stream) pair; identical pairs give identical draws."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConstructionError("seed must fit in an unsigned 64-bit integer")
        if int(self.stream) < 0:
            raise ConstructionError("stream index must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, k: int) -> "SamplerSeed":
        # Streams are partitioned in blocks of 1000 so nested substreams never collide.
        return SamplerSeed(self.seed, self.stream * 1000 + k + 1)


def as_seed(seed: SamplerSeed | int) -> SamplerSeed:
    return seed if isinstance(seed, SamplerSeed) else SamplerSeed(int(seed))


def _points(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = arr[None, :] if single else arr
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DomainError(f"expected points of dimension {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(pts)):
        bad = int(np.argmax(~np.all(np.isfinite(pts), axis=1)))
        raise DomainError(f"non-finite input point at index {bad}")
    return pts, single


def _spd(mat, name: str, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    m = np.atleast_2d(np.asarray(mat, dtype=float))
    if m.shape[0] != m.shape[1] or (dim is not None and m.shape[0] != dim):
        raise ConstructionError(f"{name} must be a square {dim}x{dim} matrix, got {m.shape}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ConstructionError(f"{name} is not symmetric")
    m = 0.5 * (m + m.T)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ConstructionError(f"{name} is not positive definite") from None
    return m, chol


def _responsibility_moments(logits: np.ndarray, means: np.ndarray):
    """Softmax weights over components plus the weighted mean and covariance of ``means``.

    ``logits`` has shape (n, K); subtracting the row max keeps exp() bounded.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    r = np.exp(shifted)
    r /= r.sum(axis=1, keepdims=True)
    mbar = r @ means
    return r, mbar


def _weighted_cov(r: np.ndarray, means: np.ndarray, mbar: np.ndarray) -> np.ndarray:
    dev = means[None, :, :] - mbar[:, None, :]  # n, K, d
    return np.einsum("nk,nki,nkj->nij", r, dev, dev)


class TargetMeasure:
    """Common interface of the three target families (immutable after construction)."""

    family: ClassVar[str]
    dim: int

    def log_density(self, x) -> np.ndarray | float:
        raise NotImplementedError

    def score(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample_from_variates(self, u: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Deterministic transform of uniforms ``u`` (n,) and normals ``z`` (n, d)."""
        raise UnsupportedOperation(f"exact sampling is not available for {self.family}")

    @property
    def base_precision(self) -> np.ndarray:
        """Precision of the quadratic part of -log density."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def _check_hessian_dim(self):
        if self.dim > MAX_HESSIAN_DIM:
            raise DomainError(f"Hessian evaluation is capped at d <= {MAX_HESSIAN_DIM}")


class Gaussian(TargetMeasure):
    family = "gaussian"

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        if self.mean.ndim != 1 or not np.all(np.isfinite(self.mean)):
            raise ConstructionError("mean must be a finite vector")
        self.dim = self.mean.shape[0]
        self.cov, self.chol = _spd(cov, "covariance", self.dim)
        self.precision = np.linalg.inv(self.cov)
        self.precision = 0.5 * (self.precision + self.precision.T)
        self._log_norm = 0.5 * (self.dim * LOG_2PI + 2.0 * np.log(np.diag(self.chol)).sum())
        for a in (self.mean, self.cov, self.chol, self.precision):
            a.setflags(write=False)

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        diff = pts - self.mean
        out = -0.5 * np.einsum("ni,ij,nj->n", diff, self.precision, diff) - self._log_norm
        return float(out[0]) if single else out

    def score(self, x):
        pts, single = _points(x, self.dim)
        out = -(pts - self.mean) @ self.precision
        return out[0] if single else out

    def hessian(self, x):
        self._check_hessian_dim()
        pts, single = _points(x, self.dim)
        out = np.broadcast_to(-self.precision, (pts.shape[0], self.dim, self.dim)).copy()
        return out[0] if single else out

    def sample_from_variates(self, u, z):
        return self.mean + np.asarray(z) @ self.chol.T

    @property
    def base_precision(self):
        return self.precision

    def describe(self):
        return {"family": self.family, "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class GaussianMixture(TargetMeasure):
    family = "gaussian_mixture"

    def __init__(self, means, cov, weights=None):
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if means.ndim != 2 or means.shape[0] == 0 or not np.all(np.isfinite(means)):
            raise ConstructionError("means must be a finite (K, d) array")
        self.means = means.copy()
        K, self.dim = means.shape
        if weights is None:
            weights = np.full(K, 1.0 / K)
        self.weights = np.asarray(weights, dtype=float).copy()
        if self.weights.shape != (K,):
            raise ConstructionError(f"expected {K} weights, got shape {self.weights.shape}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ConstructionError("weights must be nonnegative and sum to 1")
        self.cov, self.chol = _spd(cov, "covariance", self.dim)
        self.precision = np.linalg.inv(self.cov)
        self.precision = 0.5 * (self.precision + self.precision.T)
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(self.weights)
        self._log_norm = 0.5 * (self.dim * LOG_2PI + 2.0 * np.log(np.diag(self.chol)).sum())
        self._cum_weights = np.cumsum(self.weights)
        for a in (self.means, self.weights, self.cov, self.chol, self.precision, self.log_weights):
            a.setflags(write=False)

    def __repr__(self):
        return (f"GaussianMixture(means={self.means.tolist()}, cov={self.cov.tolist()}, "
                f"weights={self.weights.tolist()})")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def _component_logits(self, pts):
        diff = pts[:, None, :] - self.means[None, :, :]
        maha = np.einsum("nki,ij,nkj->nk", diff, self.precision, diff)
        return self.log_weights[None, :] - 0.5 * maha

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        out = logsumexp(self._component_logits(pts), axis=1) - self._log_norm
        return float(out[0]) if single else out

    def responsibilities(self, x) -> np.ndarray:
        pts, single = _points(x, self.dim)
        r, _ = _responsibility_moments(self._component_logits(pts), self.means)
        return r[0] if single else r

    def score(self, x):
        pts, single = _points(x, self.dim)
        _, mbar = _responsibility_moments(self._component_logits(pts), self.means)
        out = (mbar - pts) @ self.precision
        return out[0] if single else out

    def hessian(self, x):
        self._check_hessian_dim()
        pts, single = _points(x, self.dim)
        r, mbar = _responsibility_moments(self._component_logits(pts), self.means)
        C = _weighted_cov(r, self.means, mbar)
        P = self.precision
        out = -P + np.einsum("ij,njk,kl->nil", P, C, P)
        return out[0] if single else out

    def sample_from_variates(self, u, z):
        k = np.searchsorted(self._cum_weights, np.asarray(u), side="right")
        k = np.minimum(k, self.n_components - 1)
        return self.means[k] + np.asarray(z) @ self.chol.T

    @property
    def base_precision(self):
        return self.precision

    def describe(self):
        return {"family": self.family, "means": self.means.tolist(),
                "cov": self.cov.tolist(), "weights": self.weights.tolist()}


class PerturbedSLC(TargetMeasure):
    """mu ∝ exp(-1/2 x^T A x - H(x)) with H Lipschitz.

    H is either a log-sum-exp tilt (``tilt_means``/``tilt_weights``, the same
    form a shared-covariance mixture takes) or a user callable ``H`` with a
    declared Lipschitz constant ``lipschitz``.  A callable may come with an
    exact gradient ``grad_H``; otherwise central differences are used.
    """

    family = "perturbed_slc"
    LIPSCHITZ_PROBES = 64

    def __init__(self, precision, tilt_means=None, tilt_weights=None, *,
                 H: Callable | None = None, grad_H: Callable | None = None,
                 lipschitz: float | None = None, fd_step: float = 1e-5):
        self.A, self._chol_A = _spd(precision, "precision")
        self.dim = self.A.shape[0]
        self.alpha = float(np.linalg.eigvalsh(self.A)[0])
        self._fd_step = fd_step
        if (tilt_means is None) == (H is None):
            raise ConstructionError("give exactly one of tilt_means or H")
        if H is not None:
            if lipschitz is None or lipschitz < 0:
                raise ConstructionError("a callable perturbation needs a declared lipschitz >= 0")
            self._H, self._grad_H = H, grad_H
            self.tilt_means = None
            self.tilt_weights = None
            self.lipschitz = float(lipschitz)
            self._check_lipschitz()
        else:
            means = np.asarray(tilt_means, dtype=float)
            if means.ndim == 1:
                means = means[:, None]
            if means.shape[1] != self.dim:
                raise ConstructionError("tilt means dimension does not match precision")
            K = means.shape[0]
            w = np.full(K, 1.0 / K) if tilt_weights is None else np.asarray(tilt_weights, dtype=float)
            if w.shape != (K,) or np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ConstructionError("tilt weights must be nonnegative and sum to 1")
            self.tilt_means, self.tilt_weights = means, w
            with np.errstate(divide="ignore"):
                self._tilt_logw = np.log(w)
            self._tilt_offsets = -0.5 * np.einsum("ki,ij,kj->k", means, self.A, means)
            self._H = self._grad_H = None
            # |grad H| <= |A|_op max_k |m_k|
            self.lipschitz = float(np.linalg.eigvalsh(self.A)[-1] * np.linalg.norm(means, axis=1).max())

    def __repr__(self):
        kind = "callable" if self._H is not None else f"tilt K={len(self.tilt_means)}"
        return f"PerturbedSLC(dim={self.dim}, alpha={self.alpha:.6g}, L={self.lipschitz:.6g}, {kind})"

    def _tilt_logits(self, pts):
        return self._tilt_logw[None, :] + pts @ self.A @ self.tilt_means.T + self._tilt_offsets[None, :]

    def perturbation(self, x):
        pts, single = _points(x, self.dim)
        if self._H is not None:
            out = np.asarray(self._H(pts), dtype=float).reshape(pts.shape[0])
        else:
            out = logsumexp(self._tilt_logits(pts), axis=1)
        return float(out[0]) if single else out

    def _fd_grad(self, f, pts):
        h = self._fd_step
        g = np.empty_like(pts)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[:, i] = (np.asarray(f(pts + e)).reshape(-1) - np.asarray(f(pts - e)).reshape(-1)) / (2 * h)
        return g

    def perturbation_grad(self, x):
        pts, single = _points(x, self.dim)
        if self._H is not None:
            if self._grad_H is not None:
                out = np.asarray(self._grad_H(pts), dtype=float).reshape(pts.shape)
            else:
                out = self._fd_grad(self._H, pts)
        else:
            _, mbar = _responsibility_moments(self._tilt_logits(pts), self.tilt_means)
            out = mbar @ self.A
        return out[0] if single else out

    def _check_lipschitz(self):
        rng = SamplerSeed(0x5EED).generator()
        z = rng.standard_normal((self.LIPSCHITZ_PROBES, self.dim))
        probes = np.linalg.solve(self._chol_A.T, z.T).T * 3.0
        norms = np.linalg.norm(self._fd_grad(self._H, probes), axis=1)
        worst = float(norms.max())
        if worst > self.lipschitz * (1 + 1e-6):
            raise ConstructionError(
                f"declared Lipschitz constant {self.lipschitz} violated: "
                f"finite-difference gradient norm {worst:.6g} at a probe point")

    def log_density(self, x):
        pts, single = _points(x, self.dim)
        out = -0.5 * np.einsum("ni,ij,nj->n", pts, self.A, pts) - self.perturbation(pts)
        return float(out[0]) if single else out

    def score(self, x):
        pts, single = _points(x, self.dim)
        out = -pts @ self.A - self.perturbation_grad(pts)
        return out[0] if single else out

    def hessian(self, x):
        self._check_hessian_dim()
        pts, single = _points(x, self.dim)
        if self._H is None:
            r, mbar = _responsibility_moments(self._tilt_logits(pts), self.tilt_means)
            C = _weighted_cov(r, self.tilt_means, mbar)
            out = -self.A - np.einsum("ij,njk,kl->nil", self.A, C, self.A)
        else:
            h = self._fd_step
            out = np.empty((pts.shape[0], self.dim, self.dim))
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = h
                out[:, :, i] = (self.score(pts + e) - self.score(pts - e)) / (2 * h)
            out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out

    @property
    def base_precision(self):
        return self.A

    def describe(self):
        if self._H is not None:
            return {"family": self.family, "precision": self.A.tolist(),
                    "perturbation": "callable", "lipschitz": self.lipschitz}
        return {"family": self.family, "precision": self.A.tolist(),
                "tilt_means": self.tilt_means.tolist(), "tilt_weights": self.tilt_weights.tolist()}


def standard_gaussian(dim: int) -> Gaussian:
    return Gaussian(np.zeros(dim), np.eye(dim))


def log_density(m: TargetMeasure, x):
    return m.log_density(x)


def score(m: TargetMeasure, x):
    return m.score(x)


def hessian(m: TargetMeasure, x):
    return m.hessian(x)


@dataclass
class Draws:
    points: np.ndarray
    exact: bool
    method: str
    info: dict = field(default_factory=dict)


def draw_variates(seed: SamplerSeed | int, n: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform and Gaussian variates used by every exact sampler, in a fixed order."""
    rng = as_seed(seed).generator()
    u = rng.random(n)
    z = rng.standard_normal((n, dim))
    return u, z


def sample_tagged(m: TargetMeasure, seed: SamplerSeed | int, n: int, *,
                  mcmc: bool = False, **mcmc_kwargs) -> Draws:
    if isinstance(m, PerturbedSLC):
        if not mcmc:
            raise UnsupportedOperation(
                "perturbed_slc has no exact sampler; pass mcmc=True for approximate Langevin draws")
        return langevin_sample(m, seed, n, **mcmc_kwargs)
    u, z = draw_variates(seed, n, m.dim)
    return Draws(m.sample_from_variates(u, z), exact=True, method="exact")


def sample(m: TargetMeasure, seed: SamplerSeed | int, n: int, *, mcmc: bool = False) -> np.ndarray:
    return sample_tagged(m, seed, n, mcmc=mcmc).points


def langevin_sample(m: PerturbedSLC, seed: SamplerSeed | int, n: int, *,
                    burn_in: int = 1000, step: float | None = None) -> Draws:
    """Metropolis-adjusted Langevin, one independent chain per returned draw."""
    rng = as_seed(seed).generator()
    beta = float(np.linalg.eigvalsh(m.A)[-1])
    if step is None:
        step = 0.5 / (beta + m.lipschitz ** 2)
    x = np.linalg.solve(m._chol_A.T, rng.standard_normal((n, m.dim)).T).T
    lp, g = m.log_density(x), m.score(x)
    accepted = 0
    for _ in range(burn_in):
        prop = x + step * g + np.sqrt(2 * step) * rng.standard_normal(x.shape)
        lp_p, g_p = m.log_density(prop), m.score(prop)
        fwd = -np.sum((prop - x - step * g) ** 2, axis=1) / (4 * step)
        bwd = -np.sum((x - prop - step * g_p) ** 2, axis=1) / (4 * step)
        accept = np.log(rng.random(n)) < lp_p - lp + bwd - fwd
        x[accept], lp[accept], g[accept] = prop[accept], lp_p[accept], g_p[accept]
        accepted += int(accept.sum())
    return Draws(x, exact=False, method="mala",
                 info={"burn_in": burn_in, "step": step, "acceptance": accepted / (n * burn_in)})


def mixture_lipschitz_bound(m: GaussianMixture) -> tuple[float, float, float]:
    """(alpha, beta, L): extreme eigenvalues of Sigma^{-1} and beta * max_k |m_k|."""
    if not isinstance(m, GaussianMixture):
        raise UnsupportedOperation("mixture_lipschitz_bound needs a shared-covariance mixture")
    ev = np.linalg.eigvalsh(m.precision)
    alpha, beta = float(ev[0]), float(ev[-1])
    return alpha, beta, beta * float(np.linalg.norm(m.means, axis=1).max())
