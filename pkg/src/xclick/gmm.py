"""Full-covariance Gaussian mixtures over RGB, fitted with k-means++ and EM.

These mixtures are the appearance models behind the segmentation unaries:
one mixture for the object, one for the background, each scoring a pixel by
its negative log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmModel:
    """K weighted full-covariance Gaussians; weights sum to 1."""

    weights: np.ndarray        # (K,)
    means: np.ndarray          # (K, D)
    covariances: np.ndarray    # (K, D, D)
    em_log_likelihood: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        mu = np.array(self.means, dtype=np.float64)
        cov = np.array(self.covariances, dtype=np.float64)
        if w.ndim != 1 or mu.ndim != 2 or cov.ndim != 3:
            raise ValueError("bad mixture parameter shapes")
        if not (len(w) == len(mu) == len(cov)):
            raise ValueError("component counts disagree")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum()}, expected 1")
        for k, c in enumerate(cov):
            if not np.allclose(c, c.T):
                raise ValueError(f"covariance {k} is not symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"covariance {k} is not positive definite") from exc
        for name, arr in (("weights", w), ("means", mu), ("covariances", cov)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return len(self.weights)


def _component_log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    z = linalg.solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.einsum("ij,ij->j", z, z)
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (maha + log_det + d * _LOG_2PI)


def _weighted_log_densities(model_w, model_mu, model_cov, x: np.ndarray) -> np.ndarray:
    """log(w_k) + log N(x; mu_k, cov_k) as an (N, K) array; zero weights give -inf."""
    out = np.full((x.shape[0], len(model_w)), -np.inf)
    for k, w in enumerate(model_w):
        if w <= 0.0:
            continue
        out[:, k] = np.log(w) + _component_log_density(x, model_mu[k], model_cov[k])
    return out


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = np.max(a, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = np.log(np.sum(np.exp(a - peak), axis=axis)) + np.squeeze(peak, axis=axis)
    return out


def neg_log_likelihood(model: GmmModel, rgb: np.ndarray) -> np.ndarray | float:
    """-log p(rgb) under the mixture; finite everywhere thanks to the
    covariance floor applied at fit time. Accepts a single color or (N, D)."""
    x = np.asarray(rgb, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    nll = -_logsumexp(_weighted_log_densities(
        model.weights, model.means, model.covariances, x), axis=1)
    return float(nll[0]) if single else nll


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clip eigenvalues below the floor up to it.

    This is the maximizer of the expected complete log-likelihood over
    covariances with all eigenvalues >= floor, so EM stays monotone; a plain
    +floor*I ridge is not a constrained maximizer and can lower the
    likelihood near convergence.
    """
    cov = (cov + cov.T) / 2.0
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    clipped = (vecs * np.maximum(vals, floor)) @ vecs.T
    return (clipped + clipped.T) / 2.0


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; duplicates centers when fewer distinct points exist."""
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(x.shape[0])]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(x.shape[0]))
        else:
            idx = int(rng.choice(x.shape[0], p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def fit_gmm(
    pixels: np.ndarray,
    n_components: int = 5,
    cov_floor: float = 1e-3,
    em_iterations: int = 10,
    seed: int = 0,
) -> GmmModel:
    """Fit a mixture to (N, 3) RGB samples.

    k-means++ (fixed seed) picks initial means, a hard assignment gives
    initial weights and covariances, then EM runs for ``em_iterations``.
    Every M-step floors the covariance eigenvalues at ``cov_floor``, which
    keeps the model finite even when there are fewer distinct colors than
    components, and keeps the per-iteration total log-likelihood (recorded
    on the returned model) non-decreasing.
    """
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty (N, D) sample array")
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    n, d = x.shape
    rng = np.random.default_rng(seed)

    means = _kmeans_pp(x, n_components, rng)
    dists = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    assign = dists.argmin(axis=1)
    weights = np.bincount(assign, minlength=n_components) / n
    covs = np.empty((n_components, d, d))
    for k in range(n_components):
        members = x[assign == k]
        if members.shape[0] > 0:
            means[k] = members.mean(axis=0)
            diff = members - means[k]
            covs[k] = _floor_covariance(diff.T @ diff / members.shape[0], cov_floor)
        else:
            covs[k] = cov_floor * np.eye(d)

    history = []
    for _ in range(em_iterations):
        # E-step
        log_joint = _weighted_log_densities(weights, means, covs, x)
        log_norm = _logsumexp(log_joint, axis=1)
        history.append(float(log_norm.sum()))
        resp = np.exp(log_joint - log_norm[:, None])
        # M-step
        nk = resp.sum(axis=0)
        weights = nk / n
        for k in range(n_components):
            if nk[k] < 1e-12:
                continue  # dead component: keep its parameters, weight ~ 0
            means[k] = resp[:, k] @ x / nk[k]
            diff = x - means[k]
            covs[k] = _floor_covariance((resp[:, k] * diff.T) @ diff / nk[k], cov_floor)
    weights = weights / weights.sum()

    return GmmModel(
        weights=weights, means=means, covariances=covs,
        em_log_likelihood=tuple(history),
    )
