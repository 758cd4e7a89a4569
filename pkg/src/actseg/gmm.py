"""Adaptive category discovery over embedding vectors.

Full-covariance Gaussian clusters are fitted by EM for each candidate
cluster count, and the count is chosen at the first local minimum of the
BIC curve. Means, covariances and mixing weights are all free parameters;
covariances get a small diagonal floor after every M-step because
unit-norm embeddings live on a sphere and raw sample covariances are
rank-deficient.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import kernels
from .errors import DegenerateCluster, InsufficientData, SingularCovariance

logger = logging.getLogger(__name__)


@dataclass
class EMConfig:
    max_iter: int = 200
    tol: float = 1e-6  # relative log-likelihood improvement
    n_restarts: int = 5
    reg: float = 1e-6  # diagonal floor added after every M-step
    rng_seed: int = 0
    max_clusters: int = 12


@dataclass(eq=False)
class GaussianCluster:
    mean: np.ndarray
    cov: np.ndarray
    weight: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        if self.cov.shape != (self.mean.shape[0], self.mean.shape[0]):
            raise ValueError("covariance shape does not match mean dimension")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("mixing weight must be in (0, 1]")


def _cholesky(cov: np.ndarray, reg: float) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        try:
            return np.linalg.cholesky(cov + reg * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(
                "covariance not positive definite after regularization"
            ) from exc


@dataclass(eq=False)
class CategoryModel:
    clusters: List[GaussianCluster]
    fit_stats: Dict[str, object] = field(default_factory=dict)
    risk_bound: Optional[float] = None
    version: int = 1
    _chols: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("a category model needs at least one cluster")
        total = sum(c.weight for c in self.clusters)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixing weights sum to {total}, expected 1")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def dim(self) -> int:
        return self.clusters[0].mean.shape[0]

    def cholesky_factors(self, reg: float = 1e-6) -> List[np.ndarray]:
        if self._chols is None:
            self._chols = [_cholesky(c.cov, reg) for c in self.clusters]
        return self._chols

    def log_densities(self, Z: np.ndarray) -> np.ndarray:
        """Unweighted per-cluster Gaussian log densities, shape (N, m)."""
        Z = np.ascontiguousarray(np.atleast_2d(np.asarray(Z, dtype=np.float64)))
        chols = self.cholesky_factors()
        out = np.empty((Z.shape[0], self.n_clusters), dtype=np.float64)
        for k, (c, L) in enumerate(zip(self.clusters, chols)):
            out[:, k] = kernels.gaussian_logpdf(Z, c.mean, L)
        return out


def cluster_likelihood(z: np.ndarray, cluster: GaussianCluster) -> float:
    """Multivariate Gaussian density of one point (a density, may exceed 1)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != cluster.mean.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {cluster.mean.shape}")
    L = _cholesky(cluster.cov, 1e-6)
    logp = kernels.gaussian_logpdf(np.ascontiguousarray(z[None, :]), cluster.mean, L)
    return float(np.exp(logp[0]))


def mixture_log_likelihood(model: CategoryModel, Z: np.ndarray) -> float:
    """Sum over points of log sum_k weight_k * density_k, in log space."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] == 0:
        raise ValueError("Z must be non-empty")
    logp = model.log_densities(Z)
    logw = np.log(np.array([c.weight for c in model.clusters]))
    return float(_logsumexp(logp + logw[None, :], axis=1).sum())


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _kmeanspp_seeds(Z: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = Z.shape[0]
    seeds = [Z[rng.integers(n)]]
    d2 = ((Z - seeds[0]) ** 2).sum(axis=1)
    for _ in range(1, m):
        total = d2.sum()
        if total <= 0:
            seeds.append(Z[rng.integers(n)])
            continue
        probs = d2 / total
        idx = rng.choice(n, p=probs)
        seeds.append(Z[idx])
        d2 = np.minimum(d2, ((Z - seeds[-1]) ** 2).sum(axis=1))
    return np.stack(seeds)


class _RestartFailed(Exception):
    pass


def _em_single(Z: np.ndarray, m: int, cfg: EMConfig, rng: np.random.Generator):
    n, d = Z.shape
    means = _kmeanspp_seeds(Z, m, rng)
    base_cov = np.cov(Z.T, bias=True).reshape(d, d) + cfg.reg * np.eye(d)
    covs = np.repeat(base_cov[None, :, :], m, axis=0)
    weights = np.full(m, 1.0 / m)

    def e_step():
        logp = np.empty((n, m))
        for k in range(m):
            try:
                L = _cholesky(covs[k], cfg.reg)
            except SingularCovariance as exc:
                raise _RestartFailed(str(exc)) from exc
            logp[:, k] = kernels.gaussian_logpdf(Z, means[k], L)
        joint = logp + np.log(weights)[None, :]
        norm = _logsumexp(joint, axis=1)
        return float(norm.sum()), np.exp(joint - norm[:, None])

    trace: List[float] = []
    prev_ll = -np.inf
    resp = None
    converged = False
    for _ in range(cfg.max_iter):
        ll, resp = e_step()
        trace.append(ll)
        if prev_ll > -np.inf and (ll - prev_ll) / max(1.0, abs(prev_ll)) < cfg.tol:
            converged = True
            break
        prev_ll = ll
        # M-step
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-10):
            raise _RestartFailed(f"cluster collapsed (occupancy {nk.min():.3g})")
        weights = nk / n
        means = (resp.T @ Z) / nk[:, None]
        for k in range(m):
            diff = Z - means[k]
            covs[k] = (resp[:, k][:, None] * diff).T @ diff / nk[k]
            covs[k] += cfg.reg * np.eye(d)
    if not converged:
        # evaluate the parameters produced by the last M-step
        ll, resp = e_step()
        trace.append(ll)
    nk_final = resp.sum(axis=0)
    return means, covs, weights, trace, nk_final


def fit_em(Z: np.ndarray, m: int, cfg: Optional[EMConfig] = None) -> CategoryModel:
    """Best-of-restarts EM fit with m full-covariance clusters."""
    cfg = cfg or EMConfig()
    Z = np.ascontiguousarray(np.atleast_2d(np.asarray(Z, dtype=np.float64)))
    n, d = Z.shape
    if m < 1:
        raise ValueError("cluster count must be >= 1")
    if n < m * (d + 1):
        raise InsufficientData(
            f"need at least {m * (d + 1)} points for {m} clusters in {d} dims, got {n}"
        )
    rng = np.random.default_rng(cfg.rng_seed)
    best = None
    failures = []
    for restart in range(cfg.n_restarts):
        try:
            means, covs, weights, trace, nk = _em_single(Z, m, cfg, rng)
        except _RestartFailed as exc:
            failures.append(str(exc))
            continue
        if best is None or trace[-1] > best[3][-1]:
            best = (means, covs, weights, trace, nk, restart)
    if best is None:
        raise DegenerateCluster(
            f"all {cfg.n_restarts} restarts degenerated: {failures[-1]}"
        )
    means, covs, weights, trace, nk, restart = best
    weights = weights / weights.sum()
    clusters = [GaussianCluster(means[k], covs[k], float(weights[k])) for k in range(m)]
    model = CategoryModel(
        clusters=clusters,
        fit_stats={
            "log_likelihood": trace[-1],
            "em_iterations": len(trace),
            "ll_trace": trace,
            "restart": restart,
            "occupancy": nk.tolist(),
            "n_points": n,
        },
    )
    model.fit_stats["bic"] = bic(model, Z)
    return model


def free_parameter_count(m: int, d: int) -> int:
    """Means + symmetric covariances + independent mixing weights."""
    return m * (d + d * (d + 1) // 2) + (m - 1)


def bic(model: CategoryModel, Z: np.ndarray) -> float:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    u = free_parameter_count(model.n_clusters, model.dim)
    return -2.0 * mixture_log_likelihood(model, Z) + u * math.log(Z.shape[0])


FitFn = Callable[[np.ndarray, int, EMConfig], CategoryModel]


def select_model(Z: np.ndarray, m_max: Optional[int] = None,
                 cfg: Optional[EMConfig] = None,
                 fit_fn: Optional[FitFn] = None) -> CategoryModel:
    """Scan cluster counts 2..m_max and keep the first local BIC minimum.

    A count m is selected when its BIC improves on m-1 (vacuous at the scan
    start) and does not exceed the BIC at m+1. A monotone decreasing curve
    falls back to the largest fitted count, with a warning.
    """
    cfg = cfg or EMConfig()
    fit_fn = fit_fn or fit_em
    m_max = m_max or cfg.max_clusters
    Z = np.ascontiguousarray(np.atleast_2d(np.asarray(Z, dtype=np.float64)))
    n, d = Z.shape
    if n < 2 * (d + 1):
        raise InsufficientData(
            f"need at least {2 * (d + 1)} points to consider 2 clusters, got {n}"
        )
    models: List[CategoryModel] = []
    ms: List[int] = []
    for m in range(2, m_max + 1):
        try:
            models.append(fit_fn(Z, m, cfg))
        except (InsufficientData, DegenerateCluster) as exc:
            logger.warning("cluster scan truncated at m=%d (%s)", m - 1, exc)
            break
        ms.append(m)
    bics = [bic(mod, Z) for mod in models]
    chosen_idx = None
    for i in range(len(ms) - 1):
        left_ok = i == 0 or bics[i] < bics[i - 1]
        if left_ok and bics[i] <= bics[i + 1]:
            chosen_idx = i
            break
    if chosen_idx is None:
        chosen_idx = len(ms) - 1
        if len(ms) > 1:
            logger.warning(
                "BIC decreased monotonically over m=2..%d; keeping m=%d",
                ms[-1], ms[-1],
            )
    chosen = models[chosen_idx]
    chosen.fit_stats["bic_curve"] = {m: b for m, b in zip(ms, bics)}
    chosen.fit_stats["scanned_counts"] = ms
    return chosen


def category_model_path(directory, version: int) -> Path:
    return Path(directory) / f"categories_v{version}.gmm"


def save_category_model(model: CategoryModel, path) -> None:
    meta = {
        "fit_stats": _jsonable(model.fit_stats),
        "risk_bound": model.risk_bound,
        "version": model.version,
    }
    with open(path, "wb") as f:
        np.savez(
            f,
            means=np.stack([c.mean for c in model.clusters]),
            covs=np.stack([c.cov for c in model.clusters]),
            weights=np.array([c.weight for c in model.clusters]),
            meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        )


def load_category_model(path) -> CategoryModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        clusters = [
            GaussianCluster(mean, cov, float(w))
            for mean, cov, w in zip(data["means"], data["covs"], data["weights"])
        ]
    model = CategoryModel(clusters=clusters, fit_stats=meta["fit_stats"],
                          version=int(meta["version"]))
    model.risk_bound = meta["risk_bound"]
    return model


def _jsonable(stats: dict) -> dict:
    out = {}
    for key, value in stats.items():
        if isinstance(value, dict):
            out[key] = {str(k): v for k, v in value.items()}
        elif isinstance(value, (np.floating, np.integer)):
            out[key] = value.item()
        else:
            out[key] = value
    return out
