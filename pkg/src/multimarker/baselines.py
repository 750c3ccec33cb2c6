"""Comparator methods regressing intake directly on the biomarkers.

* Bayesian linear regression with a conjugate normal-inverse-gamma prior on
  (intercept, slopes) and the noise variance; predictions use the Student-t
  posterior predictive.
* PLS1 regression by NIPALS on autoscaled biomarkers; intervals come from
  the spread of predictions made by 10 fold-wise refits.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .model import DataError, Dataset, UsageError

logger = logging.getLogger(__name__)

BLR_PRIOR_SCALE = 1e4
PLS_COMPONENTS = 2
PLS_FOLDS = 10


def _design(Y: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(Y.shape[0]), Y])


def _require_doses(data: Dataset) -> np.ndarray:
    if not data.has_doses:
        raise UsageError("baseline fitting needs consumed quantities")
    return np.asarray(data.x, dtype=float)


@dataclass
class BlrModel:
    mean: np.ndarray
    cov_unscaled: np.ndarray
    a: float
    b: float
    prior_scale: float

    @property
    def noise_scale2(self) -> float:
        """Point scale of the predictive t (b/a)."""
        return self.b / self.a

    @property
    def dof(self) -> float:
        return 2.0 * self.a


def fit_blr(data: Dataset, prior_scale: float = BLR_PRIOR_SCALE, a0: float = 1.0, b0: float = 1.0) -> BlrModel:
    """Conjugate posterior for dose = [1, y] @ w + e, w ~ N(0, s2 * prior_scale * I)."""
    if not prior_scale > 0:
        raise ValueError("prior_scale must be positive")
    x = _require_doses(data)
    A = _design(data.Y)
    n, k = A.shape
    if n <= k:
        logger.warning("BLR with n=%d <= %d coefficients relies on the prior", n, k)
    prec = A.T @ A + np.eye(k) / prior_scale
    chol = np.linalg.cholesky(prec)
    rhs = A.T @ x
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    a = a0 + n / 2.0
    b = b0 + 0.5 * max(float(x @ x - mean @ prec @ mean), 0.0)
    return BlrModel(mean=mean, cov_unscaled=cov, a=a, b=b, prior_scale=prior_scale)


def predict_blr(model: BlrModel, Y_star, level: float = 0.95):
    """Per-row (median, lower, upper) from the Student-t posterior predictive."""
    Y_star = np.atleast_2d(np.asarray(Y_star, dtype=float))
    if Y_star.shape[1] != model.mean.size - 1:
        raise DataError(f"model has {model.mean.size - 1} biomarkers, data has {Y_star.shape[1]}")
    A = _design(Y_star)
    loc = A @ model.mean
    lev = np.einsum("ij,jk,ik->i", A, model.cov_unscaled, A)
    scale = np.sqrt(model.noise_scale2 * (1.0 + lev))
    half = sps.t.ppf(0.5 + level / 2.0, model.dof) * scale
    return loc, loc - half, loc + half


@dataclass
class PlsModel:
    n_components: int
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    weights: np.ndarray
    loadings: np.ndarray
    scores: np.ndarray
    y_loadings: np.ndarray
    coef: np.ndarray
    fold_models: list = field(default_factory=list, repr=False)

    def point(self, Y_star: np.ndarray) -> np.ndarray:
        return self.y_mean + ((Y_star - self.x_mean) / self.x_scale) @ self.coef


def _nipals(Xs: np.ndarray, yc: np.ndarray, k: int):
    n, P = Xs.shape
    E = Xs.copy()
    f = yc.copy()
    W = np.zeros((P, k))
    Pl = np.zeros((P, k))
    T = np.zeros((n, k))
    q = np.zeros(k)
    for a in range(k):
        w = E.T @ f
        norm = np.linalg.norm(w)
        if norm == 0:
            # nothing left to explain; remaining components stay zero
            W, Pl, T, q = W[:, :a], Pl[:, :a], T[:, :a], q[:a]
            break
        w /= norm
        t = E @ w
        tt = t @ t
        p = E.T @ t / tt
        q[a] = f @ t / tt
        E -= np.outer(t, p)
        f = f - q[a] * t
        W[:, a], Pl[:, a], T[:, a] = w, p, t
    if W.shape[1]:
        coef = W @ np.linalg.solve(Pl.T @ W, q)
    else:
        coef = np.zeros(P)
    return W, Pl, T, q, coef


def _fit_pls_core(Y: np.ndarray, x: np.ndarray, k: int) -> PlsModel:
    x_mean = Y.mean(axis=0)
    x_scale = Y.std(axis=0, ddof=1)
    x_scale[~(x_scale > 0)] = 1.0
    Xs = (Y - x_mean) / x_scale
    y_mean = float(x.mean())
    W, Pl, T, q, coef = _nipals(Xs, x - y_mean, k)
    return PlsModel(
        n_components=k,
        x_mean=x_mean,
        x_scale=x_scale,
        y_mean=y_mean,
        weights=W,
        loadings=Pl,
        scores=T,
        y_loadings=q,
        coef=coef,
    )


def fit_pls(data: Dataset, n_components: int = PLS_COMPONENTS, n_folds: int = PLS_FOLDS) -> PlsModel:
    """NIPALS PLS1 of dose on autoscaled biomarkers, plus fold-wise refits.

    Fold ``f`` leaves out rows ``i`` with ``i % n_folds == f``.
    """
    x = _require_doses(data)
    if not 1 <= n_components <= data.P:
        raise ValueError(f"n_components must lie in 1..{data.P}, got {n_components}")
    model = _fit_pls_core(data.Y, x, n_components)
    folds = min(n_folds, data.n)
    idx = np.arange(data.n)
    for f in range(folds):
        keep = idx % folds != f
        if keep.sum() > 1:
            model.fold_models.append(_fit_pls_core(data.Y[keep], x[keep], n_components))
    return model


def predict_pls(model: PlsModel, Y_star, level: float = 0.95):
    """Per-row (point prediction, lower, upper); bounds span the fold refits."""
    Y_star = np.atleast_2d(np.asarray(Y_star, dtype=float))
    if Y_star.shape[1] != model.x_mean.size:
        raise DataError(f"model has {model.x_mean.size} biomarkers, data has {Y_star.shape[1]}")
    point = model.point(Y_star)
    if not model.fold_models:
        return point, point.copy(), point.copy()
    spread = np.array([m.point(Y_star) for m in model.fold_models])
    lo = (1.0 - level) / 2.0
    q = np.quantile(spread, [lo, 1.0 - lo], axis=0)
    return point, np.minimum(q[0], point), np.maximum(q[1], point)
