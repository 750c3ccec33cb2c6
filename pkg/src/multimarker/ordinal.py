"""Cauchit-link ordinal weights and the maximum-likelihood fit that seeds them.

The cumulative probability of falling at or below level d is

    F_d(y) = (arctan((gamma_d + eta . y) / 2) + pi/2) / pi

with gamma_0 = -inf and gamma_D = +inf, and the component weights are the
successive differences of F. Class indices are 0-based throughout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

COEF_CAP = 50.0
_MIN_PROB = 1e-300


class OrdinalDataError(ValueError):
    pass


@dataclass
class CauchitModel:
    gamma: np.ndarray
    eta: np.ndarray
    converged: bool = True
    n_iter: int = 0
    loglik: float = float("nan")

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if np.any(np.diff(self.gamma) <= 0):
            raise ValueError(f"cutpoints must be strictly increasing: {self.gamma}")

    @property
    def n_levels(self) -> int:
        return self.gamma.size + 1


def cauchit_cumulative(gamma_d: float, eta, y) -> float:
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    if eta.shape != y.shape:
        raise ValueError(f"eta has shape {eta.shape} but y has shape {y.shape}")
    return 0.5 + math.atan(0.5 * (gamma_d + float(eta @ y))) / math.pi


def cumulative_matrix(gamma: np.ndarray, lin: np.ndarray) -> np.ndarray:
    """n x (D+1) matrix of F_0..F_D for linear predictors ``lin`` (length n)."""
    n = lin.shape[0]
    out = np.empty((n, gamma.size + 2))
    out[:, 0] = 0.0
    out[:, -1] = 1.0
    out[:, 1:-1] = 0.5 + np.arctan(0.5 * (gamma[None, :] + lin[:, None])) / np.pi
    return out


def weights_matrix(gamma: np.ndarray, eta: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-simplex matrix of component weights for each row of Y."""
    cum = cumulative_matrix(gamma, Y @ eta)
    return np.diff(cum, axis=1)


def component_weights(model: CauchitModel, y, D: int | None = None) -> np.ndarray:
    if D is not None and D != model.n_levels:
        raise ValueError(f"model has {model.n_levels} levels, asked for {D}")
    y = np.asarray(y, dtype=float)
    if y.shape != model.eta.shape:
        raise ValueError(f"y has shape {y.shape}, eta has shape {model.eta.shape}")
    return weights_matrix(model.gamma, model.eta, y[None, :])[0]


def ordinal_loglik(gamma: np.ndarray, eta: np.ndarray, Y: np.ndarray, labels: np.ndarray) -> float:
    """sum_i log pi_{i, c_i}; -inf if gamma is not strictly increasing."""
    if gamma.size > 1 and np.any(np.diff(gamma) <= 0):
        return -math.inf
    lin = Y @ eta
    return _loglik_lin(gamma, lin, labels)


def _loglik_lin(gamma, lin, labels):
    hi = _cum_at(gamma, lin, labels + 1)
    lo = _cum_at(gamma, lin, labels)
    p = hi - lo
    if np.any(p <= 0):
        p = np.maximum(p, _MIN_PROB)
    return float(np.log(p).sum())


def _cum_at(gamma, lin, k):
    """F_k(lin) elementwise for integer level indices k in 0..D."""
    ext = np.concatenate(([-np.inf], gamma, [np.inf]))
    return 0.5 + np.arctan(0.5 * (ext[k] + lin)) / np.pi


# --- maximum likelihood -----------------------------------------------------

def _unpack(theta: np.ndarray, n_cut: int):
    """Unconstrained vector -> (increasing cutpoints, eta)."""
    first = theta[0]
    steps = np.exp(theta[1:n_cut])
    gamma = first + np.concatenate(([0.0], np.cumsum(steps)))
    return gamma, theta[n_cut:]


def _pack(gamma: np.ndarray, eta: np.ndarray) -> np.ndarray:
    return np.concatenate(([gamma[0]], np.log(np.diff(gamma)), eta))


def _negloglik_and_grad(theta, Z, labels, n_cut):
    gamma, eta = _unpack(theta, n_cut)
    lin = Z @ eta
    ext = np.concatenate(([-np.inf], gamma, [np.inf]))
    u_hi = 0.5 * (ext[labels + 1] + lin)
    u_lo = 0.5 * (ext[labels] + lin)
    F_hi = 0.5 + np.arctan(u_hi) / np.pi
    F_lo = 0.5 + np.arctan(u_lo) / np.pi
    p = np.maximum(F_hi - F_lo, _MIN_PROB)
    nll = -np.log(p).sum()
    # dF/du = 1 / (pi (1 + u^2)); u = (gamma + lin)/2, so d/dgamma and d/dlin carry 1/2
    with np.errstate(over="ignore"):
        f_hi = np.where(np.isfinite(u_hi), 0.5 / (np.pi * (1.0 + u_hi**2)), 0.0)
        f_lo = np.where(np.isfinite(u_lo), 0.5 / (np.pi * (1.0 + u_lo**2)), 0.0)
    w = 1.0 / p
    g_lin = -(f_hi - f_lo) * w
    g_eta = Z.T @ g_lin
    g_gamma = np.zeros(n_cut)
    # level labels+1 is an interior cutpoint when 1 <= labels+1 <= n_cut
    hi_idx = labels  # gamma index of the upper cutpoint (0-based)
    lo_idx = labels - 1
    m_hi = hi_idx < n_cut
    m_lo = lo_idx >= 0
    np.add.at(g_gamma, hi_idx[m_hi], -(f_hi * w)[m_hi])
    np.add.at(g_gamma, lo_idx[m_lo], (f_lo * w)[m_lo])
    # chain rule through the cumulative-exp reparameterization
    g_theta_cut = np.empty(n_cut)
    g_theta_cut[0] = g_gamma.sum()
    if n_cut > 1:
        tail_sums = np.cumsum(g_gamma[::-1])[::-1]
        g_theta_cut[1:] = tail_sums[1:] * np.exp(theta[1:n_cut])
    return nll, np.concatenate((g_theta_cut, g_eta))


def fit_ordinal_cauchit_mle(
    labels,
    Y,
    n_levels: int | None = None,
    *,
    max_iter: int = 500,
    gtol: float = 1e-6,
    allow_empty: bool = False,
) -> CauchitModel:
    """Maximum-likelihood proportional-odds Cauchit regression.

    ``labels`` are 0-based level indices. Biomarker columns are standardized
    before optimization and the coefficients mapped back, so the returned
    ``eta`` acts on raw ``Y``. Estimates are boxed to |.| <= 50 on the
    standardized scale, which keeps separable data finite.

    Empty levels have no finite estimate; with ``allow_empty`` the fit goes
    ahead and their cutpoints end up pinned at the box (adjacent cutpoints
    nearly coincide) instead of raising.
    """
    labels = np.asarray(labels, dtype=int)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    D = int(n_levels if n_levels is not None else labels.max() + 1)
    if D < 2:
        raise OrdinalDataError("ordinal regression needs at least two levels")
    counts = np.bincount(labels, minlength=D)
    if labels.min() < 0 or counts.size > D:
        raise OrdinalDataError(f"labels must lie in 0..{D - 1}")
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        if not allow_empty or np.count_nonzero(counts) < 2:
            raise OrdinalDataError(f"levels {empty} have no observations")
        logger.warning("levels %s have no observations; their cutpoints collapse", empty)

    center = Y.mean(axis=0)
    scale = Y.std(axis=0, ddof=1)
    scale[~(scale > 0)] = 1.0
    Z = (Y - center) / scale
    n_cut = D - 1

    # cutpoints start at the Cauchit quantiles of the empirical cumulative shares
    # half a pseudo-count per level keeps the start finite and ordered when levels are empty
    cum_share = np.cumsum(counts + 0.5)[:-1] / (labels.size + 0.5 * D)
    gamma0 = 2.0 * np.tan(np.pi * (cum_share - 0.5))
    theta0 = _pack(gamma0, np.zeros(Y.shape[1]))
    bounds = [(-COEF_CAP, COEF_CAP)] + [(-30.0, math.log(2 * COEF_CAP))] * (n_cut - 1)
    bounds += [(-COEF_CAP, COEF_CAP)] * Y.shape[1]
    res = minimize(
        _negloglik_and_grad,
        theta0,
        args=(Z, labels, n_cut),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15},
    )
    gamma_s, eta_s = _unpack(res.x, n_cut)
    _, grad = _negloglik_and_grad(res.x, Z, labels, n_cut)
    # components pinned at a bound are allowed a nonzero gradient
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    free = (res.x > lo + 1e-9) & (res.x < hi - 1e-9)
    converged = bool(res.success) or bool(np.max(np.abs(grad[free]), initial=0.0) < gtol)
    if not converged:
        logger.warning("ordinal MLE stopped after %d iterations without converging", res.nit)

    eta = eta_s / scale
    gamma = gamma_s - float(eta_s @ (center / scale))
    return CauchitModel(
        gamma=gamma,
        eta=eta,
        converged=converged,
        n_iter=int(res.nit),
        loglik=-float(res.fun),
    )


def predict_level(model: CauchitModel, Y) -> np.ndarray:
    """Argmax-weight level per row (0-based)."""
    W = weights_matrix(model.gamma, model.eta, np.atleast_2d(np.asarray(Y, dtype=float)))
    return W.argmax(axis=1)
