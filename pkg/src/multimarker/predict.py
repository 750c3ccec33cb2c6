"""Posterior predictive inference of intake for biomarker-only observations.

The default ("replay") mode walks the stored training draws: for each draw,
a new observation's component is chosen by the same argmax rule the sampler
uses (evaluated at the previous predictive draw), and an intake is drawn from
that component's normal-normal combination of the biomarker evidence and the
food-quantity prior. The "conditional" mode instead continues the sampler
with the new rows appended, so parameters also see the new biomarkers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataError, Dataset, ModelState, UsageError
from .ordinal import weights_matrix
from .sampler import PosteriorChain, SamplerConfig, sweep, _log_component_density
from .stats import ParameterError, RngStream, truncnorm_lower_rvs

CI_LEVEL = 0.95


@dataclass(frozen=True)
class PredictiveMoments:
    mu_z: float
    sigma_z2: float


@dataclass
class PredictiveResult:
    draws: np.ndarray
    median: float
    ci95: tuple[float, float]
    component_freq: np.ndarray
    component_draws: np.ndarray | None = None


def predictive_moments(y_star, state: ModelState) -> PredictiveMoments:
    """Biomarker-only moments of a new intake for one parameter draw."""
    y_star = np.asarray(y_star, dtype=float)
    if y_star.shape != state.beta.shape:
        raise DataError(f"expected {state.beta.size} biomarkers, got {y_star.shape}")
    info = float(np.sum(state.beta**2 / state.sigma2))
    if not info > 0:
        raise ParameterError("all slopes are zero: biomarkers carry no intake information")
    sigma_z2 = 1.0 / info
    mu_z = sigma_z2 * float(np.sum(state.beta * (y_star - state.alpha) / state.sigma2))
    return PredictiveMoments(mu_z=mu_z, sigma_z2=sigma_z2)


def _batch_moments(Y: np.ndarray, alpha, beta, sigma2):
    w = beta / sigma2
    info = float(beta @ w)
    if info > 0:
        sigma_z2 = 1.0 / info
        return sigma_z2 * ((Y - alpha) @ w), sigma_z2
    return np.zeros(Y.shape[0]), np.inf


def component_parameters(mu_z, sigma_z2, X_d, theta2_d):
    """Mean and variance of a component's intake given biomarker evidence.

    ``sigma_z2 = inf`` (no biomarker information) returns the component prior.
    """
    mu_z = np.asarray(mu_z, dtype=float)
    if np.isinf(sigma_z2):
        return np.broadcast_to(np.asarray(X_d, dtype=float), mu_z.shape).copy(), np.broadcast_to(
            np.asarray(theta2_d, dtype=float), mu_z.shape
        ).copy()
    mean = (mu_z * theta2_d + X_d * sigma_z2) / (sigma_z2 + theta2_d)
    var = 1.0 / (1.0 / theta2_d + 1.0 / sigma_z2)
    return mean, var


def summarize_predictive(draws, level: float = CI_LEVEL, D: int | None = None, components=None):
    """Median, central interval (linear interpolation) and component frequencies."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise ValueError("no draws to summarize")
    lo = (1.0 - level) / 2.0
    q = np.quantile(draws, [0.5, lo, 1.0 - lo])
    freq = None
    if components is not None:
        components = np.asarray(components)
        D = D if D is not None else int(components.max()) + 1
        freq = np.bincount(components, minlength=D) / components.size
    return float(q[0]), (float(q[1]), float(q[2])), freq


def _check_batch(Y_star, chain: PosteriorChain) -> np.ndarray:
    Y_star = np.atleast_2d(np.asarray(Y_star, dtype=float))
    if len(chain) == 0:
        raise UsageError("chain holds no retained draws")
    if Y_star.shape[1] != chain.P:
        raise DataError(f"chain was fitted on {chain.P} biomarkers, data has {Y_star.shape[1]}")
    if np.any(~np.isfinite(Y_star)):
        raise DataError("non-finite biomarker values in prediction data")
    return Y_star


def _results(Z: np.ndarray, C: np.ndarray, D: int, keep_draws: bool) -> list[PredictiveResult]:
    out = []
    for j in range(Z.shape[1]):
        med, ci, freq = summarize_predictive(Z[:, j], D=D, components=C[:, j])
        out.append(
            PredictiveResult(
                draws=Z[:, j].copy() if keep_draws else np.empty(0),
                median=med,
                ci95=ci,
                component_freq=freq,
                component_draws=C[:, j].copy() if keep_draws else None,
            )
        )
    return out


def sample_predictive(
    Y_star,
    chain: PosteriorChain,
    rng: RngStream,
    *,
    mode: str = "replay",
    train: Dataset | None = None,
    scaled: bool = False,
    keep_draws: bool = True,
) -> list[PredictiveResult]:
    """One intake draw per retained chain state for every row of ``Y_star``.

    ``Y_star`` is on the raw scale of the training data; the chain's stored
    column transform is applied unless ``scaled`` is set.
    """
    Y_star = _check_batch(Y_star, chain)
    if chain.scaler is not None and not scaled:
        Y_star = chain.scaler.transform(Y_star)
    if mode == "replay":
        Z, C = _replay(Y_star, chain, rng)
    elif mode == "conditional":
        if train is None:
            raise UsageError("conditional prediction needs the training dataset")
        Z, C = _conditional(Y_star, chain, train, rng)
    else:
        raise UsageError(f"unknown prediction mode {mode!r}")
    return _results(Z, C, chain.D, keep_draws)


def _replay(Y: np.ndarray, chain: PosteriorChain, rng: RngStream):
    d = chain.draws
    X = chain.X
    K, m = len(chain), Y.shape[0]
    Z = np.empty((K, m))
    C = np.empty((K, m), dtype=np.int64)
    z_prev = None
    for k in range(K):
        pi = weights_matrix(d["gamma"][k], d["eta"][k], Y)
        theta2 = d["theta2"][k]
        if z_prev is None:
            z_prev = pi @ X
        with np.errstate(divide="ignore"):
            score = np.log(pi) + _log_component_density(z_prev, X, theta2)
        c = np.argmax(score, axis=1)
        mu_z, sigma_z2 = _batch_moments(Y, d["alpha"][k], d["beta"][k], d["sigma2"][k])
        mean, var = component_parameters(mu_z, sigma_z2, X[c], theta2[c])
        z = truncnorm_lower_rvs(mean, np.sqrt(var), 0.0, rng)
        Z[k] = z
        C[k] = c
        z_prev = z
    return Z, C


def _conditional(Y_new: np.ndarray, chain: PosteriorChain, train: Dataset, rng: RngStream):
    """Continue the sampler with the new rows appended to the training data."""
    if chain.final_state is None:
        raise UsageError("conditional prediction needs the chain's final state")
    Y_train = train.Y if chain.scaler is None else chain.scaler.transform(train.Y)
    n = Y_train.shape[0]
    m = Y_new.shape[0]
    aug = Dataset(Y=np.vstack([Y_train, Y_new]), X=chain.X)
    state = chain.final_state.copy()
    if state.z.size != n:
        raise DataError(f"chain was fitted on {state.z.size} rows, training data has {n}")
    pi_new = weights_matrix(state.gamma, state.eta, Y_new)
    z0 = pi_new @ chain.X
    with np.errstate(divide="ignore"):
        c0 = np.argmax(np.log(pi_new) + _log_component_density(z0, chain.X, state.theta2), axis=1)
    state.z = np.concatenate([state.z, z0])
    state.c = np.concatenate([state.c, c0])
    cfg: SamplerConfig = chain.config
    steps_g = chain.diagnostics.step_gamma if chain.diagnostics else cfg.mh_step_gamma
    steps_e = chain.diagnostics.step_eta if chain.diagnostics else cfg.mh_step_eta
    K = len(chain)
    Z = np.empty((K, m))
    C = np.empty((K, m), dtype=np.int64)
    # the parameters are already at stationarity; keep one state per stored draw
    for k in range(K):
        for _ in range(cfg.thin):
            state, _, _ = sweep(state, aug, chain.hyper, rng, steps_g, steps_e, cfg.stochastic_allocation)
        Z[k] = state.z[n:]
        C[k] = state.c[n:]
    return Z, C


def predictive_table(results: list[PredictiveResult], D: int):
    """Rows of (median, ci_low, ci_high, p_comp_1..p_comp_D)."""
    out = np.empty((len(results), 3 + D))
    for j, r in enumerate(results):
        out[j, 0] = r.median
        out[j, 1:3] = r.ci95
        out[j, 3:] = r.component_freq
    return out
