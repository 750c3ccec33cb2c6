"""Metropolis-within-Gibbs sampler.

One sweep updates, in order: biomarker intercepts and slopes, error
variances, the hyperprior (nuisance) parameters, the ordinal cutpoints and
biomarker weights (random-walk Metropolis), weights and allocations, and
finally the latent intakes and component variances. Each update mutates the
state in place and returns it, so later updates see earlier ones.

The ``*_conditional`` helpers return the parameters of each closed-form full
conditional; tests compare them against grid-normalized prior x likelihood.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .model import (
    Dataset,
    Hyperparameters,
    ModelState,
    UsageError,
    derive_hyperparameters,
    initialize_state,
    BiomarkerScaler,
)
from .ordinal import weights_matrix
from .stats import RngStream, categorical_rows, invgamma_rvs, truncnorm_lower_rvs

logger = logging.getLogger(__name__)

PARAM_NAMES = (
    "alpha",
    "beta",
    "sigma2",
    "mu_alpha",
    "mu_beta",
    "sigma_beta2",
    "theta2",
    "gamma",
    "eta",
)


@dataclass
class SamplerConfig:
    n_iter: int = 30000
    n_burn: int = 6000
    thin: int = 1
    mh_step_gamma: float = 0.5
    # on the scale of a standardized biomarker; divided by each column's sd
    mh_step_eta: float = 0.1
    adapt_window: int = 100
    target_accept: float = 0.3
    seed: int = 0
    stochastic_allocation: bool = False
    theta_init: str = "fixed"
    check_invariants: bool = False
    keep_latent: bool = True

    def __post_init__(self):
        if self.n_iter <= 0 or self.n_burn < 0 or self.thin <= 0:
            raise ValueError("n_iter and thin must be positive and n_burn nonnegative")
        if self.n_burn >= self.n_iter:
            raise ValueError(f"n_burn ({self.n_burn}) must be below n_iter ({self.n_iter})")
        if not (self.mh_step_gamma > 0 and self.mh_step_eta > 0):
            raise ValueError("random-walk step sizes must be positive")
        if self.adapt_window <= 0:
            raise ValueError("adapt_window must be positive")

    @property
    def n_keep(self) -> int:
        return (self.n_iter - self.n_burn) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MhDiagnostics:
    acceptance_gamma: float
    acceptance_eta: float
    step_gamma: np.ndarray
    step_eta: np.ndarray

    def to_dict(self) -> dict:
        return {
            "acceptance_gamma": self.acceptance_gamma,
            "acceptance_eta": self.acceptance_eta,
            "step_gamma": np.asarray(self.step_gamma).tolist(),
            "step_eta": np.asarray(self.step_eta).tolist(),
        }


@dataclass
class PosteriorChain:
    """Retained post-burn-in draws, stored column-wise.

    ``draws`` maps each parameter name (plus ``z`` and ``c`` when latent
    values are kept) to an array whose first axis indexes retained draws.
    """

    draws: dict
    X: np.ndarray
    hyper: Hyperparameters
    config: SamplerConfig
    fingerprint: str
    diagnostics: MhDiagnostics | None = None
    scaler: BiomarkerScaler | None = None
    final_state: ModelState | None = None
    Y_train: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_iter(self) -> int:
        return self.config.n_iter

    @property
    def n_burn(self) -> int:
        return self.config.n_burn

    @property
    def thin(self) -> int:
        return self.config.thin

    @property
    def seed(self) -> int:
        return self.config.seed

    def __len__(self) -> int:
        return self.draws["alpha"].shape[0]

    @property
    def P(self) -> int:
        return self.draws["alpha"].shape[1]

    @property
    def D(self) -> int:
        return self.X.shape[0]

    def state(self, k: int) -> ModelState:
        d = self.draws
        n = d["z"].shape[1] if "z" in d else 0
        pi = None
        if self.Y_train is not None:
            pi = weights_matrix(d["gamma"][k], d["eta"][k], self.Y_train)
        return ModelState(
            alpha=d["alpha"][k].copy(),
            beta=d["beta"][k].copy(),
            sigma2=d["sigma2"][k].copy(),
            mu_alpha=float(d["mu_alpha"][k]),
            mu_beta=float(d["mu_beta"][k]),
            sigma_beta2=float(d["sigma_beta2"][k]),
            theta2=d["theta2"][k].copy(),
            gamma=d["gamma"][k].copy(),
            eta=d["eta"][k].copy(),
            z=d["z"][k].copy() if "z" in d else np.zeros(n),
            c=d["c"][k].copy() if "c" in d else np.zeros(n, dtype=int),
            pi=pi,
        )

    def __iter__(self):
        return (self.state(k) for k in range(len(self)))

    def median(self, name: str) -> np.ndarray:
        return np.median(self.draws[name], axis=0)

    def interval(self, name: str, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        lo = (1.0 - level) / 2.0
        q = np.quantile(self.draws[name], [lo, 1.0 - lo], axis=0)
        return q[0], q[1]


# --- closed-form full conditionals ------------------------------------------

def alpha_conditional(state: ModelState, Y: np.ndarray, hyp: Hyperparameters):
    """Mean and variance of each intercept's normal full conditional (before truncation at 0)."""
    n = Y.shape[0]
    s2, sa2 = state.sigma2, hyp.sigma_alpha2
    var = s2 * sa2 / (n * sa2 + s2)
    resid_sum = Y.sum(axis=0) - state.beta * state.z.sum()
    mean = var * (resid_sum / s2 + state.mu_alpha / sa2)
    return mean, var


def beta_conditional(state: ModelState, Y: np.ndarray):
    s2, sb2 = state.sigma2, state.sigma_beta2
    z = state.z
    var = s2 * sb2 / (sb2 * (z @ z) + s2)
    cross = z @ Y - state.alpha * z.sum()
    mean = var * (cross / s2 + state.mu_beta / sb2)
    return mean, var


def sigma2_conditional(state: ModelState, Y: np.ndarray, hyp: Hyperparameters):
    n = Y.shape[0]
    resid = Y - state.alpha - np.outer(state.z, state.beta)
    shape = np.full(Y.shape[1], n / 2.0 + hyp.nu_P1)
    scale = 0.5 * np.einsum("ij,ij->j", resid, resid) + hyp.nu_P2
    return shape, scale


def _hyper_mean_conditional(values: np.ndarray, m: float, tau: float, var_g: float):
    P = values.size
    var = tau * var_g / (tau * P + 1.0)
    mean = var * (tau * values.sum() + m) / (tau * var_g)
    return mean, var


def mu_alpha_conditional(state: ModelState, hyp: Hyperparameters):
    return _hyper_mean_conditional(state.alpha, hyp.m_alpha, hyp.tau_alpha, hyp.sigma_alpha2)


def mu_beta_conditional(state: ModelState, hyp: Hyperparameters):
    return _hyper_mean_conditional(state.beta, hyp.m_beta, hyp.tau_beta, state.sigma_beta2)


def sigma_beta2_conditional(state: ModelState, hyp: Hyperparameters):
    P = state.beta.size
    shape = (P + 1 + 2.0 * hyp.nu_beta1) / 2.0
    dev = state.beta - state.mu_beta
    scale = hyp.nu_beta2 + (hyp.tau_beta * (dev @ dev) + (state.mu_beta - hyp.m_beta) ** 2) / (
        2.0 * hyp.tau_beta
    )
    return shape, scale


def z_conditional(state: ModelState, Y: np.ndarray, X: np.ndarray):
    """Per-observation mean and variance given the current allocations."""
    w = state.beta / state.sigma2
    info = state.beta @ w
    theta2_c = state.theta2[state.c]
    var = 1.0 / (info + 1.0 / theta2_c)
    mean = var * ((Y - state.alpha) @ w + X[state.c] / theta2_c)
    return mean, var


def theta2_conditional(state: ModelState, X: np.ndarray, hyp: Hyperparameters):
    D = X.size
    counts = np.bincount(state.c, minlength=D)
    dev = state.z - X[state.c]
    ss = np.bincount(state.c, weights=dev * dev, minlength=D)
    return counts / 2.0 + hyp.nu_z1, hyp.nu_z2 + ss / 2.0


# --- Gibbs updates -------------------------------------------------------------

def update_alpha(state: ModelState, data: Dataset, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    mean, var = alpha_conditional(state, data.Y, hyp)
    state.alpha = truncnorm_lower_rvs(mean, np.sqrt(var), 0.0, rng)
    return state


def update_beta(state: ModelState, data: Dataset, rng: RngStream) -> ModelState:
    mean, var = beta_conditional(state, data.Y)
    beta = truncnorm_lower_rvs(mean, np.sqrt(var), 0.0, rng)
    # the support is open at zero
    state.beta = np.where(beta > 0, beta, np.nextafter(0.0, 1.0))
    return state


def update_alpha_beta(state: ModelState, data: Dataset, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    update_alpha(state, data, hyp, rng)
    return update_beta(state, data, rng)


def update_sigma_p(state: ModelState, data: Dataset, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    shape, scale = sigma2_conditional(state, data.Y, hyp)
    state.sigma2 = invgamma_rvs(shape, scale, rng)
    return state


def _scalar_truncnorm(mean: float, var: float, rng: RngStream) -> float:
    return float(truncnorm_lower_rvs(np.array([mean]), np.array([math.sqrt(var)]), 0.0, rng)[0])


def update_mu_alpha(state: ModelState, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    state.mu_alpha = _scalar_truncnorm(*mu_alpha_conditional(state, hyp), rng)
    return state


def update_mu_beta(state: ModelState, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    state.mu_beta = _scalar_truncnorm(*mu_beta_conditional(state, hyp), rng)
    return state


def update_sigma_beta2(state: ModelState, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    shape, scale = sigma_beta2_conditional(state, hyp)
    state.sigma_beta2 = float(invgamma_rvs(shape, scale, rng))
    return state


def update_nuisance(state: ModelState, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    update_mu_alpha(state, hyp, rng)
    update_mu_beta(state, hyp, rng)
    return update_sigma_beta2(state, hyp, rng)


class _OrdinalTarget:
    """Log target for the random-walk updates of cutpoints and biomarker weights.

    Caches per-observation linear predictors so a single-coordinate proposal
    costs one pass over the data.
    """

    def __init__(self, Y: np.ndarray, c: np.ndarray, D: int):
        self.Y = Y
        self.c = c
        self.D = D

    def loglik(self, gamma: np.ndarray, lin: np.ndarray) -> float:
        ext = np.empty(self.D + 1)
        ext[0] = -np.inf
        ext[-1] = np.inf
        ext[1:-1] = gamma
        c = self.c
        hi = np.arctan(0.5 * (ext[c + 1] + lin))
        lo = np.arctan(0.5 * (ext[c] + lin))
        p = (hi - lo) / np.pi
        if np.any(p <= 0):
            return -math.inf
        return float(np.log(p).sum())


def _gamma_prior_bounds(m_gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ext = np.concatenate(([-np.inf], m_gamma, [np.inf]))
    return ext[:-2], ext[2:]


def update_gamma_eta(
    state: ModelState,
    data: Dataset,
    hyp: Hyperparameters,
    rng: RngStream,
    step_gamma=0.5,
    step_eta=0.1,
):
    """Single-site random-walk Metropolis for every cutpoint, then every biomarker weight.

    Returns the state and per-coordinate acceptance indicators
    ``(accepted_gamma, accepted_eta)``.
    """
    Y = data.Y
    D = data.D
    kappa = hyp.kappa
    step_gamma = np.broadcast_to(np.asarray(step_gamma, dtype=float), state.gamma.shape)
    step_eta = np.broadcast_to(np.asarray(step_eta, dtype=float), state.eta.shape)
    target = _OrdinalTarget(Y, state.c, D)
    gamma = state.gamma.copy()
    eta = state.eta.copy()
    lin = Y @ eta
    cur = target.loglik(gamma, lin)
    lower, upper = _gamma_prior_bounds(hyp.m_gamma)
    acc_g = np.zeros(gamma.size, dtype=bool)
    acc_e = np.zeros(eta.size, dtype=bool)

    noise = rng.normal(gamma.size + eta.size)
    log_u = np.log(rng.uniform(gamma.size + eta.size))

    for d in range(gamma.size):
        old = gamma[d]
        new = old + step_gamma[d] * noise[d]
        if new == old:
            acc_g[d] = True
            continue
        lo_nb = gamma[d - 1] if d > 0 else -np.inf
        hi_nb = gamma[d + 1] if d + 1 < gamma.size else np.inf
        # outside the prior truncation or breaking the ordering: zero density
        if not (lower[d] < new < upper[d] and lo_nb < new < hi_nb):
            continue
        gamma[d] = new
        prop = target.loglik(gamma, lin)
        log_ratio = prop - cur - ((new - hyp.m_gamma[d]) ** 2 - (old - hyp.m_gamma[d]) ** 2) / (2 * kappa)
        if log_u[d] < log_ratio:
            cur = prop
            acc_g[d] = True
        else:
            gamma[d] = old

    off = gamma.size
    for p in range(eta.size):
        old = eta[p]
        delta = step_eta[p] * noise[off + p]
        if delta == 0.0:
            acc_e[p] = True
            continue
        new = old + delta
        lin_new = lin + delta * Y[:, p]
        prop = target.loglik(gamma, lin_new)
        log_ratio = prop - cur - ((new - hyp.m_eta[p]) ** 2 - (old - hyp.m_eta[p]) ** 2) / (2 * kappa)
        if log_u[off + p] < log_ratio:
            eta[p] = new
            lin = lin_new
            cur = prop
            acc_e[p] = True

    state.gamma = gamma
    state.eta = eta
    return state, acc_g, acc_e


def _log_component_density(z: np.ndarray, X: np.ndarray, theta2: np.ndarray) -> np.ndarray:
    """n x D matrix of log N_[0,inf)(z_i | X_d, theta2_d)."""
    sd = np.sqrt(theta2)
    r = (z[:, None] - X[None, :]) / sd[None, :]
    return -0.5 * r * r - np.log(sd)[None, :] - log_ndtr(X / sd)[None, :]


def allocation_scores(pi: np.ndarray, z: np.ndarray, X: np.ndarray, theta2: np.ndarray) -> np.ndarray:
    """Normalized pi_id * N_[0,inf)(z_i | X_d, theta2_d) over d."""
    with np.errstate(divide="ignore"):
        logw = np.log(pi) + _log_component_density(z, X, theta2)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def update_weights_allocations(
    state: ModelState,
    data: Dataset,
    rng: RngStream | None = None,
    stochastic: bool = False,
) -> ModelState:
    """Recompute weights and set each allocation to its highest-scoring component.

    With ``stochastic=True`` allocations are drawn from the normalized scores
    instead (sensitivity analysis only).
    """
    state.pi = weights_matrix(state.gamma, state.eta, data.Y)
    with np.errstate(divide="ignore"):
        logw = np.log(state.pi) + _log_component_density(state.z, data.X, state.theta2)
    if stochastic:
        if rng is None:
            raise UsageError("stochastic allocation needs a random stream")
        logw -= logw.max(axis=1, keepdims=True)
        state.c = categorical_rows(np.exp(logw), rng)
    else:
        state.c = np.argmax(logw, axis=1)
    return state


def update_z(state: ModelState, data: Dataset, rng: RngStream) -> ModelState:
    mean, var = z_conditional(state, data.Y, data.X)
    state.z = truncnorm_lower_rvs(mean, np.sqrt(var), 0.0, rng)
    return state


def update_theta2(state: ModelState, data: Dataset, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    """Component variances; an empty component is drawn from its prior."""
    shape, scale = theta2_conditional(state, data.X, hyp)
    state.theta2 = invgamma_rvs(shape, scale, rng)
    return state


def update_latent(state: ModelState, data: Dataset, hyp: Hyperparameters, rng: RngStream) -> ModelState:
    update_z(state, data, rng)
    return update_theta2(state, data, hyp, rng)


# --- driver ----------------------------------------------------------------------

class _StepAdapter:
    """Robbins-Monro adaptation of log step sizes toward a target acceptance rate."""

    def __init__(self, steps: np.ndarray, window: int, target: float):
        self.steps = np.asarray(steps, dtype=float).copy()
        self.window = window
        self.target = target
        self.count = np.zeros(self.steps.size)
        self.rounds = 0

    def record(self, accepted: np.ndarray, iteration: int) -> None:
        self.count += accepted
        if iteration % self.window == 0:
            self.rounds += 1
            rate = self.count / self.window
            gain = 1.0 / math.sqrt(self.rounds)
            positive = self.steps > 0
            self.steps[positive] *= np.exp(2.0 * gain * (rate[positive] - self.target))
            self.count[:] = 0


def sweep(
    state: ModelState,
    data: Dataset,
    hyp: Hyperparameters,
    rng: RngStream,
    step_gamma,
    step_eta,
    stochastic_allocation: bool = False,
):
    update_alpha_beta(state, data, hyp, rng)
    update_sigma_p(state, data, hyp, rng)
    update_nuisance(state, hyp, rng)
    state, acc_g, acc_e = update_gamma_eta(state, data, hyp, rng, step_gamma, step_eta)
    update_weights_allocations(state, data, rng, stochastic_allocation)
    update_latent(state, data, hyp, rng)
    return state, acc_g, acc_e


def _allocate_draws(n_keep: int, state: ModelState, keep_latent: bool) -> dict:
    out = {}
    for name in PARAM_NAMES:
        v = np.asarray(getattr(state, name), dtype=float)
        out[name] = np.empty((n_keep,) + v.shape)
    if keep_latent:
        out["z"] = np.empty((n_keep, state.z.size))
        out["c"] = np.empty((n_keep, state.c.size), dtype=np.int64)
    return out


def run_chain(
    data: Dataset,
    hyp: Hyperparameters,
    cfg: SamplerConfig,
    *,
    init: ModelState | None = None,
    rng: RngStream | None = None,
) -> PosteriorChain:
    """Run the sampler and return the retained draws.

    Deterministic given ``cfg.seed`` (or the supplied ``rng``).
    """
    if rng is None:
        rng = RngStream(cfg.seed)
    if init is None:
        state = initialize_state(data, hyp, rng.child(0), theta_init=cfg.theta_init)
    else:
        state = init.copy()
    chain_rng = rng.child(1)

    col_sd = data.Y.std(axis=0)
    col_sd[~(col_sd > 0)] = 1.0
    adapt_g = _StepAdapter(np.full(state.gamma.size, cfg.mh_step_gamma), cfg.adapt_window, cfg.target_accept)
    adapt_e = _StepAdapter(cfg.mh_step_eta / col_sd, cfg.adapt_window, cfg.target_accept)

    n_keep = cfg.n_keep
    draws = _allocate_draws(n_keep, state, cfg.keep_latent)
    acc_g_total = np.zeros(state.gamma.size)
    acc_e_total = np.zeros(state.eta.size)
    n_post = 0
    k = 0
    for t in range(1, cfg.n_iter + 1):
        state, acc_g, acc_e = sweep(
            state, data, hyp, chain_rng, adapt_g.steps, adapt_e.steps, cfg.stochastic_allocation
        )
        if t <= cfg.n_burn:
            adapt_g.record(acc_g, t)
            adapt_e.record(acc_e, t)
            continue
        acc_g_total += acc_g
        acc_e_total += acc_e
        n_post += 1
        if (t - cfg.n_burn) % cfg.thin == 0 and k < n_keep:
            if cfg.check_invariants:
                state.check()
            for name in PARAM_NAMES:
                draws[name][k] = getattr(state, name)
            if cfg.keep_latent:
                draws["z"][k] = state.z
                draws["c"][k] = state.c
            k += 1

    diag = MhDiagnostics(
        acceptance_gamma=float(acc_g_total.mean() / n_post) if acc_g_total.size else 1.0,
        acceptance_eta=float(acc_e_total.mean() / n_post),
        step_gamma=adapt_g.steps.copy(),
        step_eta=adapt_e.steps.copy(),
    )
    logger.debug("chain done: acceptance gamma %.3f eta %.3f", diag.acceptance_gamma, diag.acceptance_eta)
    return PosteriorChain(
        draws=draws,
        X=data.X.copy(),
        hyper=hyp,
        config=cfg,
        fingerprint=data.fingerprint(),
        diagnostics=diag,
        final_state=state.copy(),
        Y_train=data.Y,
    )


def fit(
    data: Dataset,
    cfg: SamplerConfig,
    *,
    scale: bool = False,
    kappa: float = 2.0,
    tau_alpha: float = 1.0,
    tau_beta: float = 1.0,
    rng: RngStream | None = None,
) -> PosteriorChain:
    """Scale (optionally), derive hyperparameters, and run a chain.

    The returned chain carries the fingerprint of the data as given and, when
    ``scale`` is set, the fitted column transform for use at prediction time.
    """
    scaler = BiomarkerScaler.fit(data.Y) if scale else None
    work = data.with_Y(scaler.transform(data.Y)) if scaler else data
    hyp = derive_hyperparameters(work, kappa=kappa, tau_alpha=tau_alpha, tau_beta=tau_beta)
    chain = run_chain(work, hyp, cfg, rng=rng)
    chain.scaler = scaler
    chain.fingerprint = data.fingerprint()
    return chain
