"""Synthetic intervention/biomarker-only data with retained ground truth.

Generators cover the standard studies (I: correctly specified, II: train/test
component variances differ, III: quadratic intake-biomarker relation) and
three test-set variants (new food quantities, uniform intakes, one dominant
component).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import Dataset
from .stats import RngStream, invgamma_rvs, truncnorm_rvs

# (mu_alpha, mu_beta, sigma_alpha2, sigma_beta2) per biomarker range
BIOMARKER_RANGES = {
    "small": (1.0, 0.01, 1.0, 0.01),
    "medium": (20.0, 0.1, 4.0, 0.1),
    "large": (100.0, 1.0, 14.0, 1.0),
}
# expected sigma_p^2 per range: (small-variance, large-variance)
ERROR_VARIANCE = {
    "small": (1.0**2, 3.0**2),
    "medium": (3.0**2, 20.0**2),
    "large": (15.0**2, 100.0**2),
}
X_BAND = (30.0, 320.0)
X_SD = 5.0
THETA2_MEAN = {"low": 8.0**2, "high": 16.0**2}
# study II: (train, test) expected component variances
THETA2_MEAN_STUDY2 = {"low": (6.0**2, 12.0**2), "high": (12.0**2, 24.0**2)}
INVGAMMA_SHAPE = 3.0
MISSPEC_BETA_FACTOR = 1e-3
UNIFORM_TEST_RANGE = (0.0, 350.0)

STUDIES = ("I", "II", "III", "varyingX", "uniform", "unbalanced")


@dataclass
class ScenarioConfig:
    n: int = 99
    D: int = 3
    P: int = 4
    biomarker_range: str = "medium"
    variance_scenario: str = "S1"
    increments: str = "stable"
    theta_setting: str = "low"
    study: str = "I"
    Dstar: int | None = None
    seed: int = 0
    invgamma_shape: float = INVGAMMA_SHAPE

    def __post_init__(self):
        if self.n < self.D or self.n < 3:
            raise ValueError(f"n={self.n} is too small for D={self.D}")
        if self.D < 2 or self.P < 1:
            raise ValueError("need D >= 2 and P >= 1")
        if self.biomarker_range not in BIOMARKER_RANGES:
            raise ValueError(f"biomarker_range must be one of {sorted(BIOMARKER_RANGES)}")
        if self.variance_scenario not in ("S1", "S2", "S3"):
            raise ValueError("variance_scenario must be S1, S2 or S3")
        if self.increments not in ("stable", "increasing", "decreasing"):
            raise ValueError("increments must be stable, increasing or decreasing")
        if self.theta_setting not in THETA2_MEAN:
            raise ValueError("theta_setting must be low or high")
        if self.study not in STUDIES:
            raise ValueError(f"study must be one of {STUDIES}")
        if self.Dstar is not None and not (abs(self.Dstar - self.D) <= 1 and self.Dstar >= 1):
            raise ValueError("Dstar must be D-1, D or D+1")
        if self.invgamma_shape <= 1:
            raise ValueError("invgamma_shape must exceed 1 for a finite mean")

    @property
    def n_test(self) -> int:
        return int(math.floor(0.4 * self.n))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Truth:
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    theta2: np.ndarray
    z_train: np.ndarray
    c_train: np.ndarray
    z_test: np.ndarray
    c_test: np.ndarray
    X_test: np.ndarray | None = None
    theta2_test: np.ndarray | None = None


@dataclass
class SimulatedPair:
    train: Dataset
    test: Dataset
    truth: Truth
    config: ScenarioConfig = field(default_factory=ScenarioConfig)


def level_means(D: int, increments: str) -> np.ndarray:
    """Ordered means of the food-quantity levels inside the 30-320 g band."""
    lo, hi = X_BAND
    t = np.linspace(0.0, 1.0, D)
    if increments == "stable":
        u = t
    elif increments == "increasing":
        u = t**2
    elif increments == "decreasing":
        u = 1.0 - (1.0 - t) ** 2
    else:
        raise ValueError(f"unknown increments {increments!r}")
    return lo + (hi - lo) * u


def sample_levels(means: np.ndarray, rng: RngStream, exclude: np.ndarray | None = None) -> np.ndarray:
    """Strictly increasing levels drawn around ``means``, avoiding ``exclude``."""
    for _ in range(1000):
        X = np.sort(truncnorm_rvs(means, X_SD**2, X_BAND[0], X_BAND[1], rng))
        if np.any(np.diff(X) <= 0):
            continue
        if exclude is not None and np.any(np.isin(X, exclude)):
            continue
        return X
    raise RuntimeError("could not draw distinct food-quantity levels")


def _invgamma_with_mean(mean, shape, size, rng):
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (size,))
    return invgamma_rvs(np.full(size, shape), (shape - 1.0) * mean, rng)


def _error_variance_means(cfg: ScenarioConfig) -> np.ndarray:
    small, large = ERROR_VARIANCE[cfg.biomarker_range]
    if cfg.variance_scenario == "S1":
        return np.full(cfg.P, small)
    if cfg.variance_scenario == "S3":
        return np.full(cfg.P, large)
    out = np.full(cfg.P, small)
    out[cfg.P // 2:] = large
    return out


def _allocations(n: int, D: int, rng: RngStream) -> np.ndarray:
    for _ in range(1000):
        c = rng.integers(0, D, n)
        if np.bincount(c, minlength=D).min() >= 1:
            return c
    raise RuntimeError("could not populate every component")


def _intakes(X, theta2, c, rng):
    return truncnorm_rvs(X[c], theta2[c], 0.0, np.inf, rng)


def _biomarkers(z, alpha, beta, sigma2, rng, quadratic=False):
    mean = alpha[None, :] + beta[None, :] * (z * z if quadratic else z)[:, None]
    return truncnorm_rvs(mean, np.broadcast_to(sigma2, mean.shape), 0.0, np.inf, rng)


def _draw_parameters(cfg: ScenarioConfig, rng: RngStream):
    mu_a, mu_b, s2_a, s2_b = BIOMARKER_RANGES[cfg.biomarker_range]
    alpha = truncnorm_rvs(np.full(cfg.P, mu_a), s2_a, 0.0, np.inf, rng)
    beta = truncnorm_rvs(np.full(cfg.P, mu_b), s2_b, 0.0, np.inf, rng)
    beta = np.where(beta > 0, beta, np.nextafter(0.0, 1.0))
    sigma2 = _invgamma_with_mean(_error_variance_means(cfg), cfg.invgamma_shape, cfg.P, rng)
    return alpha, beta, sigma2


def generate_scenario(cfg: ScenarioConfig) -> SimulatedPair:
    """Train/test pair for studies I and II (and the training half of the variants)."""
    rng = RngStream(cfg.seed)
    p_rng, x_rng, tr_rng, te_rng = rng.spawn(4)
    alpha, beta, sigma2 = _draw_parameters(cfg, p_rng)
    X = sample_levels(level_means(cfg.D, cfg.increments), x_rng)

    if cfg.study == "II":
        m_train, m_test = THETA2_MEAN_STUDY2[cfg.theta_setting]
    else:
        m_train = m_test = THETA2_MEAN[cfg.theta_setting]
    theta2 = _invgamma_with_mean(m_train, cfg.invgamma_shape, cfg.D, x_rng)
    theta2_test = theta2 if cfg.study != "II" else _invgamma_with_mean(m_test, cfg.invgamma_shape, cfg.D, x_rng)

    quadratic = cfg.study == "III"
    beta_gen = beta * MISSPEC_BETA_FACTOR if quadratic else beta

    c = _allocations(cfg.n, cfg.D, tr_rng)
    z = _intakes(X, theta2, c, tr_rng)
    Y = _biomarkers(z, alpha, beta_gen, sigma2, tr_rng, quadratic)

    c_t = _allocations(cfg.n_test, cfg.D, te_rng) if cfg.n_test >= cfg.D else te_rng.integers(0, cfg.D, cfg.n_test)
    z_t = _intakes(X, theta2_test, c_t, te_rng)
    Y_t = _biomarkers(z_t, alpha, beta_gen, sigma2, te_rng, quadratic)

    truth = Truth(
        alpha=alpha,
        beta=beta_gen,
        sigma2=sigma2,
        theta2=theta2,
        z_train=z,
        c_train=c,
        z_test=z_t,
        c_test=c_t,
        X_test=X,
        theta2_test=theta2_test,
    )
    return SimulatedPair(
        train=Dataset(Y=Y, X=X, x=X[c]),
        test=Dataset(Y=Y_t, X=X),
        truth=truth,
        config=cfg,
    )


def generate_misspecified(cfg: ScenarioConfig) -> SimulatedPair:
    """Quadratic mean function y = alpha + 0.001 * beta * z^2."""
    if cfg.study != "III":
        raise ValueError("generate_misspecified needs study='III'")
    return generate_scenario(cfg)


def generate_variant_test(cfg: ScenarioConfig) -> SimulatedPair:
    """Standard training data with a test set drawn under one of the variants."""
    if cfg.study not in ("varyingX", "uniform", "unbalanced"):
        raise ValueError("generate_variant_test needs study varyingX, uniform or unbalanced")
    pair = generate_scenario(replace(cfg, study="I"))
    pair.config = cfg
    t = pair.truth
    rng = RngStream(cfg.seed, key=(7,))
    n_t = cfg.n_test
    X_t, theta2_t = pair.train.X, t.theta2

    if cfg.study == "uniform":
        lo, hi = UNIFORM_TEST_RANGE
        z_t = lo + (hi - lo) * rng.uniform(n_t)
        c_t = np.full(n_t, -1)
    elif cfg.study == "unbalanced":
        lo = math.ceil(0.7 * n_t)
        hi = math.floor(0.8 * n_t)
        if hi < lo:
            raise ValueError(f"n*={n_t} is too small for an unbalanced test set")
        dominant = int(rng.integers(0, cfg.D, 1)[0])
        size = int(rng.integers(lo, hi + 1, 1)[0])
        others = [d for d in range(cfg.D) if d != dominant]
        rest = np.asarray(others)[rng.integers(0, len(others), n_t - size)]
        c_t = np.concatenate([np.full(size, dominant), rest])[rng.permutation(n_t)]
        z_t = _intakes(X_t, theta2_t, c_t, rng)
    else:
        Dstar = cfg.Dstar if cfg.Dstar is not None else cfg.D
        X_t = sample_levels(level_means(Dstar, cfg.increments), rng, exclude=pair.train.X)
        theta2_t = _invgamma_with_mean(THETA2_MEAN[cfg.theta_setting], cfg.invgamma_shape, Dstar, rng)
        c_t = rng.integers(0, Dstar, n_t)
        z_t = _intakes(X_t, theta2_t, c_t, rng)

    Y_t = _biomarkers(z_t, t.alpha, t.beta, t.sigma2, rng)
    t.z_test, t.c_test, t.X_test, t.theta2_test = z_t, c_t, X_t, theta2_t
    pair.test = Dataset(Y=Y_t, X=pair.train.X)
    return pair


def generate(cfg: ScenarioConfig) -> SimulatedPair:
    if cfg.study == "III":
        return generate_misspecified(cfg)
    if cfg.study in ("varyingX", "uniform", "unbalanced"):
        return generate_variant_test(cfg)
    return generate_scenario(cfg)


def apple_like(n: int = 86, seed: int = 0) -> Dataset:
    """Synthetic stand-in for a four-biomarker apple study at 50/100/300 g.

    Biomarkers have heterogeneous scales and noise levels; doses are roughly
    balanced.
    """
    rng = RngStream(seed, key=(86,))
    X = np.array([50.0, 100.0, 300.0])
    c = np.sort(np.resize(np.arange(3), n))
    z = truncnorm_rvs(X[c], 15.0**2, 0.0, np.inf, rng)
    alpha = np.array([2.0, 0.5, 5.0, 1.0])
    beta = np.array([0.02, 0.004, 0.05, 0.01])
    sd = np.array([1.0, 0.25, 3.0, 0.8])
    Y = _biomarkers(z, alpha, beta, sd**2, rng)
    return Dataset(Y=Y, X=X, x=X[c])
