"""Domain types, dataset validation, biomarker scaling, hyperparameters and
initial parameter values.

Component/level indices are 0-based in memory; files use 1-based labels.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .ordinal import fit_ordinal_cauchit_mle, weights_matrix
from .stats import RngStream, truncnorm_rvs

logger = logging.getLogger(__name__)

SIGMA_ALPHA2 = 1.0
SIGMA_FLOOR_FRACTION = 1e-4
BETA_FLOOR = 1e-6
THETA2_START = 25.0
THETA2_BOUNDS = (1.0, 100.0**2)


class DataError(ValueError):
    """Input data violates a dataset invariant."""


class NegativeBiomarkerError(DataError):
    pass


class NonFiniteBiomarkerError(DataError):
    pass


class LevelOrderError(DataError):
    pass


class UnknownDoseError(DataError):
    pass


class DegenerateColumnError(DataError):
    pass


class RankError(DataError):
    pass


class UsageError(ValueError):
    pass


class InvariantError(AssertionError):
    pass


@dataclass
class Dataset:
    """Biomarker matrix ``Y`` (n x P), food-quantity levels ``X`` (length D),
    and, for intervention data, the consumed quantity ``x`` of each row."""

    Y: np.ndarray
    X: np.ndarray
    x: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def P(self) -> int:
        return self.Y.shape[1]

    @property
    def D(self) -> int:
        return self.X.shape[0]

    @property
    def has_doses(self) -> bool:
        return self.x is not None

    @property
    def labels(self) -> np.ndarray:
        """0-based level index of each consumed quantity."""
        if self.x is None:
            raise UsageError("dataset has no consumed quantities")
        return np.searchsorted(self.X, self.x)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            Y=self.Y[rows],
            X=self.X,
            x=None if self.x is None else self.x[rows],
        )

    def with_Y(self, Y: np.ndarray) -> "Dataset":
        return replace(self, Y=Y)

    def fingerprint(self) -> str:
        return dataset_fingerprint(self)


def validate_dataset(Y, X, x=None) -> Dataset:
    """Check a raw dataset and return it as float arrays.

    All violations of one kind are collected so the message names every
    offending cell, not only the first.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float).ravel()
    if Y.ndim != 2 or Y.shape[0] == 0 or Y.shape[1] == 0:
        raise DataError(f"biomarker matrix must be a non-empty 2-D array, got shape {Y.shape}")
    if X.size == 0:
        raise DataError("at least one food-quantity level is required")

    bad = np.argwhere(~np.isfinite(Y))
    if bad.size:
        raise NonFiniteBiomarkerError(
            "non-finite biomarker values at (row, column): " + _cells(bad)
        )
    bad = np.argwhere(Y < 0)
    if bad.size:
        raise NegativeBiomarkerError(
            "negative biomarker values at (row, column): "
            + _cells(bad, values=Y)
        )
    steps = np.diff(X)
    if np.any(steps <= 0) or not np.all(np.isfinite(X)):
        where = (np.flatnonzero(steps <= 0) + 1).tolist()
        raise LevelOrderError(
            f"food-quantity levels must be strictly increasing; X={X.tolist()} "
            f"breaks order at positions {where}"
        )
    if x is not None:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != Y.shape[0]:
            raise DataError(f"{x.shape[0]} doses for {Y.shape[0]} biomarker rows")
        unknown = np.flatnonzero(~np.isin(x, X))
        if unknown.size:
            shown = ", ".join(f"row {i}: {float(x[i])!r}" for i in unknown[:10])
            raise UnknownDoseError(
                f"consumed quantities not among levels {X.tolist()}: {shown}"
                + (" ..." if unknown.size > 10 else "")
            )
    return Dataset(Y=Y, X=X, x=x)


def _cells(idx: np.ndarray, values: np.ndarray | None = None, limit: int = 10) -> str:
    parts = []
    for r, c in idx[:limit]:
        s = f"({r}, {c})"
        if values is not None:
            s += f"={float(values[r, c])!r}"
        parts.append(s)
    if len(idx) > limit:
        parts.append(f"... {len(idx) - limit} more")
    return ", ".join(parts)


def dataset_fingerprint(data: Dataset) -> str:
    """Row-order independent SHA-256 digest of (Y, x) and the levels X."""
    cols = [data.Y]
    if data.x is not None:
        cols.append(data.x[:, None])
    rows = np.hstack(cols)
    keys = sorted(",".join(repr(float(v)) for v in row) for row in rows)
    h = hashlib.sha256()
    h.update(("X=" + ",".join(repr(float(v)) for v in data.X) + "\n").encode())
    for k in keys:
        h.update(k.encode())
        h.update(b"\n")
    return h.hexdigest()


# --- scaling -----------------------------------------------------------------

@dataclass
class BiomarkerScaler:
    """Per-column transform (y - mean)/sd + shift, shift = 2 |min standardized|."""

    mean: np.ndarray
    sd: np.ndarray
    shift: np.ndarray

    @classmethod
    def fit(cls, Y) -> "BiomarkerScaler":
        Y = np.asarray(Y, dtype=float)
        mean = Y.mean(axis=0)
        sd = Y.std(axis=0, ddof=1)
        const = np.flatnonzero(~(sd > 0))
        if const.size:
            raise DegenerateColumnError(f"columns {const.tolist()} have zero standard deviation")
        std = (Y - mean) / sd
        shift = 2.0 * np.abs(std.min(axis=0))
        return cls(mean=mean, sd=sd, shift=shift)

    def transform(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.shape[-1] != self.mean.shape[0]:
            raise DataError(f"expected {self.mean.shape[0]} biomarker columns, got {Y.shape[-1]}")
        return (Y - self.mean) / self.sd + self.shift

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "shift": self.shift.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiomarkerScaler":
        return cls(**{k: np.asarray(d[k], dtype=float) for k in ("mean", "sd", "shift")})


def scale_biomarkers(Y) -> np.ndarray:
    return BiomarkerScaler.fit(Y).transform(Y)


# --- hyperparameters ---------------------------------------------------------

@dataclass
class Hyperparameters:
    m_alpha: float
    m_beta: float
    tau_alpha: float
    tau_beta: float
    nu_beta1: float
    nu_beta2: float
    nu_P1: float
    nu_P2: float
    nu_z1: np.ndarray
    nu_z2: np.ndarray
    m_gamma: np.ndarray
    m_eta: np.ndarray
    kappa: float
    sigma_alpha2: float = SIGMA_ALPHA2

    def __post_init__(self):
        self.nu_z1 = np.asarray(self.nu_z1, dtype=float)
        self.nu_z2 = np.asarray(self.nu_z2, dtype=float)
        self.m_gamma = np.asarray(self.m_gamma, dtype=float)
        self.m_eta = np.asarray(self.m_eta, dtype=float)
        if self.sigma_alpha2 != SIGMA_ALPHA2:
            raise InvariantError("sigma_alpha2 is fixed at 1 for identifiability")
        if np.any(np.diff(self.m_gamma) <= 0):
            raise InvariantError(f"m_gamma must be strictly increasing: {self.m_gamma}")
        if not 0 < self.kappa <= 2:
            raise InvariantError(f"kappa must lie in (0, 2], got {self.kappa}")
        if self.m_alpha < 0 or self.m_beta < 0:
            raise InvariantError("m_alpha and m_beta must be nonnegative")
        for name in ("tau_alpha", "tau_beta", "nu_beta1", "nu_beta2", "nu_P1", "nu_P2"):
            if not getattr(self, name) > 0:
                raise InvariantError(f"{name} must be positive")
        if np.any(self.nu_z1 <= 0) or np.any(self.nu_z2 <= 0):
            raise InvariantError("nu_z1 and nu_z2 must be positive")

    @property
    def sigma_beta2_prior_mean(self) -> float:
        return self.nu_beta2 / (self.nu_beta1 - 1.0) if self.nu_beta1 > 1 else self.nu_beta2

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(**d)


def pooled_ols(Y: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    """Intercept and slope of all biomarker values (stacked) on the doses."""
    n, P = Y.shape
    resp = Y.T.ravel()
    pred = np.tile(x, P)
    A = np.column_stack([np.ones_like(pred), pred])
    coef, *_ = np.linalg.lstsq(A, resp, rcond=None)
    return float(coef[0]), float(coef[1])


def derive_hyperparameters(
    data: Dataset,
    *,
    kappa: float = 2.0,
    tau_alpha: float = 1.0,
    tau_beta: float = 1.0,
) -> Hyperparameters:
    """Empirical-Bayes hyperparameters from an intervention dataset."""
    if not data.has_doses:
        raise UsageError("hyperparameters need consumed quantities (intervention data)")
    intercept, slope = pooled_ols(data.Y, data.x)
    D = data.D
    d = np.arange(1, D + 1)
    fit = fit_ordinal_cauchit_mle(data.labels, data.Y, D, allow_empty=True)
    return Hyperparameters(
        m_alpha=max(intercept, 0.0),
        m_beta=max(slope, 0.0),
        tau_alpha=tau_alpha,
        tau_beta=tau_beta,
        nu_beta1=2.0,
        nu_beta2=3.0,
        nu_P1=1.0,
        nu_P2=3.0,
        nu_z1=(D - d + 1) / 2.0,
        nu_z2=np.full(D, float(data.n)),
        m_gamma=fit.gamma,
        m_eta=fit.eta,
        kappa=kappa,
    )


# --- model state -------------------------------------------------------------

@dataclass
class ModelState:
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    mu_alpha: float
    mu_beta: float
    sigma_beta2: float
    theta2: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    c: np.ndarray
    pi: np.ndarray | None = field(default=None, repr=False)

    def copy(self) -> "ModelState":
        return ModelState(
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            sigma2=self.sigma2.copy(),
            mu_alpha=float(self.mu_alpha),
            mu_beta=float(self.mu_beta),
            sigma_beta2=float(self.sigma_beta2),
            theta2=self.theta2.copy(),
            gamma=self.gamma.copy(),
            eta=self.eta.copy(),
            z=self.z.copy(),
            c=self.c.copy(),
            pi=None if self.pi is None else self.pi.copy(),
        )

    def check(self) -> None:
        """Raise InvariantError on the first violated invariant."""
        problems = []
        if np.any(self.alpha < 0):
            problems.append("alpha < 0")
        if np.any(self.beta <= 0):
            problems.append("beta <= 0")
        if np.any(self.sigma2 <= 0):
            problems.append("sigma2 <= 0")
        if np.any(self.theta2 <= 0):
            problems.append("theta2 <= 0")
        if self.gamma.size > 1 and np.any(np.diff(self.gamma) <= 0):
            problems.append("gamma not increasing")
        if np.any(self.z < 0):
            problems.append("z < 0")
        if self.mu_alpha < 0 or self.mu_beta < 0 or not self.sigma_beta2 > 0:
            problems.append("nuisance parameters out of support")
        if self.pi is not None and not np.allclose(self.pi.sum(axis=1), 1.0, atol=1e-12):
            problems.append("pi rows do not sum to 1")
        if self.c.size and (self.c.min() < 0 or self.c.max() >= self.theta2.size):
            problems.append("allocation index out of range")
        for name in ("alpha", "beta", "sigma2", "theta2", "gamma", "eta", "z"):
            if not np.all(np.isfinite(getattr(self, name))):
                problems.append(f"{name} not finite")
        if problems:
            raise InvariantError("; ".join(problems))


def _per_dose_line(Y: np.ndarray, x: np.ndarray, X: np.ndarray):
    """Least-squares line through (X_d, mean of y_p at dose d) for every p."""
    present = [k for k in range(X.size) if np.any(x == X[k])]
    if len(present) < 2:
        raise RankError("initialization needs at least two distinct doses")
    means = np.array([Y[x == X[k]].mean(axis=0) for k in present])
    A = np.column_stack([np.ones(len(present)), X[present]])
    coef, *_ = np.linalg.lstsq(A, means, rcond=None)
    return coef[0], coef[1]


def theta2_moment_start(data: Dataset, sigma2: np.ndarray, sigma_beta2: float) -> np.ndarray:
    """Moment-style start for the component variances, clamped to [1, 100^2]."""
    out = np.empty(data.D)
    for k in range(data.D):
        masked = np.where((data.x == data.X[k])[:, None], data.Y, 0.0)
        v = masked.var(axis=0, ddof=1)
        out[k] = np.mean((v - SIGMA_ALPHA2 - sigma2) / sigma_beta2)
    return np.clip(out, *THETA2_BOUNDS)


def initialize_state(
    data: Dataset,
    hyp: Hyperparameters,
    rng: RngStream,
    *,
    theta_init: str = "fixed",
) -> ModelState:
    """Starting values for the sampler from an intervention dataset.

    ``theta_init="fixed"`` starts every component variance at 5^2;
    ``"moment"`` uses :func:`theta2_moment_start` instead.
    """
    if not data.has_doses:
        raise UsageError("initialization needs consumed quantities")
    alpha, beta = _per_dose_line(data.Y, data.x, data.X)
    alpha = np.maximum(alpha, 0.0)
    beta = np.where(beta > 0, beta, BETA_FLOOR)

    var_y = data.Y.var(axis=0, ddof=1)
    sigma2 = var_y - beta**2 / data.D
    floor = np.maximum(SIGMA_FLOOR_FRACTION * var_y, np.finfo(float).tiny)
    sigma2 = np.where(sigma2 > floor, sigma2, floor)

    sigma_beta2 = hyp.sigma_beta2_prior_mean
    if theta_init == "fixed":
        theta2 = np.full(data.D, THETA2_START)
    elif theta_init == "moment":
        theta2 = theta2_moment_start(data, sigma2, sigma_beta2)
    else:
        raise UsageError(f"unknown theta_init {theta_init!r}")

    labels = data.labels
    z = truncnorm_rvs(data.x, THETA2_START, 0.0, np.inf, rng)
    z = np.where(z > 0, z, np.finfo(float).tiny)
    gamma = hyp.m_gamma.copy()
    eta = hyp.m_eta.copy()
    state = ModelState(
        alpha=np.asarray(alpha, dtype=float),
        beta=np.asarray(beta, dtype=float),
        sigma2=sigma2,
        mu_alpha=hyp.m_alpha,
        mu_beta=hyp.m_beta,
        sigma_beta2=sigma_beta2,
        theta2=theta2,
        gamma=gamma,
        eta=eta,
        z=z,
        c=labels.astype(int),
        pi=np.full((data.n, data.D), 1.0 / data.D),
    )
    state.check()
    return state


def current_weights(state: ModelState, Y: np.ndarray) -> np.ndarray:
    return weights_matrix(state.gamma, state.eta, Y)
