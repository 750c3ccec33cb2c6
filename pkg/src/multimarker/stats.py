"""Seedable random-variate kernels and densities shared by the whole package.

Every sampler takes an :class:`RngStream`; nothing touches global numpy state.
Truncated-normal draws use inverse-CDF sampling in the body of the
distribution and exponential rejection in the far tail, so intervals sitting
many standard deviations from the mean are still cheap to sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr, ndtri

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# standardized lower bound beyond which the exponential tail sampler is used
TAIL_THRESHOLD = 4.0
MAX_REJECTION_ROUNDS = 1000


class ParameterError(ValueError):
    """Distribution parameters violate their preconditions."""


class DegenerateIntervalError(ParameterError):
    """The truncation interval carries no representable probability mass."""


class RngStream:
    """Deterministic random stream with derivable sub-streams.

    ``seed`` identifies the root; ``key`` is the path of child indices used to
    reach this stream. ``position`` counts variates handed out so far.
    """

    def __init__(self, seed: int = 0, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))
        self.position = 0

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, reproducible from (seed, key + (index,))."""
        return RngStream(self.seed, self.key + (index,))

    def spawn(self, n: int) -> list["RngStream"]:
        return [self.child(i) for i in range(n)]

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key}, position={self.position})"

    @staticmethod
    def _count(size) -> int:
        if size is None:
            return 1
        return int(np.prod(size))

    def uniform(self, size=None):
        self.position += self._count(size)
        return self._gen.random(size)

    def normal(self, size=None):
        self.position += self._count(size)
        return self._gen.standard_normal(size)

    def exponential(self, size=None):
        self.position += self._count(size)
        return self._gen.standard_exponential(size)

    def gamma(self, shape):
        shape = np.asarray(shape, dtype=float)
        self.position += max(shape.size, 1)
        out = self._gen.standard_gamma(shape)
        return float(out) if shape.ndim == 0 else out

    def integers(self, low, high=None, size=None):
        self.position += self._count(size)
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        self.position += n
        return self._gen.permutation(n)


@dataclass(frozen=True)
class TruncNormalParams:
    mean: float
    variance: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ParameterError(f"non-finite truncated-normal parameters: {self}")
        if not self.variance > 0:
            raise ParameterError(f"variance must be positive, got {self.variance}")
        if not self.lower < self.upper:
            raise ParameterError(
                f"lower bound {self.lower} must be below upper bound {self.upper}"
            )


@dataclass(frozen=True)
class InvGammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ParameterError(f"inverse-gamma shape must be positive, got {self.shape}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError(f"inverse-gamma scale must be positive, got {self.scale}")


def _log_interval_mass(a, b):
    """log(Phi(b) - Phi(a)) for standardized bounds, stable in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper_side = a > 0
    # reflect right-tail intervals so the subtraction happens on small numbers
    lo = np.where(upper_side, -b, a)
    hi = np.where(upper_side, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_hi + np.log1p(-np.exp(log_lo - log_hi))
    return out


def truncnorm_rvs(mean, variance, lower, upper, rng: RngStream) -> np.ndarray:
    """Vectorized draws from N(mean, variance) restricted to [lower, upper].

    Arguments broadcast against each other. Raises ParameterError for
    non-positive variances or empty intervals and DegenerateIntervalError when
    the interval mass underflows even in log space.
    """
    mean, variance, lower, upper = np.broadcast_arrays(
        np.asarray(mean, dtype=float),
        np.asarray(variance, dtype=float),
        np.asarray(lower, dtype=float),
        np.asarray(upper, dtype=float),
    )
    if not np.all(variance > 0) or not np.all(np.isfinite(mean)):
        bad = np.flatnonzero(~((variance > 0) & np.isfinite(mean)))[:5]
        raise ParameterError(
            f"invalid truncated-normal mean/variance at flat index {bad.tolist()}: "
            f"mean={mean.ravel()[bad].tolist()}, variance={variance.ravel()[bad].tolist()}"
        )
    if not np.all(lower < upper):
        bad = np.flatnonzero(~(lower < upper))[:5]
        raise ParameterError(
            f"empty truncation interval at flat index {bad.tolist()}: "
            f"lower={lower.ravel()[bad].tolist()}, upper={upper.ravel()[bad].tolist()}"
        )
    sd = np.sqrt(variance)
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    # work with intervals whose centre is on the positive side
    with np.errstate(invalid="ignore"):
        flip = (a + b) < 0  # nan for (-inf, inf), which stays unflipped
    lo = np.where(flip, -b, a).ravel()
    hi = np.where(flip, -a, b).ravel()
    x = np.empty(lo.shape)

    tail = lo > TAIL_THRESHOLD
    body = ~tail
    if body.any():
        p_lo = ndtr(-lo[body])
        p_hi = ndtr(-hi[body])
        width = p_lo - p_hi
        if not np.all(width > 0):
            _raise_degenerate(mean, variance, lower, upper, np.flatnonzero(body)[width <= 0])
        q = p_hi + rng.uniform(p_lo.shape) * width
        x[body] = -ndtri(q)
    if tail.any():
        idx = np.flatnonzero(tail)
        mass = _log_interval_mass(lo[idx], hi[idx])
        if not np.all(np.isfinite(mass)):
            _raise_degenerate(mean, variance, lower, upper, idx[~np.isfinite(mass)])
        x[idx] = _tail_rejection(lo[idx], hi[idx], rng)
    np.clip(x, lo, hi, out=x)
    x = x.reshape(mean.shape)
    x = np.where(flip, -x, x)
    return np.clip(mean + sd * x, lower, upper)


def truncnorm_lower_rvs(mean: np.ndarray, sd: np.ndarray, lower: float, rng: RngStream) -> np.ndarray:
    """Fast path for N(mean, sd^2) restricted to [lower, inf).

    Same algorithm as :func:`truncnorm_rvs` without the argument checks; the
    Gibbs sweeps call this hundreds of thousands of times.
    """
    a = (lower - mean) / sd
    x = -ndtri(rng.uniform(a.shape) * ndtr(-a))
    tail = a > TAIL_THRESHOLD
    if tail.any():
        idx = np.flatnonzero(tail)
        x[idx] = _tail_rejection(a[idx], np.full(idx.size, np.inf), rng)
    return np.maximum(mean + sd * np.maximum(x, a), lower)


def _raise_degenerate(mean, variance, lower, upper, flat_idx):
    i = int(flat_idx[0])
    raise DegenerateIntervalError(
        "truncation interval has no representable mass: "
        f"mean={mean.ravel()[i]!r}, variance={variance.ravel()[i]!r}, "
        f"lower={lower.ravel()[i]!r}, upper={upper.ravel()[i]!r}"
    )


def _tail_rejection(lo: np.ndarray, hi: np.ndarray, rng: RngStream) -> np.ndarray:
    """Standard normal on [lo, hi] with lo > TAIL_THRESHOLD.

    Wide intervals use Robert's translated-exponential proposal; intervals
    narrower than one proposal scale use a uniform proposal instead. Both
    accept with probability bounded away from zero.
    """
    out = np.empty(lo.shape)
    rate = 0.5 * (lo + np.sqrt(lo * lo + 4.0))
    narrow = rate * (hi - lo) < 1.0
    pending = np.arange(lo.size)
    for _ in range(MAX_REJECTION_ROUNDS):
        if pending.size == 0:
            return out
        l, h, r, nw = lo[pending], hi[pending], rate[pending], narrow[pending]
        u = rng.uniform(pending.size)
        prop = np.where(nw, l + (h - l) * rng.uniform(pending.size), l + rng.exponential(pending.size) / r)
        log_acc = np.where(nw, -0.5 * (prop * prop - l * l), -0.5 * (prop - r) ** 2)
        ok = (np.log(u) <= log_acc) & (prop <= h)
        out[pending[ok]] = prop[ok]
        pending = pending[~ok]
    raise RuntimeError("tail rejection sampler failed to terminate")


def sample_truncated_normal(p: TruncNormalParams, rng: RngStream) -> float:
    return float(truncnorm_rvs(p.mean, p.variance, p.lower, p.upper, rng))


def invgamma_rvs(shape, scale, rng: RngStream):
    """Draws from InvGamma(shape, scale), mean scale/(shape - 1)."""
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if not (np.all(shape > 0) and np.all(scale > 0)):
        raise ParameterError(f"inverse-gamma parameters must be positive: shape={shape}, scale={scale}")
    shape, scale = np.broadcast_arrays(shape, scale)
    g = rng.gamma(shape)
    return scale / g


def sample_inverse_gamma(p: InvGammaParams, rng: RngStream) -> float:
    return float(invgamma_rvs(p.shape, p.scale, rng))


def sample_categorical(weights, rng: RngStream) -> int:
    """Index d drawn with probability weights[d] (0-based)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError(f"categorical weights must be finite and nonnegative: {w}")
    total = w.sum()
    if total <= 0:
        raise ParameterError("categorical weights are all zero")
    cdf = np.cumsum(w / total)
    idx = int(np.searchsorted(cdf, rng.uniform() * cdf[-1], side="right"))
    return min(idx, w.size - 1)


def categorical_rows(weights: np.ndarray, rng: RngStream) -> np.ndarray:
    """One categorical draw per row of a nonnegative weight matrix."""
    cdf = np.cumsum(weights, axis=1)
    u = rng.uniform(weights.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


def truncnorm_logpdf(x, mean, variance, lower=-math.inf, upper=math.inf):
    """Vectorized log density of the normalized truncated normal."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    sd = np.sqrt(variance)
    a = (np.asarray(lower, dtype=float) - mean) / sd
    b = (np.asarray(upper, dtype=float) - mean) / sd
    r = (x - mean) / sd
    dens = -LOG_SQRT_2PI - np.log(sd) - 0.5 * r * r - _log_interval_mass(a, b)
    inside = (x >= lower) & (x <= upper)
    return np.where(inside, dens, -np.inf)


def log_density_truncated_normal(x: float, p: TruncNormalParams) -> float:
    return float(truncnorm_logpdf(x, p.mean, p.variance, p.lower, p.upper))


def invgamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x
    return np.where(x > 0, out, -np.inf)


def normal_cdf(x):
    return ndtr(x)


def normal_quantile(p):
    return ndtri(p)
