"""Effective sample size, absolute-error summaries and leave-one-out CV."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .model import Dataset, UsageError
from .predict import sample_predictive
from .sampler import PosteriorChain, SamplerConfig, fit
from .stats import RngStream

logger = logging.getLogger(__name__)

MIN_ESS_DRAWS = 100


class DegenerateChainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EssResult:
    ess: float
    degenerate: bool


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    m = next_fast_len(2 * n)
    f = rfft(xc, m)
    acov = irfft(f * np.conj(f), m)[:n]
    return acov / acov[0]


def ess_with_flag(draws) -> EssResult:
    """Geyer initial-positive-sequence ESS, capped at the chain length."""
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < MIN_ESS_DRAWS:
        raise ValueError(f"ESS needs at least {MIN_ESS_DRAWS} draws, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain contains non-finite values")
    if np.ptp(x) == 0 or x.var() <= 1e-300:
        return EssResult(float(n), True)
    rho = _autocorrelation(x)
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    nonpos = np.flatnonzero(pairs <= 0)
    stop = nonpos[0] if nonpos.size else n_pairs
    tau = -1.0 + 2.0 * pairs[:stop].sum()
    ess = n / tau if tau > 0 else float(n)
    return EssResult(float(min(ess, n)), False)


def effective_sample_size(draws) -> float:
    res = ess_with_flag(draws)
    if res.degenerate:
        warnings.warn("constant chain: ESS reported as the chain length", DegenerateChainWarning, stacklevel=2)
    return res.ess


def chain_ess(chain: PosteriorChain) -> dict[str, np.ndarray]:
    """ESS of every scalar coordinate of every stored parameter."""
    out = {}
    for name, arr in chain.draws.items():
        if name == "c":
            continue
        flat = arr.reshape(arr.shape[0], -1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateChainWarning)
            out[name] = np.array([effective_sample_size(flat[:, j]) for j in range(flat.shape[1])])
    return out


# --- error tables -------------------------------------------------------------

def error_summary(true_z, est_z) -> tuple[float, float]:
    """Median absolute error and the 2.5-97.5% interval width of absolute errors."""
    t = np.asarray(true_z, dtype=float).ravel()
    e = np.asarray(est_z, dtype=float).ravel()
    if t.shape != e.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {e.size} estimated values")
    if t.size == 0:
        raise ValueError("no values to summarize")
    err = np.abs(t - e)
    q = np.quantile(err, [0.025, 0.5, 0.975])
    return float(q[1]), float(q[2] - q[0])


ERROR_COLUMNS = ("study", "scenario", "method", "phase", "median", "width95", "n")


@dataclass
class ErrorTable:
    rows: list[dict] = field(default_factory=list)

    def add(self, study: str, scenario: str, method: str, phase: str, true_z, est_z) -> None:
        med, width = error_summary(true_z, est_z)
        self.rows.append(
            {
                "study": study,
                "scenario": scenario,
                "method": method,
                "phase": phase,
                "median": med,
                "width95": width,
                "n": int(np.size(true_z)),
            }
        )

    def lookup(self, **key) -> dict:
        hits = [r for r in self.rows if all(r[k] == v for k, v in key.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {key}")
        return hits[0]

    def as_records(self) -> list[list]:
        return [[r[c] for c in ERROR_COLUMNS] for r in self.rows]

    def to_text(self) -> str:
        """Aligned 'median (width)' grid: rows method/phase, columns study/scenario."""
        cols = sorted({(r["study"], r["scenario"]) for r in self.rows})
        rows = sorted({(r["method"], r["phase"]) for r in self.rows}, key=lambda k: (k[1], k[0]))
        cells = {(r["method"], r["phase"], r["study"], r["scenario"]): r for r in self.rows}
        header = ["method", "phase"] + [f"{s}/{sc}" for s, sc in cols]
        body = []
        for m, ph in rows:
            line = [m, ph]
            for s, sc in cols:
                r = cells.get((m, ph, s, sc))
                line.append("-" if r is None else f"{r['median']:.0f} ({r['width95']:.0f})")
            body.append(line)
        widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        return "\n".join(fmt.format(*line).rstrip() for line in [header] + body) + "\n"


# --- leave-one-out cross validation -----------------------------------------------

FIG4_COLUMNS = ("obs", "dose", "median", "ci_low", "ci_high", "difference", "diff_ci_low", "diff_ci_high")
TABLE2_PARAMS = ("alpha", "beta", "sigma", "theta")


@dataclass
class FoldResult:
    index: int
    median: float
    ci95: tuple[float, float]
    component_freq: np.ndarray
    summaries: dict  # parameter -> (medians, ci widths)


@dataclass
class LoocvResult:
    folds: list[FoldResult]
    doses: np.ndarray
    X: np.ndarray
    full_summaries: dict | None = None

    def observation_rows(self) -> list[list]:
        out = []
        for f in self.folds:
            dose = float(self.doses[f.index])
            lo, hi = f.ci95
            out.append([f.index + 1, dose, f.median, lo, hi, f.median - dose, lo - dose, hi - dose])
        return out

    @property
    def differences(self) -> np.ndarray:
        return np.array([f.median - self.doses[f.index] for f in self.folds])

    def dose_rows(self) -> list[list]:
        """Per dose: count and median absolute difference; then an overall row."""
        diff = self.differences
        doses = np.array([self.doses[f.index] for f in self.folds])
        rows = []
        for X_d in self.X:
            m = doses == X_d
            if m.any():
                rows.append([float(X_d), int(m.sum()), float(np.median(np.abs(diff[m])))])
        return rows

    def overall(self) -> tuple[float, float, float]:
        """Median difference and its central 95% interval across observations."""
        q = np.quantile(self.differences, [0.5, 0.025, 0.975])
        return float(q[0]), float(q[1]), float(q[2])

    def parameter_rows(self) -> list[list]:
        """Table of 'median (CI width)' per dimension for alpha, beta, sigma, theta.

        ``full`` rows summarize the fit on all observations; ``loocv`` rows
        average the per-fold posterior medians and CI widths.
        """
        blocks = []
        if self.full_summaries is not None:
            blocks.append(("full", self.full_summaries))
        avg = {}
        for name in TABLE2_PARAMS:
            meds = np.mean([f.summaries[name][0] for f in self.folds], axis=0)
            widths = np.mean([f.summaries[name][1] for f in self.folds], axis=0)
            avg[name] = (meds, widths)
        blocks.append(("loocv", avg))
        rows = []
        for label, summ in blocks:
            dims = max(len(summ[name][0]) for name in TABLE2_PARAMS)
            for k in range(dims):
                row = [label, k + 1]
                for name in TABLE2_PARAMS:
                    meds, widths = summ[name]
                    row.append(f"{meds[k]:.3f} ({widths[k]:.3f})" if k < len(meds) else "-")
                rows.append(row)
        return rows


def parameter_summaries(chain: PosteriorChain) -> dict:
    """Posterior medians and 95% CI widths of intercepts, slopes and noise/component sds."""
    src = {
        "alpha": chain.draws["alpha"],
        "beta": chain.draws["beta"],
        "sigma": np.sqrt(chain.draws["sigma2"]),
        "theta": np.sqrt(chain.draws["theta2"]),
    }
    out = {}
    for name, arr in src.items():
        q = np.quantile(arr, [0.5, 0.025, 0.975], axis=0)
        out[name] = (q[0], q[2] - q[1])
    return out


@dataclass(frozen=True)
class _FoldTask:
    data: Dataset
    index: int
    cfg: SamplerConfig
    scale: bool
    kappa: float


def _run_fold(task: _FoldTask) -> FoldResult:
    data, i, cfg = task.data, task.index, task.cfg
    keep = np.flatnonzero(np.arange(data.n) != i)
    train = data.subset(keep)
    rng = RngStream(cfg.seed, key=(i,))
    chain = fit(train, replace(cfg, keep_latent=False), scale=task.scale, kappa=task.kappa, rng=rng.child(0))
    res = sample_predictive(data.Y[i : i + 1], chain, rng.child(1), keep_draws=False)[0]
    return FoldResult(
        index=i,
        median=res.median,
        ci95=res.ci95,
        component_freq=res.component_freq,
        summaries=parameter_summaries(chain),
    )


def loocv(
    data: Dataset,
    cfg: SamplerConfig,
    *,
    scale: bool = False,
    kappa: float = 2.0,
    jobs: int = 1,
    full_fit: bool = True,
    indices=None,
) -> LoocvResult:
    """Refit without each observation in turn and predict it from biomarkers alone.

    Fold ``i`` uses the random stream keyed by ``(seed, i)``, so results do not
    depend on execution order or on ``jobs``.
    """
    if not data.has_doses:
        raise UsageError("cross validation needs consumed quantities")
    idx = list(range(data.n)) if indices is None else [int(i) for i in indices]
    tasks = [_FoldTask(data, i, cfg, scale, kappa) for i in idx]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            folds = list(ex.map(_run_fold, tasks))
    else:
        folds = [_run_fold(t) for t in tasks]
    folds.sort(key=lambda f: f.index)
    full = None
    if full_fit:
        chain = fit(data, replace(cfg, keep_latent=False), scale=scale, kappa=kappa, rng=RngStream(cfg.seed, key=(data.n + 1,)))
        full = parameter_summaries(chain)
    return LoocvResult(folds=folds, doses=np.asarray(data.x, dtype=float), X=data.X, full_summaries=full)
