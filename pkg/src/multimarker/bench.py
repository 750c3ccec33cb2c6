"""Replicated simulation benchmarks scored against generator truth."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import fit_blr, fit_pls, predict_blr, predict_pls
from .diagnostics import ErrorTable
from .predict import sample_predictive
from .sampler import SamplerConfig, fit
from .simulate import ScenarioConfig, generate
from .stats import RngStream

METHODS = ("multimarker", "blr", "pls")


@dataclass
class ReplicateResult:
    replicate: int
    scenario: ScenarioConfig
    # method -> phase ("E" train, "I" test) -> (true, estimate)
    estimates: dict
    # parameter -> (truth, lower, upper) for 95% credible intervals
    coverage: dict


def replicate_seed(seed: int, replicate: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(replicate,)).generate_state(1, np.uint64)[0])


def run_replicate(scenario: ScenarioConfig, cfg: SamplerConfig, replicate: int, methods=METHODS) -> ReplicateResult:
    sc = replace(scenario, seed=replicate_seed(scenario.seed, replicate))
    pair = generate(sc)
    t = pair.truth
    est = {}
    cov = {}
    if "multimarker" in methods:
        rng = RngStream(cfg.seed, key=(replicate,))
        chain = fit(pair.train, replace(cfg, keep_latent=True), rng=rng.child(0))
        pred = sample_predictive(pair.test.Y, chain, rng.child(1), keep_draws=False)
        est["multimarker"] = {
            "E": (t.z_train, chain.median("z")),
            "I": (t.z_test, np.array([r.median for r in pred])),
        }
        for name in ("alpha", "beta"):
            lo, hi = chain.interval(name)
            cov[name] = (getattr(t, name), lo, hi)
    if "blr" in methods:
        m = fit_blr(pair.train)
        est["blr"] = {"E": (t.z_train, predict_blr(m, pair.train.Y)[0]), "I": (t.z_test, predict_blr(m, pair.test.Y)[0])}
    if "pls" in methods:
        m = fit_pls(pair.train)
        est["pls"] = {"E": (t.z_train, predict_pls(m, pair.train.Y)[0]), "I": (t.z_test, predict_pls(m, pair.test.Y)[0])}
    return ReplicateResult(replicate=replicate, scenario=sc, estimates=est, coverage=cov)


def _task(args):
    return run_replicate(*args)


def run_bench(
    scenario: ScenarioConfig,
    cfg: SamplerConfig,
    replicates: int,
    *,
    methods=METHODS,
    jobs: int = 1,
) -> list[ReplicateResult]:
    tasks = [(scenario, cfg, r, tuple(methods)) for r in range(replicates)]
    if jobs > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_task, tasks))
    else:
        out = [_task(t) for t in tasks]
    return sorted(out, key=lambda r: r.replicate)


def error_table(results: list[ReplicateResult], table: ErrorTable | None = None) -> ErrorTable:
    """Pool absolute errors over replicates into one row per method and phase."""
    table = table if table is not None else ErrorTable()
    if not results:
        return table
    sc = results[0].scenario
    for method in METHODS:
        for phase in ("E", "I"):
            pairs = [r.estimates[method][phase] for r in results if method in r.estimates]
            if not pairs:
                continue
            truth = np.concatenate([p[0] for p in pairs])
            est = np.concatenate([p[1] for p in pairs])
            table.add(sc.study, sc.variance_scenario, method, phase, truth, est)
    return table


def coverage_rate(results: list[ReplicateResult], names=("alpha", "beta")) -> float:
    hits = []
    for r in results:
        for name in names:
            truth, lo, hi = r.coverage[name]
            hits.append((truth >= lo) & (truth <= hi))
    return float(np.mean(np.concatenate(hits)))
