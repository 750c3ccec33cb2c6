"""Command-line interface: fit, predict, simulate, loocv, bench, diag.

Settings come from built-in defaults, then an optional JSON config file
(``--config``), then explicit flags. Every run writes a manifest next to its
primary output recording the package version, seed and a hash of the
effective configuration.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BLR_PRIOR_SCALE, PLS_COMPONENTS, fit_blr, fit_pls, predict_blr, predict_pls
from .bench import METHODS, coverage_rate, error_table, run_bench
from .diagnostics import ERROR_COLUMNS, FIG4_COLUMNS, TABLE2_PARAMS, ErrorTable, chain_ess, loocv
from .io import load_chain, read_dataset, save_chain, write_csv, write_dataset, write_json
from .model import DataError, UnknownDoseError, UsageError
from .predict import sample_predictive
from .sampler import SamplerConfig, fit
from .simulate import ScenarioConfig, generate
from .stats import ParameterError, RngStream

logger = logging.getLogger("multimarker")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FINGERPRINT = 4
EXIT_NUMERIC = 5


class FingerprintError(Exception):
    """Chain and data (or scaling choice) do not belong together."""


# defaults for every configurable key; flags use None to mean "not given"
DEFAULTS = {
    "seed": 0,
    "iters": 30000,
    "burn": 6000,
    "thin": 1,
    "jobs": 1,
    "scale": None,
    "kappa": 2.0,
    "levels": None,
    "method": "multimarker",
    "mode": "replay",
    "mh_step_gamma": 0.5,
    "mh_step_eta": 0.1,
    "adapt_window": 100,
    "stochastic_allocation": False,
    "blr_prior_scale": BLR_PRIOR_SCALE,
    "pls_components": PLS_COMPONENTS,
    # simulation
    "n": 99,
    "D": 3,
    "P": 4,
    "range": "medium",
    "scenario": "S1",
    "increments": "stable",
    "theta": "low",
    "study": "I",
    "Dstar": None,
    "replicates": 5,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multimarker", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sampler=True):
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.add_argument("--config", type=Path, help="JSON file of settings; flags override it")
        sp.add_argument("--seed", type=int)
        if sampler:
            sp.add_argument("--iters", type=int, help="total iterations (default 30000)")
            sp.add_argument("--burn", type=int, help="burn-in iterations (default 6000)")
            sp.add_argument("--thin", type=int)
            sp.add_argument("--kappa", type=float)
            sp.add_argument("--scale", dest="scale", action="store_true", default=None,
                            help="standardize-and-shift biomarker columns before fitting")
            sp.add_argument("--no-scale", dest="scale", action="store_false")
            sp.add_argument("--stochastic-allocation", action="store_true", default=None)

    sp = sub.add_parser("fit", help="run the sampler on intervention data")
    common(sp)
    sp.add_argument("--train", type=Path, required=True)
    sp.add_argument("--levels", type=str, help="comma-separated food-quantity levels")
    sp.add_argument("--chain", type=Path, required=True, help="output chain directory")
    sp.add_argument("--save-latent", action="store_true", help="also store intake/allocation draws")

    sp = sub.add_parser("predict", help="infer intake for biomarker-only data")
    common(sp)
    sp.add_argument("--chain", type=Path)
    sp.add_argument("--data", type=Path, required=True)
    sp.add_argument("--train", type=Path, help="training data (fingerprint check; required by baselines and conditional mode)")
    sp.add_argument("--levels", type=str)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--method", choices=METHODS)
    sp.add_argument("--mode", choices=("replay", "conditional"))
    sp.add_argument("--draws-out", type=Path, help="optional long-format CSV of every predictive draw")

    sp = sub.add_parser("simulate", help="generate a simulated train/test pair")
    common(sp, sampler=False)
    _scenario_flags(sp)
    sp.add_argument("--out", type=Path, required=True, help="output directory")

    sp = sub.add_parser("loocv", help="leave-one-out cross validation")
    common(sp)
    sp.add_argument("--train", type=Path, required=True)
    sp.add_argument("--levels", type=str)
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("bench", help="replicated simulation study with all methods")
    common(sp)
    _scenario_flags(sp, multi=True)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--out", type=Path, required=True, help="output directory")
    sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("diag", help="effective sample sizes and traces of a saved chain")
    common(sp, sampler=False)
    sp.add_argument("--chain", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True, help="ESS CSV")
    sp.add_argument("--trace", type=Path, help="optional long-format trace CSV")
    return p


def _scenario_flags(sp, multi=False):
    sp.add_argument("--n", type=int)
    sp.add_argument("--D", type=int)
    sp.add_argument("--P", type=int)
    sp.add_argument("--range", choices=("small", "medium", "large"))
    sp.add_argument("--scenario", help="S1, S2 or S3" + (" (comma-separated list allowed)" if multi else ""))
    sp.add_argument("--increments", choices=("stable", "increasing", "decreasing"))
    sp.add_argument("--theta", choices=("low", "high"))
    sp.add_argument("--study", choices=("I", "II", "III", "varyingX", "uniform", "unbalanced"))
    sp.add_argument("--Dstar", type=int)


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        cfg.update(loaded)
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def _sampler_config(s: dict) -> SamplerConfig:
    return SamplerConfig(
        n_iter=int(s["iters"]),
        n_burn=int(s["burn"]),
        thin=int(s["thin"]),
        mh_step_gamma=float(s["mh_step_gamma"]),
        mh_step_eta=float(s["mh_step_eta"]),
        adapt_window=int(s["adapt_window"]),
        seed=int(s["seed"]),
        stochastic_allocation=bool(s["stochastic_allocation"]),
    )


def _levels(s: dict):
    lv = s.get("levels")
    if lv is None:
        return None
    if isinstance(lv, str):
        lv = [float(v) for v in lv.split(",") if v.strip()]
    return np.asarray(lv, dtype=float)


def _scenario(s: dict, variance_scenario: str | None = None) -> ScenarioConfig:
    return ScenarioConfig(
        n=int(s["n"]),
        D=int(s["D"]),
        P=int(s["P"]),
        biomarker_range=s["range"],
        variance_scenario=variance_scenario or s["scenario"],
        increments=s["increments"],
        theta_setting=s["theta"],
        study=s["study"],
        Dstar=s["Dstar"],
        seed=int(s["seed"]),
    )


def _manifest(path: Path, command: str, s: dict, extra: dict | None = None) -> None:
    blob = json.dumps(s, sort_keys=True, default=str).encode()
    man = {
        "version": __version__,
        "command": command,
        "seed": s["seed"],
        "config": json.loads(json.dumps(s, default=str)),
        "config_hash": hashlib.sha256(blob).hexdigest(),
    }
    if extra:
        man.update(extra)
    write_json(path, man)


# --- subcommands -------------------------------------------------------------------

def cmd_fit(args, s) -> int:
    data = read_dataset(args.train, _levels(s))
    if not data.has_doses:
        raise UsageError("fit needs a dose column in the training data")
    cfg = _sampler_config(s)
    cfg.keep_latent = bool(args.save_latent)
    logger.info("fitting n=%d P=%d D=%d, %d iterations (%d burn-in)", data.n, data.P, data.D, cfg.n_iter, cfg.n_burn)
    chain = fit(data, cfg, scale=bool(s["scale"]), kappa=float(s["kappa"]))
    save_chain(chain, args.chain)
    d = chain.diagnostics
    logger.info("acceptance: gamma %.3f, eta %.3f", d.acceptance_gamma, d.acceptance_eta)
    return EXIT_OK


def _prediction_rows(method, results_or_preds, D):
    rows = []
    if method == "multimarker":
        for j, r in enumerate(results_or_preds):
            rows.append([j + 1, method, r.median, r.ci95[0], r.ci95[1], *r.component_freq.tolist()])
    else:
        med, lo, hi = results_or_preds
        for j in range(med.size):
            rows.append([j + 1, method, float(med[j]), float(lo[j]), float(hi[j])] + [""] * D)
    return rows


def cmd_predict(args, s) -> int:
    method = s["method"]
    levels = _levels(s)
    if method == "multimarker":
        if args.chain is None:
            raise UsageError("--chain is required for the multimarker method")
        chain = load_chain(args.chain)
        levels = chain.X
        if s["scale"] is not None and bool(s["scale"]) != (chain.scaler is not None):
            raise FingerprintError(
                f"chain was fitted {'with' if chain.scaler is not None else 'without'} biomarker scaling "
                f"but prediction requested {'with' if s['scale'] else 'without'} it"
            )
        train = None
        if args.train is not None:
            try:
                train = read_dataset(args.train, levels)
            except UnknownDoseError:
                raise FingerprintError(f"{args.train} has doses outside the chain's levels {levels.tolist()}") from None
            if train.fingerprint() != chain.fingerprint:
                raise FingerprintError(f"{args.train} is not the dataset this chain was fitted on")
        data = read_dataset(args.data, levels)
        if s["mode"] == "conditional" and train is None:
            raise UsageError("conditional mode needs --train")
        preds = sample_predictive(data.Y, chain, RngStream(int(s["seed"])), mode=s["mode"], train=train)
        D = chain.D
        rows = _prediction_rows(method, preds, D)
        if args.draws_out is not None:
            draw_rows = []
            for j, r in enumerate(preds):
                for k, (z, c) in enumerate(zip(r.draws, r.component_draws)):
                    draw_rows.append([j + 1, k + 1, float(z), int(c) + 1])
            write_csv(args.draws_out, ["obs", "draw", "z", "component"], draw_rows)
    else:
        if args.train is None:
            raise UsageError(f"--train is required for the {method} method")
        train = read_dataset(args.train, levels)
        data = read_dataset(args.data, train.X)
        D = train.D
        if method == "blr":
            out = predict_blr(fit_blr(train, float(s["blr_prior_scale"])), data.Y)
        else:
            out = predict_pls(fit_pls(train, int(s["pls_components"])), data.Y)
        rows = _prediction_rows(method, out, D)
    header = ["obs", "method", "median", "ci_low", "ci_high"] + [f"p_comp_{d + 1}" for d in range(D)]
    write_csv(args.out, header, rows)
    _manifest(Path(str(args.out) + ".manifest.json"), "predict", s)
    return EXIT_OK


def cmd_simulate(args, s) -> int:
    sc = _scenario(s)
    pair = generate(sc)
    out = args.out
    write_dataset(out / "train.csv", pair.train)
    write_dataset(out / "test.csv", pair.test)
    t = pair.truth
    rows = [["train", i + 1, float(z), int(c) + 1] for i, (z, c) in enumerate(zip(t.z_train, t.c_train))]
    rows += [["test", i + 1, float(z), int(c) + 1 if c >= 0 else ""] for i, (z, c) in enumerate(zip(t.z_test, t.c_test))]
    write_csv(out / "truth.csv", ["split", "obs", "z", "component"], rows)
    params = [["alpha", p + 1, float(v)] for p, v in enumerate(t.alpha)]
    params += [["beta", p + 1, float(v)] for p, v in enumerate(t.beta)]
    params += [["sigma2", p + 1, float(v)] for p, v in enumerate(t.sigma2)]
    params += [["X", d + 1, float(v)] for d, v in enumerate(pair.train.X)]
    params += [["theta2", d + 1, float(v)] for d, v in enumerate(t.theta2)]
    if t.X_test is not None:
        params += [["X_test", d + 1, float(v)] for d, v in enumerate(t.X_test)]
    write_csv(out / "truth_parameters.csv", ["parameter", "index", "value"], params)
    _manifest(out / "manifest.json", "simulate", s, {"scenario": sc.to_dict()})
    return EXIT_OK


def cmd_loocv(args, s) -> int:
    data = read_dataset(args.train, _levels(s))
    if not data.has_doses:
        raise UsageError("loocv needs a dose column")
    cfg = _sampler_config(s)
    logger.info("cross validation: %d folds with %d iterations each, %d job(s)", data.n, cfg.n_iter, int(s["jobs"]))
    res = loocv(data, cfg, scale=bool(s["scale"]), kappa=float(s["kappa"]), jobs=int(s["jobs"]))
    out = args.out
    write_csv(out / "loocv_observations.csv", FIG4_COLUMNS, res.observation_rows())
    med, lo, hi = res.overall()
    dose_rows = res.dose_rows() + [["all", len(res.folds), float(np.median(np.abs(res.differences)))]]
    write_csv(out / "loocv_doses.csv", ["dose", "n", "median_abs_difference"], dose_rows)
    write_csv(out / "loocv_overall.csv", ["median_difference", "ci_low", "ci_high"], [[med, lo, hi]])
    write_csv(
        out / "loocv_parameters.csv",
        ["data", "dimension"] + [f"{p}_{'p' if p in ('alpha', 'beta', 'sigma') else 'd'}" for p in TABLE2_PARAMS],
        res.parameter_rows(),
    )
    _manifest(out / "manifest.json", "loocv", s)
    return EXIT_OK


def cmd_bench(args, s) -> int:
    cfg = _sampler_config(s)
    scenarios = [v.strip() for v in str(s["scenario"]).split(",") if v.strip()]
    table = ErrorTable()
    cover = []
    for sc_name in scenarios:
        sc = _scenario(s, sc_name)
        results = run_bench(sc, cfg, int(s["replicates"]), jobs=int(s["jobs"]))
        error_table(results, table)
        cover.append([sc.study, sc_name, coverage_rate(results)])
    out = args.out
    write_csv(out / "errors.csv", ERROR_COLUMNS, table.as_records())
    (out / "errors.txt").write_text(table.to_text(), encoding="utf-8")
    write_csv(out / "coverage.csv", ["study", "scenario", "alpha_beta_coverage95"], cover)
    _manifest(out / "manifest.json", "bench", s)
    return EXIT_OK


def cmd_diag(args, s) -> int:
    chain = load_chain(args.chain)
    ess = chain_ess(chain)
    rows = []
    for name, values in ess.items():
        for j, v in enumerate(values):
            rows.append([name, j + 1, float(v), len(chain)])
    write_csv(args.out, ["parameter", "index", "ess", "n_draws"], rows)
    if args.trace is not None:
        trace = []
        for name, arr in chain.draws.items():
            flat = arr.reshape(arr.shape[0], -1)
            for j in range(flat.shape[1]):
                for k in range(flat.shape[0]):
                    trace.append([name, j + 1, k + 1, flat[k, j]])
        write_csv(args.trace, ["parameter", "index", "draw", "value"], trace)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "loocv": cmd_loocv,
    "bench": cmd_bench,
    "diag": cmd_diag,
}


def dispatch(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = _settings(args)
        return COMMANDS[args.command](args, settings)
    except FingerprintError as exc:
        return _fail("fingerprint", exc, EXIT_FINGERPRINT)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except (ParameterError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except (ValueError, OSError) as exc:
        return _fail("input", exc, EXIT_FAILURE)


def _fail(category: str, exc: Exception, code: int) -> int:
    print(f"error[{category}]: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
