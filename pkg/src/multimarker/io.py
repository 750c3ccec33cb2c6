"""CSV and chain-directory persistence.

Dataset CSVs carry a header ``y1..yP`` with an optional ``dose`` column.
A saved chain is a directory holding ``manifest.json`` (format version, seed,
sampler config, hyperparameters, column transform, dataset fingerprint,
Metropolis diagnostics and the final sampler state) and ``draws.csv`` with one
row per retained draw. Floats are written with ``repr`` so files round-trip
exactly and identical runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import BiomarkerScaler, DataError, Dataset, Hyperparameters, ModelState, validate_dataset
from .sampler import PARAM_NAMES, MhDiagnostics, PosteriorChain, SamplerConfig

CHAIN_FORMAT_VERSION = 1
MANIFEST = "manifest.json"
DRAWS = "draws.csv"


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_dataset(path, levels=None) -> Dataset:
    """Load ``y1..yP[,dose]``; levels default to the sorted distinct doses."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    dcol = header.index("dose") if "dose" in header else None
    unknown = [h for i, h in enumerate(header) if i not in ycols and i != dcol]
    if unknown or not ycols:
        raise DataError(f"{path}: expected columns y1..yP[,dose], got {header}")
    try:
        values = np.array([[float(r[i]) for i in range(len(header))] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None
    if values.size == 0:
        raise DataError(f"{path}: no data rows")
    Y = values[:, ycols]
    x = values[:, dcol] if dcol is not None else None
    if levels is None:
        if x is None:
            raise DataError(f"{path}: no dose column; food-quantity levels must be configured")
        levels = np.unique(x)
    return validate_dataset(Y, levels, x)


def write_dataset(path, data: Dataset) -> None:
    header = [f"y{p + 1}" for p in range(data.P)]
    rows = data.Y.tolist()
    if data.has_doses:
        header.append("dose")
        rows = [r + [float(d)] for r, d in zip(rows, data.x)]
    write_csv(path, header, rows)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- chains ------------------------------------------------------------------------

def _columns(chain: PosteriorChain) -> list[tuple[str, str, int | None]]:
    cols = []
    for name in PARAM_NAMES + ("z", "c"):
        if name not in chain.draws:
            continue
        arr = chain.draws[name]
        if arr.ndim == 1:
            cols.append((name, name, None))
        else:
            cols.extend((f"{name}_{j + 1}", name, j) for j in range(arr.shape[1]))
    return cols


def _state_dict(state: ModelState) -> dict:
    return {
        "alpha": state.alpha.tolist(),
        "beta": state.beta.tolist(),
        "sigma2": state.sigma2.tolist(),
        "mu_alpha": float(state.mu_alpha),
        "mu_beta": float(state.mu_beta),
        "sigma_beta2": float(state.sigma_beta2),
        "theta2": state.theta2.tolist(),
        "gamma": state.gamma.tolist(),
        "eta": state.eta.tolist(),
        "z": state.z.tolist(),
        "c": state.c.tolist(),
    }


def _state_from_dict(d: dict) -> ModelState:
    arr = {k: np.asarray(v, dtype=float) for k, v in d.items() if k not in ("c", "mu_alpha", "mu_beta", "sigma_beta2")}
    return ModelState(
        mu_alpha=float(d["mu_alpha"]),
        mu_beta=float(d["mu_beta"]),
        sigma_beta2=float(d["sigma_beta2"]),
        c=np.asarray(d["c"], dtype=np.int64),
        **arr,
    )


def save_chain(chain: PosteriorChain, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cols = _columns(chain)
    manifest = {
        "format_version": CHAIN_FORMAT_VERSION,
        "seed": chain.seed,
        "n_iter": chain.n_iter,
        "n_burn": chain.n_burn,
        "thin": chain.thin,
        "n_draws": len(chain),
        "config": chain.config.to_dict(),
        "hyperparameters": chain.hyper.to_dict(),
        "X": chain.X.tolist(),
        "fingerprint": chain.fingerprint,
        "scaler": None if chain.scaler is None else chain.scaler.to_dict(),
        "diagnostics": None if chain.diagnostics is None else chain.diagnostics.to_dict(),
        "final_state": None if chain.final_state is None else _state_dict(chain.final_state),
        "columns": [c[0] for c in cols],
    }
    write_json(directory / MANIFEST, manifest)
    rows = []
    for k in range(len(chain)):
        row = []
        for _, name, j in cols:
            v = chain.draws[name][k] if j is None else chain.draws[name][k, j]
            row.append(v)
        rows.append(row)
    write_csv(directory / DRAWS, [c[0] for c in cols], rows)
    return directory


def load_chain(directory) -> PosteriorChain:
    directory = Path(directory)
    try:
        with open(directory / MANIFEST, encoding="utf-8") as fh:
            man = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{directory}: not a chain directory (no {MANIFEST})") from None
    if man.get("format_version") != CHAIN_FORMAT_VERSION:
        raise DataError(f"{directory}: unsupported chain format {man.get('format_version')!r}")
    with open(directory / DRAWS, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        table = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    if header != man["columns"]:
        raise DataError(f"{directory}: draws header does not match the manifest")
    table = table.reshape(-1, len(header))
    groups: dict[str, list[int]] = {}
    for i, col in enumerate(header):
        name = col if col in PARAM_NAMES else col.rsplit("_", 1)[0]
        groups.setdefault(name, []).append(i)
    draws = {}
    for name, idx in groups.items():
        scalar = len(idx) == 1 and header[idx[0]] == name
        arr = table[:, idx[0]] if scalar else table[:, idx]
        draws[name] = arr.astype(np.int64) if name == "c" else arr
    diag = man.get("diagnostics")
    return PosteriorChain(
        draws=draws,
        X=np.asarray(man["X"], dtype=float),
        hyper=Hyperparameters.from_dict(man["hyperparameters"]),
        config=SamplerConfig(**man["config"]),
        fingerprint=man["fingerprint"],
        diagnostics=None
        if diag is None
        else MhDiagnostics(
            acceptance_gamma=diag["acceptance_gamma"],
            acceptance_eta=diag["acceptance_eta"],
            step_gamma=np.asarray(diag["step_gamma"]),
            step_eta=np.asarray(diag["step_eta"]),
        ),
        scaler=None if man["scaler"] is None else BiomarkerScaler.from_dict(man["scaler"]),
        final_state=None if man["final_state"] is None else _state_from_dict(man["final_state"]),
    )
