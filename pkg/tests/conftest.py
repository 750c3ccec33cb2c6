import json
from pathlib import Path

import numpy as np
import pytest

from multimarker.model import Dataset
from multimarker.simulate import ScenarioConfig, generate

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def s1_pair():
    return generate(ScenarioConfig(seed=5, variance_scenario="S1"))


@pytest.fixture
def toy_data():
    rng = np.random.default_rng(0)
    X = np.array([50.0, 100.0, 300.0])
    c = np.repeat([0, 1, 2], 10)
    z = X[c] + rng.normal(0, 5, c.size)
    Y = np.abs(np.column_stack([1 + 0.02 * z, 2 + 0.01 * z, 0.5 + 0.03 * z]) + rng.normal(0, 0.2, (c.size, 3)))
    return Dataset(Y=Y, X=X, x=X[c])


APPLE_ITERS = 10000
APPLE_BURN = 2000
# sd of intakes around each dose in the synthetic apple-like generator
APPLE_INTAKE_SD = 15.0


@pytest.fixture(scope="session")
def apple_loocv(tmp_path_factory):
    """Full CLI cross validation of the 86x4 apple-like dataset; run once per session."""
    import time

    from multimarker.cli import dispatch
    from multimarker.io import write_dataset
    from multimarker.simulate import apple_like

    root = tmp_path_factory.mktemp("apple")
    write_dataset(root / "apple.csv", apple_like())
    start = time.perf_counter()
    code = dispatch([
        "loocv", "--train", str(root / "apple.csv"), "--out", str(root / "out"),
        "--iters", str(APPLE_ITERS), "--burn", str(APPLE_BURN), "--seed", "86",
    ])
    return {"code": code, "elapsed": time.perf_counter() - start, "out": root / "out"}


METRICS_PATH = Path(__file__).resolve().parent.parent / "acceptance_metrics.json"


@pytest.fixture(scope="session")
def metrics():
    """Measured acceptance quantities, merged into acceptance_metrics.json at session end."""
    found = {}
    yield found
    if found:
        merged = json.loads(METRICS_PATH.read_text()) if METRICS_PATH.exists() else {}
        merged.update(found)
        METRICS_PATH.write_text(json.dumps(merged, indent=2, sort_keys=True) + "\n")
