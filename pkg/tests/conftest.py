import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mines.evaluation import evaluate  # noqa: E402
from mines.kg_store import synthesize_dataset  # noqa: E402
from mines.training import TrainConfig, train  # noqa: E402

_RUNS = {}


@pytest.fixture(scope="session")
def planted():
    """The 200/100-entity planted-rule dataset used by the end-to-end checks."""
    return synthesize_dataset(0, n_entities=200)


@pytest.fixture(scope="session")
def planted_run(planted):
    """Train and evaluate one (spec, mode) configuration with k=2 and default hyperparameters; cached."""

    def run(spec="RGR", mode="neighbor_enhanced"):
        key = (spec, mode)
        if key not in _RUNS:
            cfg = TrainConfig(k=2, spec=spec, subgraph_mode=mode, seed=0)
            start = time.perf_counter()
            stack, history = train(planted.train, planted.valid, cfg)
            report = evaluate(stack, planted.test, planted.test_targets, mode, seed=0)
            _RUNS[key] = (stack, history, report, time.perf_counter() - start)
        return _RUNS[key]

    return run
