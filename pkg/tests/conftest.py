"""Shared fixtures: one synthetic corpus and one trained model pair per
session, so the expensive pieces happen once."""

import time

import numpy as np
import pytest

from snowpar import Hyperparams, build_training_set, train
from snowpar.constraints import ThresholdSpec
from snowpar.pipeline import engineer_features
from snowpar.synthetic import generate_corpus

HELD_OUT = "s05"

# verdict lines appended by the acceptance tests, echoed after the run
ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(n_sites=5, seed=0, n_days=730)


@pytest.fixture(scope="session")
def trained(corpus):
    """Depth model trained on four sites with the reference defaults,
    holding out one site; training wall time is recorded for the envelope
    checks."""
    tables = {s: df for s, df in corpus.items() if s != HELD_OUT}
    eng = engineer_features(tables, N=1, target="z")
    ts = build_training_set(eng.X, eng.y, eng.site, eng.feature_names)
    hp = Hyperparams(N=1, n=4, n1=2.0, n2=4.0, batch_size=64, epochs=100,
                     learning_rate=1e-3, seed=0)
    t0 = time.perf_counter()
    result = train(ts, hp)
    elapsed = time.perf_counter() - t0
    return {"model": result.model, "result": result, "training_set": ts,
            "train_seconds": elapsed, "held_out": HELD_OUT, "hp": hp,
            "engineered": eng}


@pytest.fixture(scope="session")
def trained_swe(corpus, trained):
    """Water equivalent model sharing the depth model's feature scaling."""
    tables = {s: df for s, df in corpus.items() if s != HELD_OUT}
    eng = engineer_features(tables, N=1, target="swe")
    scale_x = trained["training_set"].scale_x
    scale_y = float(np.abs(eng.y).max())
    ts = build_training_set(eng.X, eng.y, eng.site, eng.feature_names,
                            scales=(scale_x, scale_y))
    hp = Hyperparams(N=1, n=5, n1=2.0, n2=2.0, batch_size=64, epochs=100,
                     learning_rate=1e-3, seed=0)
    result = train(ts, hp, ThresholdSpec(state_index=1))
    return {"model": result.model, "training_set": ts, "hp": hp}
