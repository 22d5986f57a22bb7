import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chronospike.config import TrainConfig
from chronospike.datagen import GenConfig, write_dataset
from chronospike.graph import SnapshotSequence, load_snapshots

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# lines collected by the acceptance suite and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def toy_sequence(num_nodes=5, steps=3, d_in=3, seed=0, classes=2) -> SnapshotSequence:
    """Small random dynamic graph with every node labelled."""
    rng = np.random.default_rng(seed)
    edges = []
    for _ in range(steps):
        pairs = [(u, v) for u in range(num_nodes) for v in range(u + 1, num_nodes)
                 if rng.random() < 0.5]
        edges.append(np.array(pairs, dtype=np.int64).reshape(-1, 2))
    feats = rng.normal(size=(steps, num_nodes, d_in))
    labels = np.arange(num_nodes) % classes
    nodes = np.arange(num_nodes)
    return SnapshotSequence(num_nodes, edges, feats, labels,
                            {"train": nodes, "val": nodes, "test": nodes})


def tiny_config(**kw) -> TrainConfig:
    base = dict(hidden=(8, 4), fanouts=(3, 2), heads=2, temporal_heads=2, t_max=8,
                batch_size=16, epochs=3, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def toy_seq():
    return toy_sequence()


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def planted_dir(tmp_path_factory):
    """Default synthetic dataset written to disk once per session."""
    out = tmp_path_factory.mktemp("planted")
    write_dataset(GenConfig(), str(out))
    return str(out)


@pytest.fixture(scope="session")
def planted_seq(planted_dir):
    return load_snapshots(planted_dir)


@pytest.fixture(scope="session")
def planted_run(planted_seq, tmp_path_factory):
    """Default-config training run on the default dataset, 30 epochs.

    Yields ``(result, run directory, wall seconds)``.
    """
    import time

    from chronospike.training import train

    out = tmp_path_factory.mktemp("run_a")
    t0 = time.perf_counter()
    res = train(planted_seq, TrainConfig(epochs=30), str(out))
    return res, str(out), time.perf_counter() - t0
