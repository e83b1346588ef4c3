"""Shared fixtures: tiny architectures and small synthetic datasets.

The full classifier is expensive to train, so most tests run on scaled
down stacks with the same layer kinds; the acceptance tests exercise the
real one.
"""

import numpy as np
import pytest

from lesionscan import dataset as dataset_mod
from lesionscan import network as network_mod
from lesionscan.network import LayerSpec, NetworkSpec

# One line per acceptance criterion, filled in by tests/test_acceptance.py.
# Echoed in the terminal summary because pytest's fd capture would otherwise
# swallow prints from passing tests.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def tiny_spec(dropout_rate: float = 0.0) -> NetworkSpec:
    """An 8x8x2 stack with one of every layer kind; ~100x faster than the real one."""
    rows = (
        LayerSpec("conv", filters=3, activation="relu"),
        LayerSpec("pool"),
        LayerSpec("flatten"),
        LayerSpec("dropout", rate=dropout_rate),
        LayerSpec("dense", units=4, activation="relu"),
        LayerSpec("dense", units=1, activation="sigmoid"),
    )
    return NetworkSpec(input_shape=(8, 8, 2), layers=rows)


@pytest.fixture
def tiny_net():
    return network_mod.build_network(tiny_spec(), seed=42)


@pytest.fixture(scope="session")
def small_synth():
    """60 balanced synthetic patches, reused across tests (read-only)."""
    return dataset_mod.synth_patches(60, 0.5, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
