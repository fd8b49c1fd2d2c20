"""Shared fixtures: a few simulated records and one small experiment.

Everything here is deterministic, so the fixtures are session-scoped and
safe to share across test modules.
"""

from __future__ import annotations

import pytest

from bpbench.experiment import ExperimentConfig, run_experiment
from bpbench.simulator import SubjectParams, simulate_measurement


@pytest.fixture(scope="session")
def clean_record():
    """Noise-free measurement used by the detector-semantics tests."""
    return simulate_measurement(SubjectParams(124.0, 76.0, 66.0), noise_rms=0.0, seed=3)


@pytest.fixture(scope="session")
def noisy_record():
    """Same subject under the default noise level."""
    return simulate_measurement(SubjectParams(124.0, 76.0, 66.0), noise_rms=0.05, seed=11)


@pytest.fixture(scope="session")
def tiny_result():
    """A small but real experiment shared by pipeline and report tests."""
    cfg = ExperimentConfig(
        subjects=(SubjectParams(118.0, 79.0, 72.0), SubjectParams(135.0, 85.0, 60.0)),
        repeats=2,
        noise_rms=0.03,
        seed=99,
    )
    return run_experiment(cfg)
