import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rolling_hand.config import ExperimentConfig
from rolling_hand.trajopt import build_problem, solve

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def scene(config):
    return config.scene()


class PlanCache:
    """Nominal plans keyed by goal rotation, solved once per session."""

    def __init__(self, config):
        self.config = config
        self._plans = {}

    def __call__(self, rotation: float = 0.4):
        key = round(float(rotation), 6)
        if key not in self._plans:
            cfg = self.config
            nlp = build_problem(cfg.scene(), replace(cfg.trajopt, goal_rotation=key))
            self._plans[key] = solve(nlp)
        return self._plans[key]


@pytest.fixture(scope="session")
def plans(config):
    return PlanCache(config)


@pytest.fixture(scope="session")
def plan(plans):
    return plans(0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
