"""Shared models for the test suite."""

import json
import math

import numpy as np
import pytest

from app.utils.primitives import make_renewal
from app.utils.profile import ScaledSystem, SpeedProfile

# lambda = mu = 1, lambda* = 0, mu* = 1: b = -1, sigma^2 = 2, h(u) = e^{-u}
SINGLE_REGION = {"levels": [], "regions": [{"lambda": 1.0, "mu": 1.0, "lambda_star": 0.0, "mu_star": 1.0}]}

# sigma_1^2 = 2 on [0, 1], sigma_2^2 = 4 beyond: h jumps by 1/2 at u = 1
TWO_REGION = {
    "levels": [1.0],
    "regions": [
        {"lambda": 1.0, "mu": 1.0, "lambda_star": 0.0, "mu_star": 1.0},
        {"lambda": 2.0, "mu": 2.0, "lambda_star": 0.0, "mu_star": 2.0},
    ],
}

TWO_REGION_C = 0.5 - math.exp(-1.0) / 4.0


@pytest.fixture
def exponential():
    return make_renewal("exponential")


@pytest.fixture
def single_region():
    return SpeedProfile.from_dict(SINGLE_REGION)


@pytest.fixture
def two_region():
    return SpeedProfile.from_dict(TWO_REGION)


@pytest.fixture
def single_system(single_region, exponential):
    def build(n):
        return ScaledSystem(n=n, profile=single_region, arrival=exponential, service=exponential)

    return build


@pytest.fixture
def two_region_system(two_region, exponential):
    def build(n):
        return ScaledSystem(n=n, profile=two_region, arrival=exponential, service=exponential)

    return build


@pytest.fixture
def fluid_system(exponential):
    profile = SpeedProfile.from_dict({"levels": [], "regions": [{"lambda": 1.0, "mu": 1.2}]})
    return ScaledSystem(n=100, profile=profile, arrival=exponential, service=exponential)


@pytest.fixture
def experiment_document():
    return {
        "model": SINGLE_REGION,
        "arrival": {"kind": "exponential"},
        "service": {"kind": "exponential"},
        "n_list": [25],
        "events": 20000,
        "seed": 7,
        "replications": 1,
        "probes": [0.5, 1.0],
    }


@pytest.fixture
def write_experiment(tmp_path):
    """Write an experiment document to tmp_path and return its path."""

    def write(document, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv("SDQ_WORKERS", "1")


def random_profile(rng):
    """Balanced multi-level profile with a negative tail drift; interior drifts may be positive."""
    levels = np.cumsum(rng.uniform(0.2, 1.0, size=rng.integers(1, 5))).tolist()
    regions = []
    for i in range(len(levels) + 1):
        speed = float(rng.uniform(0.5, 3.0))
        mu_star = float(rng.uniform(0.1, 2.0))
        lambda_star = float(rng.uniform(0.0, 2.0) if i < len(levels) else rng.uniform(0.0, 0.9) * mu_star)
        regions.append({"lambda": speed, "mu": speed, "lambda_star": lambda_star, "mu_star": mu_star})
    return SpeedProfile.from_dict({"levels": levels, "regions": regions})
