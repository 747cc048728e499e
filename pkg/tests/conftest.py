"""Shared fixtures."""

import json

import numpy as np
import pytest

from core.schemas import SimConfig, TimeGrid
from src.models import ConstantInitial, LinearMeanField


def make_sim(dt=1e-2, steps=100, n=100, seed=0, stride=1) -> SimConfig:
    return SimConfig(grid=TimeGrid(dt=dt, steps=steps), n_particles=n, seed=seed, record_stride=stride)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ou_model():
    return LinearMeanField(a=-1.0)


@pytest.fixture
def mean_field_model():
    return LinearMeanField(a=-1.0, b_mf=0.25)


@pytest.fixture
def unit_initial():
    return ConstantInitial(value=[1.0])


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a JSON file and return its path."""

    def _write(doc, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    return _write
