import functools
import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mobility_hqp.scenarios import load_setup, run_method

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PRESETS = ("ea_standing", "sa_standing", "wb_seated", "mie_standing", "mis_standing")
RUN_SECONDS: dict = {}  # wall time of each cached run


@functools.lru_cache(maxsize=None)
def cached_run(preset: str, method: str = "proposed"):
    """Runs are deterministic, so one run per (preset, method) serves every test."""
    setup = load_setup(preset)
    t0 = time.perf_counter()
    log = run_method(setup, method)
    RUN_SECONDS[preset, method] = time.perf_counter() - t0
    return setup, log


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
