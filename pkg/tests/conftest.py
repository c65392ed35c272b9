import time

import pytest
from hypothesis import HealthCheck, settings

from ncpflow.config import default_config
from ncpflow.simulation import run

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def benchmark_config():
    return default_config()


@pytest.fixture(scope="session")
def benchmark_run(benchmark_config):
    """Full default run (1e6 years), shared by all tests."""
    t0 = time.perf_counter()
    result = run(benchmark_config, stop_at_stationarity=False)
    result.wall_seconds = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def extended_run():
    """Benchmark continued until the stationarity test fires."""
    cfg = default_config(schedule__total_years=3e6)
    return run(cfg, stop_at_stationarity=True)
