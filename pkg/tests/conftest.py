"""Shared fixtures: deterministic device configurations and the one
session-wide default campaign that the trend tests all read from."""

import time

import pytest

from rramtune.config import default_config
from rramtune.crossbar import SensePath, new_crossbar
from rramtune.device import DeviceParams

# Every stochastic term disabled: forming lands on 120.0 uS exactly,
# writes on 100.0 uS, erase follows its mean law, reads are exact.
QUIET = DeviceParams(
    g_on_dispersion=0.0,
    tau_erase_d2d_sigma=0.0,
    erase_noise_frac=0.0,
    relax_sigma_short=0.0,
    relax_sigma_long=0.0,
    read_noise_frac=0.0,
)


@pytest.fixture
def quiet_params() -> DeviceParams:
    return QUIET


@pytest.fixture
def ideal_sense() -> SensePath:
    return SensePath(ideal_adc=True)


@pytest.fixture
def quiet_crossbar(quiet_params, ideal_sense):
    return new_crossbar(quiet_params, sense=ideal_sense)


@pytest.fixture(scope="session")
def default_campaign():
    """The full default-configuration campaign (20 seeds, both policies).

    Runs once per session; returns (report, elapsed_seconds). All the
    statistical trend assertions read from this single run, so they see
    exactly what a user of the default config sees.
    """
    from rramtune.experiment import run_experiment

    cfg = default_config().experiment_config()
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    return report, elapsed
