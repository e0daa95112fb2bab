import numpy as np
import pytest

from core.estimator import NoiseConfig
from core.simdata import (
    DEVICE_NOISE,
    ScenarioProfile,
    generate_stride_dataset,
    generate_synthetic_stream,
    reference_model,
)

ORDER = 3
SMALL_CONDITIONS = ((0.8, -5.0), (1.0, 0.0), (1.2, 5.0), (0.8, 10.0), (1.2, -10.0))


@pytest.fixture(scope="session")
def ref_params():
    return reference_model(ORDER)


@pytest.fixture(scope="session")
def small_dataset(ref_params):
    """Three subjects over five conditions, with torque"""
    return generate_stride_dataset(
        3, ref_params, seed=11, strides_per_condition=2, conditions=SMALL_CONDITIONS
    )


@pytest.fixture(scope="session")
def exact_dataset(ref_params):
    """Two subjects generated from the reference model without coefficient jitter"""
    return generate_stride_dataset(2, ref_params, seed=5, coefficient_jitter=0.0)


@pytest.fixture(scope="session")
def clean_stream(ref_params):
    profile = ScenarioProfile.steady(
        duration=20.0, sensor_noise=(0.0,) * 6, stride_rate_jitter=0.0, leg_length=0.9
    )
    return generate_synthetic_stream(profile, ref_params)


@pytest.fixture(scope="session")
def noisy_stream(ref_params):
    profile = ScenarioProfile.steady(
        duration=40.0, sensor_noise=DEVICE_NOISE, stride_rate_jitter=0.0, leg_length=0.9, seed=3
    )
    return generate_synthetic_stream(profile, ref_params)


@pytest.fixture
def noise():
    return NoiseConfig.default()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
