from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.gait_model import GaitState, ModelFitError, StrideDataset, SubjectRecord
from core.simdata import reference_torque
from core.torque_model import (
    TORQUE_SCALE,
    evaluate_torque,
    evaluate_torque_many,
    fit_torque_model,
    peak_torque,
    torque_constraints,
)

from .conftest import ORDER


@pytest.fixture(scope="module")
def surface(exact_dataset):
    return fit_torque_model(exact_dataset, ORDER)


def test_fit_reproduces_scaled_reference_torque(surface):
    p = np.linspace(0.0, 1.0, 50, endpoint=False)
    l_norm = np.full_like(p, 1.1)
    r = np.full_like(p, 5.0)
    expected = np.maximum(reference_torque(p, l_norm, r) / TORQUE_SCALE, 0.0)
    assert_allclose(evaluate_torque_many(surface, p, l_norm, r), expected, atol=1e-6)
    assert surface.scale == TORQUE_SCALE
    assert surface.order == ORDER


def test_torque_command_is_floored_at_zero(surface):
    # reference torque is negative just before heel strike
    state = GaitState(0.98, 1.0, 1.0, 0.0, leg_length=1.0)
    assert evaluate_torque(surface, state) == 0.0
    assert evaluate_torque(surface, GaitState(0.48, 1.0, 1.0, 0.0, leg_length=1.0)) > 0.0


def test_peak_torque_over_grid(surface):
    phases = np.linspace(0.0, 1.0, 101)
    l_norms = np.linspace(0.8, 1.4, 4)
    inclines = np.linspace(-10.0, 10.0, 5)
    p, l, r = np.meshgrid(phases, l_norms, inclines, indexing="ij")
    expected = np.max(reference_torque(p, l, r)) / TORQUE_SCALE
    assert peak_torque(surface, phases, l_norms, inclines) == pytest.approx(expected, rel=1e-6)


def test_fit_without_torque_channel_fails(exact_dataset):
    subject = exact_dataset.subjects[0]
    bare = StrideDataset(
        [SubjectRecord("X", subject.leg_length, [replace(s, torque=None) for s in subject.strides])]
    )
    with pytest.raises(ModelFitError):
        fit_torque_model(bare, ORDER)


def test_constrained_torque_fit_is_flat_at_zero_stride(exact_dataset):
    constraints = torque_constraints(ORDER)
    assert constraints.n_rows == 4 * ORDER
    surface = fit_torque_model(exact_dataset, ORDER, constraints=constraints)
    values = [
        evaluate_torque_many(surface, np.array([p]), np.array([0.0]), np.array([3.0]))[0]
        for p in (0.1, 0.4, 0.7)
    ]
    assert_allclose(values, values[0], atol=1e-9)
