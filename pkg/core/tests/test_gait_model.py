from unittest.mock import patch

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core import gait_model
from core.gait_model import (
    ConstraintError,
    GaitState,
    ModelFitError,
    ParameterMatrix,
    THETA_F,
    basis_derivatives,
    basis_phase,
    build_constraints,
    evaluate_many,
    fit_gait_model,
    gait_partials,
    gait_second_partials,
    regressor,
    regressor_labels,
    regressor_length,
    regressor_matrix,
    residual_covariance_table,
    stride_velocities,
    sum_squared_error,
)
from core.simdata import reference_waveforms

from .conftest import ORDER


def test_regressor_length_matches_kronecker_width():
    assert regressor_length(20) == 164
    assert len(regressor_labels(3)) == regressor_length(3)
    assert regressor_labels(2)[0] == "r*l*1"


def test_phase_basis_at_zero():
    assert_allclose(basis_phase(0.0, 2), [1.0, 1.0, 0.0, 1.0, 0.0])


def test_regressor_is_ramp_stride_phase_kronecker():
    state = GaitState(0.3, 1.0, 0.5, 2.0, leg_length=1.0)
    expected = np.kron(np.kron([2.0, -1.0], [0.5, 0.5]), basis_phase(0.3, 2))
    assert_allclose(regressor(state, 2), expected)


def test_regressor_matrix_rows_match_single_state_regressor():
    state = GaitState(0.7, 1.0, 1.3, -4.0, leg_length=0.9)
    rows = regressor_matrix(
        np.array([0.1, state.phase]),
        np.array([1.0, state.normalized_stride]),
        np.array([0.0, state.incline]),
        ORDER,
    )
    assert rows.shape == (2, regressor_length(ORDER))
    assert_allclose(rows[1], regressor(state, ORDER))


def test_basis_derivatives_match_finite_differences():
    p, h = 0.37, 1e-6
    first, second = basis_derivatives(p, 4)
    numeric_first = (basis_phase(p + h, 4) - basis_phase(p - h, 4)) / (2 * h)
    numeric_second = (basis_phase(p + h, 4) - 2 * basis_phase(p, 4) + basis_phase(p - h, 4)) / h**2
    assert_allclose(first, numeric_first, rtol=1e-6, atol=1e-6)
    assert_allclose(second, numeric_second, rtol=1e-3, atol=1e-2)


def test_gait_state_wraps_phase_and_checks_stride_range():
    state = GaitState(1.25, 1.0, 1.0, 0.0)
    assert state.phase == pytest.approx(0.25)
    assert state.is_valid()
    assert not GaitState(0.1, 1.0, 5.0, 0.0, leg_length=1.0).is_valid()


def test_build_constraints_drops_redundant_flat_foot_rows():
    order = 4
    constraints = build_constraints(order)
    assert constraints.rows_by_family() == {
        "zero_stride_sinusoid": 4 * order,
        "zero_stride_constant": 2,
        "flat_foot": 2,
    }
    assert constraints.n_rows == 4 * order + 4
    A, b = constraints.system(THETA_F)
    assert A.shape == (4 * order + 4, regressor_length(order))
    assert np.linalg.matrix_rank(A) == A.shape[0]
    assert_allclose(b[-2:], [0.0, 10.0])


def test_build_constraints_rejects_zero_order():
    with pytest.raises(ConstraintError):
        build_constraints(0)


def test_reference_model_satisfies_constraints_and_flat_foot(ref_params):
    constraints = build_constraints(ORDER)
    assert ref_params.constraint_violation(constraints) <= 1e-8

    l_grid, r_grid = np.meshgrid(np.linspace(0.0, 2.0, 5), np.linspace(-10.0, 10.0, 5))
    flat = evaluate_many(ref_params, np.full(25, 0.2), l_grid.ravel(), r_grid.ravel())
    assert_allclose(flat[:, THETA_F], r_grid.ravel(), atol=1e-6)


def test_reference_model_reproduces_reference_waveforms(ref_params):
    p = np.linspace(0.0, 1.0, 37, endpoint=False)
    l_norm = np.full_like(p, 1.15)
    r = np.full_like(p, 3.5)
    assert_allclose(
        evaluate_many(ref_params, p, l_norm, r), reference_waveforms(p, l_norm, r), atol=1e-6
    )


def test_fit_recovers_exact_model(exact_dataset, ref_params):
    constraints = build_constraints(ORDER)
    params = fit_gait_model(exact_dataset, constraints, ORDER)
    assert params.constraint_violation(constraints) <= 1e-8
    assert sum_squared_error(params, exact_dataset) < 1e-8

    p = np.linspace(0.0, 1.0, 20, endpoint=False)
    l_norm = np.full_like(p, 1.2)
    r = np.full_like(p, -2.5)
    assert_allclose(
        evaluate_many(params, p, l_norm, r), evaluate_many(ref_params, p, l_norm, r), atol=1e-6
    )


def test_unconstrained_fit_accepts_none(exact_dataset):
    params = fit_gait_model(exact_dataset, None, ORDER)
    assert params.coeffs.shape == (regressor_length(ORDER), 4)


def test_fit_needs_more_samples_than_coefficients(exact_dataset):
    subject = exact_dataset.subjects[0]
    tiny = gait_model.StrideDataset([gait_model.SubjectRecord("X", subject.leg_length, subject.strides[:1])])
    with pytest.raises(ModelFitError, match="Need at least"):
        fit_gait_model(tiny, build_constraints(20), 20)


def test_singular_kkt_names_deficient_directions(exact_dataset):
    with patch("core.gait_model.linalg.solve") as mocked_solve:
        mocked_solve.side_effect = np.linalg.LinAlgError("singular matrix")

        with pytest.raises(ModelFitError) as excinfo:
            fit_gait_model(exact_dataset, build_constraints(ORDER), ORDER)

    assert "Deficient directions" in str(excinfo.value)


def test_parameter_matrix_is_frozen_and_validated(ref_params):
    assert not ref_params.coeffs.flags.writeable
    with pytest.raises(ValueError):
        ParameterMatrix(np.zeros((10, 4)), ORDER)
    with pytest.raises(ValueError):
        ParameterMatrix(np.full((regressor_length(ORDER), 4), np.nan), ORDER)


def test_partials_match_finite_differences(ref_params, rng):
    h = 1e-6
    for _ in range(20):
        state = GaitState(
            rng.uniform(0, 1), 1.0, rng.uniform(0.7, 1.4), rng.uniform(-10, 10), leg_length=0.9
        )
        analytic = gait_partials(ref_params, state)

        def shifted(dp=0.0, dl=0.0, dr=0.0):
            return ref_params.evaluate(
                GaitState(state.phase + dp, 1.0, state.stride_length + dl, state.incline + dr, 0.9)
            )

        numeric = np.column_stack(
            [
                (shifted(dp=h) - shifted(dp=-h)) / (2 * h),
                (shifted(dl=h) - shifted(dl=-h)) / (2 * h),
                (shifted(dr=h) - shifted(dr=-h)) / (2 * h),
            ]
        )
        assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-5)


def test_second_partials_match_differences_of_partials(ref_params):
    h = 1e-6
    state = GaitState(0.41, 1.0, 1.05, 4.0, leg_length=0.9)
    analytic = gait_second_partials(ref_params, state)

    def dp(dphase=0.0, dl=0.0, dr=0.0):
        shifted = GaitState(state.phase + dphase, 1.0, state.stride_length + dl, state.incline + dr, 0.9)
        return gait_partials(ref_params, shifted)[:, 0]

    numeric = np.column_stack(
        [
            (dp(dphase=h) - dp(dphase=-h)) / (2 * h),
            (dp(dl=h) - dp(dl=-h)) / (2 * h),
            (dp(dr=h) - dp(dr=-h)) / (2 * h),
        ]
    )
    assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-3)


def test_stride_velocities_spectral_derivative():
    phase = np.arange(150) / 150
    angle = np.sin(2 * np.pi * phase)
    velocity = stride_velocities(angle, phase, np.full(150, 1.1))
    assert_allclose(velocity, 2 * np.pi * np.cos(2 * np.pi * phase) * 1.1, atol=1e-9)


def test_stride_velocities_falls_back_for_shifted_labels():
    phase = (np.arange(150) + 0.3) / 150
    angle = np.sin(2 * np.pi * phase)
    velocity = stride_velocities(angle, phase, np.ones(150))
    assert_allclose(velocity, 2 * np.pi * np.cos(2 * np.pi * phase), atol=1e-2)


def test_residual_covariance_table_is_symmetric_psd(small_dataset, ref_params):
    table = residual_covariance_table(small_dataset, ref_params)
    assert table.shape == (150, 6, 6)
    assert_allclose(table, np.transpose(table, (0, 2, 1)))
    smallest = min(np.linalg.eigvalsh(knot).min() for knot in table)
    assert smallest >= -1e-9 * np.abs(table).max()


def test_residual_covariance_table_needs_two_subjects(exact_dataset, ref_params):
    subject = exact_dataset.subjects[0]
    assert len(subject.strides) > 1
    single = gait_model.StrideDataset([gait_model.SubjectRecord("X", subject.leg_length, subject.strides)])
    with pytest.raises(ValueError, match="2 subjects"):
        residual_covariance_table(single, ref_params)
