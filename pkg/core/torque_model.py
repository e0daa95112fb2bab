"""
Torque Model - biomimetic ankle torque surface

Regresses scaled-down biological ankle torque against the same Kronecker
regressor as the gait model and evaluates the exoskeleton torque command,
floored at zero so the device never pushes into dorsiflexion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gait_model import (
    ConstraintBlock,
    ConstraintSet,
    GaitState,
    ModelFitError,
    ParameterMatrix,
    evaluate_many,
    evaluate_gait,
    regressor_matrix,
    solve_constrained_lsq,
    zero_stride_sinusoid_rows,
)

TORQUE_SCALE = 5.0
TORQUE_OUTPUT = ("torque",)


@dataclass(frozen=True, eq=False)
class TorqueSurface:
    """Single-output parameter matrix trained on torque divided by `scale`"""

    params: ParameterMatrix
    scale: float = TORQUE_SCALE

    @property
    def order(self) -> int:
        return self.params.order

    @property
    def coeffs(self) -> np.ndarray:
        return self.params.coeffs[:, 0]


def torque_constraints(order: int) -> ConstraintSet:
    """Zero-stride rows for a torque fit: no phase variation when standing still"""
    A, _ = zero_stride_sinusoid_rows(order)
    block = ConstraintBlock("zero_stride_sinusoid", A, np.zeros((A.shape[0], 1)), (0,))
    return ConstraintSet((block,), n_outputs=1)


def fit_torque_model(
    data,
    order: int,
    constraints: ConstraintSet | None = None,
    scale: float = TORQUE_SCALE,
) -> TorqueSurface:
    """
    Least-squares fit of torque / scale against the regressor.

    The gait constraints are not applied unless `constraints` is given.
    """
    if not data.has_torque:
        raise ModelFitError("Dataset strides carry no torque channel")
    samples = data.samples()
    R = regressor_matrix(samples["phase"], samples["l_norm"], samples["incline"], order)
    coeffs = solve_constrained_lsq(R, samples["torque"] / scale, constraints, order)
    return TorqueSurface(ParameterMatrix(coeffs, order, TORQUE_OUTPUT), scale)


def evaluate_torque(surface: TorqueSurface, state: GaitState) -> float:
    """Torque command in N*m, plantarflexion positive, floored at zero"""
    return max(0.0, float(evaluate_gait(surface.params, state)[0]))


def evaluate_torque_many(surface: TorqueSurface, phase, l_norm, incline) -> np.ndarray:
    raw = evaluate_many(surface.params, phase, l_norm, incline)[:, 0]
    return np.maximum(raw, 0.0)


def peak_torque(surface: TorqueSurface, phases, l_norms, inclines) -> float:
    """Largest floored torque over the (p, l, r) grid"""
    p, l, r = np.meshgrid(phases, l_norms, inclines, indexing="ij")
    return float(np.max(evaluate_torque_many(surface, p.ravel(), l.ravel(), r.ravel())))
