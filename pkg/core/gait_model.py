"""
Gait Model - data-driven kinematics of walking

The model maps a gait state (phase, stride length, incline) to the four
kinematic outputs (shank angle, foot angle, forward heel position, upward
heel position) through a regressor built from Kronecker products of three
simple bases:

- ramp basis       (r, 1 - r)
- stride basis     (l, 1 - l), l normalised by leg length
- phase basis      Fourier series of order N

This module provides:
- The bases, their derivatives and the Kronecker regressor
- The three equality-constraint families (zero stride, flat foot)
- A constrained least-squares fit solved with KKT-augmented normal equations
- Evaluation, first and second analytic partial derivatives
- The per-phase residual covariance table used by the noise model
- The stride dataset types shared by fitting, simulation and ingestion
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

OUTPUT_NAMES = ("theta_s", "theta_f", "p_f", "p_u")
THETA_S, THETA_F, P_F, P_U = range(4)

SAMPLES_PER_STRIDE = 150
FLAT_FOOT_PHASE = 0.2
RAMP_ANCHORS = (0.0, 10.0)
STRIDE_ANCHORS = (0.0, 1.0)

# Channel order of the measurement vector (and of the residual covariance table)
CHANNEL_NAMES = ("theta_f", "theta_f_dot", "theta_s", "theta_s_dot", "p_f", "p_u")


class ConstraintError(Exception):
    """Raised when constraint rows are inconsistent or rank-deficient"""

    pass


class ModelFitError(Exception):
    """Raised when the least-squares system cannot be solved"""

    pass


# ====================================================================
# DOMAIN TYPES
# ====================================================================


@dataclass(frozen=True)
class GaitState:
    """
    Gait-state vector.

    Phase is stored wrapped to [0, 1); stride length is in meters and is
    normalised by `leg_length` before it reaches the model.
    """

    phase: float
    phase_rate: float
    stride_length: float
    incline: float
    leg_length: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "phase", float(self.phase) % 1.0)

    @property
    def normalized_stride(self) -> float:
        return self.stride_length / self.leg_length

    def is_valid(self) -> bool:
        """Stride length must sit inside (0, 4 leg lengths)"""
        values = (self.phase, self.phase_rate, self.stride_length, self.incline)
        return bool(
            np.all(np.isfinite(values))
            and 0.0 < self.stride_length < 4.0 * self.leg_length
        )


@dataclass(frozen=True, eq=False)
class ParameterMatrix:
    """
    Fitted coefficients mapping regressor outputs to model outputs.

    `coeffs` has shape (D, k) with D = 4 (2N + 1). The array is copied and
    frozen on construction so a fitted model can be shared between readers.
    """

    coeffs: np.ndarray
    order: int
    output_names: tuple = OUTPUT_NAMES
    normalized_stride: bool = True

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != regressor_length(self.order):
            raise ValueError(
                f"Expected {regressor_length(self.order)} rows for order "
                f"{self.order}, got {coeffs.shape[0]}"
            )
        if coeffs.shape[1] != len(self.output_names):
            raise ValueError("One column per output name is required")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("Coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        blocks = coeffs.reshape(2, 2, 2 * self.order + 1, coeffs.shape[1])
        object.__setattr__(self, "_blocks", blocks)

    @property
    def regressor_length(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.coeffs.shape[1]

    def column(self, name: str) -> int:
        return self.output_names.index(name)

    def jet(self, phase: float, l_norm: float, incline: float) -> np.ndarray:
        """
        Value and derivatives of every output at one state.

        Returns an array T of shape (2, 2, 3, k): T[a, b, d] holds the
        derivative of order a in incline, b in normalised stride and d in
        phase. T[0, 0, 0] is the model output itself.
        """
        phase_stack = phase_basis_stack(phase, self.order)
        ramp_stack = np.stack([basis_ramp(incline), ramp_slope()])
        stride_stack = np.stack([basis_stride(l_norm), stride_slope()])
        g = np.einsum("ijfk,df->dijk", self._blocks, phase_stack)
        return np.einsum("ai,bj,dijk->abdk", ramp_stack, stride_stack, g)

    def evaluate(self, state: "GaitState") -> np.ndarray:
        return evaluate_gait(self, state)

    def partials(self, state: "GaitState") -> np.ndarray:
        return gait_partials(self, state)

    def second_partials(self, state: "GaitState") -> np.ndarray:
        return gait_second_partials(self, state)

    def constraint_violation(self, constraints: "ConstraintSet") -> float:
        return constraint_violation(self, constraints)


@dataclass(frozen=True, eq=False)
class ConstraintBlock:
    """Rows of A_eq with their right-hand side and the outputs they bind"""

    name: str
    A: np.ndarray
    b: np.ndarray
    outputs: tuple


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """
    Equality constraints A_eq phi = b_eq.

    Full-width blocks bind every output column; single-output blocks carry a
    one-column right-hand side and bind only the output they are tagged with.
    Redundant rows are removed during assembly.
    """

    blocks: tuple = ()
    n_outputs: int = len(OUTPUT_NAMES)

    @property
    def is_empty(self) -> bool:
        return not any(block.A.shape[0] for block in self.blocks)

    @property
    def n_rows(self) -> int:
        return sum(block.A.shape[0] for block in self.blocks)

    def rows_by_family(self) -> dict:
        return {block.name: block.A.shape[0] for block in self.blocks}

    def system(self, output: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows and right-hand side binding one output column"""
        rows = []
        rhs = []
        for block in self.blocks:
            if output not in block.outputs or block.A.shape[0] == 0:
                continue
            rows.append(block.A)
            if block.b.shape[1] == self.n_outputs:
                column = output
            else:
                column = block.outputs.index(output)
            rhs.append(block.b[:, column])
        if not rows:
            return np.zeros((0, 0)), np.zeros(0)
        return np.vstack(rows), np.concatenate(rhs)


# ====================================================================
# STRIDE DATASET
# ====================================================================


@dataclass
class Stride:
    """One stride of labelled samples (150 per stride)"""

    condition: tuple
    phase: np.ndarray
    phase_rate: np.ndarray
    stride_length: np.ndarray
    incline: np.ndarray
    theta_s: np.ndarray
    theta_f: np.ndarray
    p_f: np.ndarray
    p_u: np.ndarray
    torque: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return len(self.phase)

    @property
    def outputs(self) -> np.ndarray:
        return np.column_stack([self.theta_s, self.theta_f, self.p_f, self.p_u])

    @property
    def mean_phase_rate(self) -> float:
        return float(np.mean(self.phase_rate))


@dataclass
class SubjectRecord:
    subject_id: str
    leg_length: float
    strides: list = field(default_factory=list)


@dataclass
class StrideDataset:
    """Labelled strides grouped by subject"""

    subjects: list = field(default_factory=list)

    @property
    def subject_ids(self) -> list:
        return [subject.subject_id for subject in self.subjects]

    @property
    def stride_count(self) -> int:
        return sum(len(subject.strides) for subject in self.subjects)

    @property
    def sample_count(self) -> int:
        return sum(
            stride.n_samples for subject in self.subjects for stride in subject.strides
        )

    @property
    def has_torque(self) -> bool:
        strides = [s for subject in self.subjects for s in subject.strides]
        return bool(strides) and all(s.torque is not None for s in strides)

    def subject(self, subject_id: str) -> SubjectRecord:
        for subject in self.subjects:
            if subject.subject_id == subject_id:
                return subject
        raise KeyError(subject_id)

    def without(self, subject_id: str) -> "StrideDataset":
        return StrideDataset(
            [s for s in self.subjects if s.subject_id != subject_id]
        )

    def only(self, subject_id: str) -> "StrideDataset":
        return StrideDataset([self.subject(subject_id)])

    def samples(self) -> dict:
        """Every sample stacked into flat arrays, one entry per column"""
        columns = {
            "phase": [],
            "phase_rate": [],
            "stride_length": [],
            "incline": [],
            "leg_length": [],
            "outputs": [],
            "torque": [],
        }
        for subject in self.subjects:
            for stride in subject.strides:
                columns["phase"].append(stride.phase)
                columns["phase_rate"].append(stride.phase_rate)
                columns["stride_length"].append(stride.stride_length)
                columns["incline"].append(stride.incline)
                columns["leg_length"].append(
                    np.full(stride.n_samples, subject.leg_length)
                )
                columns["outputs"].append(stride.outputs)
                if stride.torque is not None:
                    columns["torque"].append(stride.torque)
        if not columns["phase"]:
            raise ValueError("Dataset has no strides")
        stacked = {
            key: np.concatenate(values) if key != "outputs" else np.vstack(values)
            for key, values in columns.items()
            if key != "torque"
        }
        stacked["torque"] = (
            np.concatenate(columns["torque"]) if self.has_torque else None
        )
        stacked["l_norm"] = stacked["stride_length"] / stacked["leg_length"]
        return stacked


def stride_velocities(angle, phase, phase_rate) -> np.ndarray:
    """
    Time derivative of a per-stride angle trace via the chain rule.

    Uniform phase labels (k / n) use a spectral derivative, which is exact
    for band-limited periodic traces; anything else falls back to periodic
    finite differences in phase.
    """
    angle = np.asarray(angle, dtype=float)
    phase = np.asarray(phase, dtype=float)
    n = len(angle)
    uniform = np.allclose(phase, np.arange(n) / n, atol=1e-9)
    if uniform:
        spectrum = np.fft.rfft(angle)
        k = np.fft.rfftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            spectrum[-1] = 0.0
        d_dphase = np.fft.irfft(2j * np.pi * k * spectrum, n=n)
    else:
        extended_phase = np.concatenate([phase[-1:] - 1.0, phase, phase[:1] + 1.0])
        extended_angle = np.concatenate([angle[-1:], angle, angle[:1]])
        d_dphase = np.gradient(extended_angle, extended_phase)[1:-1]
    return d_dphase * np.asarray(phase_rate, dtype=float)


# ====================================================================
# BASES AND REGRESSOR
# ====================================================================


def regressor_length(order: int) -> int:
    return 4 * (2 * order + 1)


def basis_ramp(r) -> np.ndarray:
    """First-order Bernstein-style ramp basis (r, 1 - r)"""
    r = np.asarray(r, dtype=float)
    return np.stack([r, 1.0 - r], axis=-1)


def basis_stride(l_norm) -> np.ndarray:
    """First-order Bernstein-style stride basis (l, 1 - l)"""
    l_norm = np.asarray(l_norm, dtype=float)
    return np.stack([l_norm, 1.0 - l_norm], axis=-1)


def ramp_slope() -> np.ndarray:
    return np.array([1.0, -1.0])


def stride_slope() -> np.ndarray:
    return np.array([1.0, -1.0])


def _harmonic_angles(p, order: int):
    p = np.asarray(p, dtype=float)
    if order < 1:
        raise ValueError("Fourier order must be at least 1")
    k = np.arange(1, order + 1)
    return p[..., None] * (2.0 * np.pi * k), 2.0 * np.pi * k


def basis_phase(p, order: int) -> np.ndarray:
    """Fourier basis (1, cos 2pi p, sin 2pi p, ..., cos 2pi N p, sin 2pi N p)"""
    angles, _ = _harmonic_angles(p, order)
    out = np.empty(angles.shape[:-1] + (2 * order + 1,))
    out[..., 0] = 1.0
    out[..., 1::2] = np.cos(angles)
    out[..., 2::2] = np.sin(angles)
    return out


def basis_derivatives(p, order: int) -> tuple[np.ndarray, np.ndarray]:
    """First and second phase derivatives of the Fourier basis"""
    angles, omega = _harmonic_angles(p, order)
    cos, sin = np.cos(angles), np.sin(angles)
    first = np.zeros(angles.shape[:-1] + (2 * order + 1,))
    second = np.zeros_like(first)
    first[..., 1::2] = -omega * sin
    first[..., 2::2] = omega * cos
    second[..., 1::2] = -(omega**2) * cos
    second[..., 2::2] = -(omega**2) * sin
    return first, second


def phase_basis_stack(p: float, order: int) -> np.ndarray:
    """Phase basis and its two derivatives stacked as rows"""
    first, second = basis_derivatives(p, order)
    return np.vstack([basis_phase(p, order), first, second])


def kronecker(A, B) -> np.ndarray:
    """
    Kronecker product (a1 B, a2 B, ..., an B).

    Row vectors give a row vector; matrices follow the block definition.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0 or B.size == 0:
        raise ValueError("Kronecker factors must be nonempty")
    if A.ndim == 1 and B.ndim == 1:
        return np.kron(A, B)
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def regressor(state: GaitState, order: int) -> np.ndarray:
    """R(x) = ramp basis (x) stride basis (x) phase basis"""
    return kronecker(
        kronecker(basis_ramp(state.incline), basis_stride(state.normalized_stride)),
        basis_phase(state.phase, order),
    )


def regressor_matrix(phase, l_norm, incline, order: int) -> np.ndarray:
    """One regressor row per sample"""
    ramp = basis_ramp(incline)
    stride = basis_stride(l_norm)
    phase_rows = basis_phase(phase, order)
    rows = np.einsum("ni,nj,nf->nijf", ramp, stride, phase_rows)
    return rows.reshape(len(phase_rows), -1)


def regressor_labels(order: int) -> list:
    """Human-readable name for every regressor column"""
    phase_terms = ["1"]
    for k in range(1, order + 1):
        phase_terms += [f"cos{k}", f"sin{k}"]
    labels = []
    for ramp in ("r", "(1-r)"):
        for stride in ("l", "(1-l)"):
            labels += [f"{ramp}*{stride}*{term}" for term in phase_terms]
    return labels


# ====================================================================
# CONSTRAINTS
# ====================================================================


def zero_stride_sinusoid_rows(order: int) -> tuple[np.ndarray, np.ndarray]:
    """At l = 0 every sinusoid coefficient of every output is zero"""
    sinusoids = np.hstack([np.zeros((2 * order, 1)), np.eye(2 * order)])
    A = kronecker(kronecker(np.eye(2), basis_stride(0.0)[None, :]), sinusoids)
    return A, np.zeros((A.shape[0], len(OUTPUT_NAMES)))


def zero_stride_constant_rows(order: int) -> tuple[np.ndarray, np.ndarray]:
    """At l = 0 the shank is vertical and the foot lies on the ramp"""
    ramps = np.vstack([basis_ramp(r) for r in RAMP_ANCHORS])
    constant = np.zeros((1, 2 * order + 1))
    constant[0, 0] = 1.0
    A = kronecker(kronecker(ramps, basis_stride(0.0)[None, :]), constant)
    b = np.zeros((A.shape[0], len(OUTPUT_NAMES)))
    b[:, THETA_F] = RAMP_ANCHORS
    return A, b


def flat_foot_rows(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Foot angle equals the ramp angle at phase 0.2 for every stride length"""
    ramps = np.vstack([basis_ramp(r) for r in RAMP_ANCHORS])
    strides = np.vstack([basis_stride(l) for l in STRIDE_ANCHORS])
    A = kronecker(
        kronecker(ramps, strides), basis_phase(FLAT_FOOT_PHASE, order)[None, :]
    )
    b = np.repeat(np.asarray(RAMP_ANCHORS), len(STRIDE_ANCHORS))[:, None]
    return A, b


def _in_span(kept: list, row: np.ndarray, tol: float):
    """Coefficients expressing `row` in the kept rows, or None"""
    if not kept:
        return None if np.linalg.norm(row) > tol else np.zeros(0)
    K = np.vstack(kept)
    coeffs, *_ = np.linalg.lstsq(K.T, row, rcond=None)
    residual = np.linalg.norm(K.T @ coeffs - row)
    if residual > tol * max(1.0, np.linalg.norm(row)):
        return None
    return coeffs


def build_constraints(order: int, tol: float = 1e-9) -> ConstraintSet:
    """
    Assemble the three constraint families and drop redundant rows.

    A row that is a combination of rows already kept for the same outputs is
    dropped when its right-hand side agrees, and raises when it does not.
    """
    if order < 1:
        raise ConstraintError("Fourier order must be at least 1")

    n_outputs = len(OUTPUT_NAMES)
    all_outputs = tuple(range(n_outputs))
    families = [
        ("zero_stride_sinusoid", *zero_stride_sinusoid_rows(order), all_outputs),
        ("zero_stride_constant", *zero_stride_constant_rows(order), all_outputs),
        ("flat_foot", *flat_foot_rows(order), (THETA_F,)),
    ]

    kept_rows = {j: [] for j in all_outputs}
    kept_rhs = {j: [] for j in all_outputs}
    blocks = []

    for name, A, b, outputs in families:
        keep = []
        for i, row in enumerate(A):
            redundant = True
            for position, j in enumerate(outputs):
                coeffs = _in_span(kept_rows[j], row, tol)
                if coeffs is None:
                    redundant = False
                    break
                rhs = b[i, j] if b.shape[1] == n_outputs else b[i, position]
                implied = float(np.dot(coeffs, kept_rhs[j])) if len(coeffs) else 0.0
                if abs(implied - rhs) > tol * max(1.0, abs(rhs)):
                    raise ConstraintError(
                        f"Constraint row {i} of '{name}' contradicts earlier rows "
                        f"for output {OUTPUT_NAMES[j]} ({implied:g} != {rhs:g})"
                    )
            if redundant:
                continue
            keep.append(i)
            for position, j in enumerate(outputs):
                kept_rows[j].append(row)
                kept_rhs[j].append(
                    b[i, j] if b.shape[1] == n_outputs else b[i, position]
                )
        blocks.append(ConstraintBlock(name, A[keep], b[keep], outputs))

    constraints = ConstraintSet(tuple(blocks), n_outputs)
    for j in all_outputs:
        A_j, _ = constraints.system(j)
        if A_j.size and np.linalg.matrix_rank(A_j) < A_j.shape[0]:
            raise ConstraintError(
                f"Constraint rows for {OUTPUT_NAMES[j]} are rank-deficient"
            )
    return constraints


def constraint_violation(params: ParameterMatrix, constraints: ConstraintSet) -> float:
    """Largest |A_eq phi - b_eq| over every output the rows bind"""
    worst = 0.0
    for j in range(params.n_outputs):
        A_j, b_j = constraints.system(j)
        if A_j.size == 0:
            continue
        worst = max(worst, float(np.max(np.abs(A_j @ params.coeffs[:, j] - b_j))))
    return worst


# ====================================================================
# FITTING
# ====================================================================


def _deficient_directions(R_scaled: np.ndarray, labels: list, limit: int = 5) -> list:
    """Regressor columns that dominate the near-null directions of R"""
    _, singular, vt = np.linalg.svd(R_scaled, full_matrices=False)
    cutoff = singular.max() * max(R_scaled.shape) * np.finfo(float).eps * 1e3
    names = []
    for vector in vt[singular <= cutoff]:
        for index in np.argsort(-np.abs(vector))[:2]:
            if labels[index] not in names:
                names.append(labels[index])
    return names[:limit] or ["(ill-conditioned constraint/regressor coupling)"]


def solve_constrained_lsq(
    R: np.ndarray,
    Y: np.ndarray,
    constraints: ConstraintSet | None,
    order: int,
) -> np.ndarray:
    """
    Minimise ||R phi - Y||^2 subject to the constraint rows of every column.

    Columns of R are equilibrated before the KKT system
        [R'R  A'] [phi]   [R'y]
        [A    0 ] [lam] = [ b ]
    is solved with a symmetric indefinite factorisation, followed by one step
    of iterative refinement.
    """
    R = np.asarray(R, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, D = R.shape
    if n < D:
        raise ModelFitError(f"Need at least {D} samples to fit, got {n}")

    scale = np.linalg.norm(R, axis=0)
    scale[scale == 0.0] = 1.0
    R_scaled = R / scale
    gram = R_scaled.T @ R_scaled
    moments = R_scaled.T @ Y
    labels = regressor_labels(order)

    coeffs = np.zeros((D, Y.shape[1]))
    for j in range(Y.shape[1]):
        if constraints is None or constraints.is_empty:
            A_j, b_j = np.zeros((0, D)), np.zeros(0)
        else:
            A_j, b_j = constraints.system(j)
            if A_j.size == 0:
                A_j, b_j = np.zeros((0, D)), np.zeros(0)
        A_scaled = A_j / scale
        m = A_scaled.shape[0]
        kkt = np.zeros((D + m, D + m))
        kkt[:D, :D] = gram
        kkt[:D, D:] = A_scaled.T
        kkt[D:, :D] = A_scaled
        rhs = np.concatenate([moments[:, j], b_j])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", linalg.LinAlgWarning)
                solution = linalg.solve(kkt, rhs, assume_a="sym")
                solution += linalg.solve(kkt, rhs - kkt @ solution, assume_a="sym")
        except (np.linalg.LinAlgError, linalg.LinAlgWarning) as e:
            directions = _deficient_directions(R_scaled, labels)
            raise ModelFitError(
                f"Singular KKT system for output column {j}: {e}. "
                f"Deficient directions: {', '.join(directions)}"
            ) from e
        coeffs[:, j] = solution[:D] / scale
    return coeffs


def fit_gait_model(
    data: StrideDataset,
    constraints: ConstraintSet | None,
    order: int,
    tol: float = 1e-8,
) -> ParameterMatrix:
    """
    Fit phi to every labelled sample of the dataset.

    Passing `constraints=None` (or an empty set) gives the unconstrained fit.
    """
    if data.stride_count == 0:
        raise ModelFitError("Cannot fit a gait model to an empty dataset")
    samples = data.samples()
    R = regressor_matrix(samples["phase"], samples["l_norm"], samples["incline"], order)
    coeffs = solve_constrained_lsq(R, samples["outputs"], constraints, order)
    params = ParameterMatrix(coeffs, order)
    if constraints is not None and not constraints.is_empty:
        violation = constraint_violation(params, constraints)
        if violation > tol:
            raise ModelFitError(
                f"Fitted model violates its constraints by {violation:.3g} (> {tol:g})"
            )
    return params


def sum_squared_error(params: ParameterMatrix, data: StrideDataset) -> float:
    samples = data.samples()
    R = regressor_matrix(
        samples["phase"], samples["l_norm"], samples["incline"], params.order
    )
    residual = samples["outputs"] - R @ params.coeffs
    return float(np.sum(residual**2))


# ====================================================================
# EVALUATION
# ====================================================================


def evaluate_gait(params: ParameterMatrix, state: GaitState) -> np.ndarray:
    """(theta_s, theta_f, p_f, p_u) at a state"""
    phase_row = basis_phase(state.phase, params.order)
    g = np.einsum("ijfk,f->ijk", params._blocks, phase_row)
    return np.einsum(
        "i,j,ijk->k",
        basis_ramp(state.incline),
        basis_stride(state.normalized_stride),
        g,
    )


def gait_partials(params: ParameterMatrix, state: GaitState) -> np.ndarray:
    """
    Partial derivatives of every output with respect to (p, l, r).

    Rows follow the output order; stride-length derivatives are per meter.
    """
    T = params.jet(state.phase, state.normalized_stride, state.incline)
    return np.column_stack(
        [T[0, 0, 1], T[0, 1, 0] / state.leg_length, T[1, 0, 0]]
    )


def gait_second_partials(params: ParameterMatrix, state: GaitState) -> np.ndarray:
    """Second derivatives d2/dp2, d2/dp dl and d2/dp dr of every output"""
    T = params.jet(state.phase, state.normalized_stride, state.incline)
    return np.column_stack(
        [T[0, 0, 2], T[0, 1, 1] / state.leg_length, T[1, 0, 1]]
    )


def evaluate_many(params: ParameterMatrix, phase, l_norm, incline) -> np.ndarray:
    """Vectorised evaluation, one output row per sample"""
    return regressor_matrix(phase, l_norm, incline, params.order) @ params.coeffs


def phase_derivative_many(params: ParameterMatrix, phase, l_norm, incline) -> np.ndarray:
    """Vectorised d/dp of every output"""
    first, _ = basis_derivatives(phase, params.order)
    rows = np.einsum(
        "ni,nj,nf->nijf", basis_ramp(incline), basis_stride(l_norm), first
    ).reshape(len(first), -1)
    return rows @ params.coeffs


# ====================================================================
# RESIDUAL COVARIANCE
# ====================================================================


def measurement_residuals(params: ParameterMatrix, subject: SubjectRecord, stride: Stride):
    """Six-channel residual (measured minus modelled) for every sample of a stride"""
    l_norm = stride.stride_length / subject.leg_length
    model = evaluate_many(params, stride.phase, l_norm, stride.incline)
    d_dphase = phase_derivative_many(params, stride.phase, l_norm, stride.incline)

    measured = np.column_stack(
        [
            stride.theta_f,
            stride_velocities(stride.theta_f, stride.phase, stride.phase_rate),
            stride.theta_s,
            stride_velocities(stride.theta_s, stride.phase, stride.phase_rate),
            stride.p_f,
            stride.p_u,
        ]
    )
    predicted = np.column_stack(
        [
            model[:, THETA_F],
            d_dphase[:, THETA_F] * stride.phase_rate,
            model[:, THETA_S],
            d_dphase[:, THETA_S] * stride.phase_rate,
            model[:, P_F],
            model[:, P_U],
        ]
    )
    return measured - predicted


def residual_covariance_table(
    data: StrideDataset,
    params: ParameterMatrix,
    knots: int = SAMPLES_PER_STRIDE,
) -> np.ndarray:
    """
    Cross-subject residual covariance at each of the 150 phase knots.

    Residuals of sample k of every stride (all subjects, all conditions) are
    pooled into the sample covariance for knot k.
    """
    if len(data.subject_ids) < 2:
        raise ValueError(
            f"Residual covariance needs at least 2 subjects, got {len(data.subject_ids)}"
        )
    pooled = []
    for subject in data.subjects:
        for stride in subject.strides:
            if stride.n_samples != knots:
                raise ValueError(
                    f"Stride of subject {subject.subject_id} has {stride.n_samples} "
                    f"samples, expected {knots}"
                )
            pooled.append(measurement_residuals(params, subject, stride))
    residuals = np.stack(pooled)  # (strides, knots, channels)
    centred = residuals - residuals.mean(axis=0)
    table = np.einsum("skc,skd->kcd", centred, centred) / (len(pooled) - 1)
    return 0.5 * (table + np.transpose(table, (0, 2, 1)))
