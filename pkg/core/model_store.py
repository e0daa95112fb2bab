"""
Model files - versioned .npz containers for fitted gait and torque models
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gait_model import ParameterMatrix, regressor_length
from .torque_model import TorqueSurface

FORMAT_NAME = "gaitlab-model"
FORMAT_VERSION = 1
KINDS = ("gait", "torque")


class ModelFileError(Exception):
    """Raised when a model file is missing, malformed or from another version"""

    pass


@dataclass(frozen=True, eq=False)
class StoredModel:
    kind: str
    params: ParameterMatrix
    covariance_table: np.ndarray | None = None
    scale: float | None = None

    def torque_surface(self) -> TorqueSurface:
        if self.kind != "torque":
            raise ModelFileError(f"A {self.kind} model is not a torque surface")
        return TorqueSurface(self.params, self.scale)


def save_model(
    path,
    params: ParameterMatrix,
    kind: str = "gait",
    covariance_table: np.ndarray | None = None,
    scale: float | None = None,
) -> Path:
    if kind not in KINDS:
        raise ModelFileError(f"Unknown model kind '{kind}'")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format": np.array(FORMAT_NAME),
        "version": np.array(FORMAT_VERSION),
        "kind": np.array(kind),
        "order": np.array(params.order),
        "regressor_length": np.array(params.regressor_length),
        "normalized_stride": np.array(params.normalized_stride),
        "output_names": np.array(params.output_names),
        "coeffs": np.ascontiguousarray(params.coeffs, dtype="<f8"),
    }
    if covariance_table is not None:
        arrays["covariance_table"] = np.ascontiguousarray(covariance_table, dtype="<f8")
    if scale is not None:
        arrays["scale"] = np.array(float(scale))
    # np.savez appends .npz to bare names; write through a handle to keep the given path
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)
    return path


def save_torque_surface(path, surface: TorqueSurface) -> Path:
    return save_model(path, surface.params, kind="torque", scale=surface.scale)


def load_model(path) -> StoredModel:
    path = Path(path)
    if not path.exists():
        raise ModelFileError(f"Model file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            contents = {key: archive[key] for key in archive.files}
    except (OSError, ValueError) as e:
        raise ModelFileError(f"Could not read model file {path}: {e}") from e

    for key in ("format", "version", "kind", "order", "regressor_length", "coeffs"):
        if key not in contents:
            raise ModelFileError(f"Model file {path} is missing '{key}'")
    if str(contents["format"]) != FORMAT_NAME:
        raise ModelFileError(f"{path} is not a {FORMAT_NAME} file")
    if int(contents["version"]) != FORMAT_VERSION:
        raise ModelFileError(
            f"Unsupported model file version {int(contents['version'])} "
            f"(expected {FORMAT_VERSION})"
        )

    order = int(contents["order"])
    coeffs = contents["coeffs"]
    if int(contents["regressor_length"]) != regressor_length(order) or coeffs.shape[0] != regressor_length(order):
        raise ModelFileError(
            f"Coefficient shape {coeffs.shape} does not match order {order}"
        )
    names = tuple(str(name) for name in contents.get("output_names", ()))
    try:
        params = ParameterMatrix(
            coeffs,
            order,
            names or tuple(f"y{j}" for j in range(coeffs.shape[1])),
            bool(contents.get("normalized_stride", True)),
        )
    except ValueError as e:
        raise ModelFileError(str(e)) from e

    table = contents.get("covariance_table")
    if table is not None and (table.ndim != 3 or table.shape[1:] != (6, 6)):
        raise ModelFileError(f"Covariance table has shape {table.shape}, expected (K, 6, 6)")
    scale = float(contents["scale"]) if "scale" in contents else None
    return StoredModel(str(contents["kind"]), params, table, scale)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
