"""System description documents and run reports.

A system description is a JSON document::

    {"kind": "fir", "horizon": 8, "name": "delay", "payload": {"h": [0, 1]}}

with ``kind`` one of ``state_space``, ``fir`` or ``block_matrix``. Reports are JSON
documents with top-level ``version``, ``input_digest`` and ``results``. Floats are
written in their shortest round-trip form, so parsing a serialized document
recovers every number exactly.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ltv_robust.config import REPORT_SCHEMA_VERSION, VERSION
from ltv_robust.core import (
    LtvOperator,
    SignalSpace,
    corner_norms,
    lift_state_space,
    toeplitz_lift,
)
from ltv_robust.errors import DimensionMismatchError, SystemValidationError

logger = logging.getLogger(__name__)

Matrix = float | list[list[float]]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class StateSpacePayload(_Strict):
    """Per-step A_k, B_k, C_k, D_k; a single entry is repeated over the horizon."""

    A: list[Matrix] = Field(min_length=1)
    B: list[Matrix] = Field(min_length=1)
    C: list[Matrix] = Field(min_length=1)
    D: list[Matrix] = Field(min_length=1)


class FirPayload(_Strict):
    h: list[Matrix] = Field(min_length=1)
    block_dim: int = Field(default=1, ge=1)


class BlockMatrixPayload(_Strict):
    codomain_dims: list[int] = Field(min_length=1)
    domain_dims: list[int] = Field(min_length=1)
    entries: list[list[float]]
    causal: bool = True


PAYLOAD_TYPES = {
    "state_space": StateSpacePayload,
    "fir": FirPayload,
    "block_matrix": BlockMatrixPayload,
}


class SystemDescription(_Strict):
    schema_version: int = REPORT_SCHEMA_VERSION
    kind: Literal["state_space", "fir", "block_matrix"]
    horizon: int = Field(ge=1)
    name: str = ""
    payload: StateSpacePayload | FirPayload | BlockMatrixPayload

    @model_validator(mode="after")
    def _check_shapes(self) -> "SystemDescription":
        expected = PAYLOAD_TYPES[self.kind]
        if not isinstance(self.payload, expected):
            raise ValueError(f"payload does not match kind '{self.kind}'")
        try:
            operator_from_system(self)
        except DimensionMismatchError as e:
            raise ValueError(str(e)) from e
        return self


def _per_step(sequence: list[Matrix], horizon: int, name: str) -> list[Matrix]:
    if len(sequence) == 1:
        return sequence * horizon
    if len(sequence) != horizon:
        raise DimensionMismatchError(
            f"payload.{name} has {len(sequence)} entries; expected 1 or horizon {horizon}",
        )
    return sequence


def operator_from_system(description: SystemDescription, horizon: int | None = None) -> LtvOperator:
    """Lift a description into its causal operator, optionally at another horizon.

    The horizon override applies to ``fir`` descriptions and to time-invariant
    ``state_space`` ones; a ``block_matrix`` only accepts its own horizon.

    Raises:
        DimensionMismatchError: the horizon is below 1 or does not fit the payload
    """
    T = horizon if horizon is not None else description.horizon
    if T < 1:
        raise DimensionMismatchError(f"Horizon must be >= 1, got {T}")
    payload = description.payload
    if isinstance(payload, FirPayload):
        return toeplitz_lift(payload.h, T, payload.block_dim)
    if isinstance(payload, StateSpacePayload):
        A, B, C, D = (_per_step(getattr(payload, name), T, name) for name in "ABCD")
        return lift_state_space(A, B, C, D, T)
    if T != len(payload.codomain_dims):
        raise DimensionMismatchError(
            f"block_matrix has horizon {len(payload.codomain_dims)}, cannot use horizon {T}",
        )
    if len(payload.domain_dims) != len(payload.codomain_dims):
        raise DimensionMismatchError("payload.codomain_dims and payload.domain_dims differ in length")
    entries = np.asarray(payload.entries, dtype=float)
    if entries.ndim != 2:
        raise DimensionMismatchError("payload.entries must be a rectangular matrix")
    operator = LtvOperator(SignalSpace(payload.codomain_dims), SignalSpace(payload.domain_dims), entries)
    if payload.causal:
        corners = corner_norms(operator)
        if corners.size and corners.max() > 0.0:
            raise DimensionMismatchError(
                "payload.entries is declared causal but has nonzero blocks above the diagonal",
            )
    return operator


def system_from_operator(operator: LtvOperator, name: str = "") -> SystemDescription:
    causal = bool(corner_norms(operator).max(initial=0.0) == 0.0)
    return SystemDescription(
        kind="block_matrix",
        horizon=operator.horizon,
        name=name,
        payload=BlockMatrixPayload(
            codomain_dims=list(operator.codomain.dims),
            domain_dims=list(operator.domain.dims),
            entries=operator.matrix.tolist(),
            causal=causal,
        ),
    )


def _format_validation_error(path: str, error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<document>"
        lines.append(f"{path}: field '{location}': {item['msg']}")
    return "\n".join(lines)


def parse_system_text(text: str, path: str = "<string>") -> SystemDescription:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SystemValidationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return SystemDescription.model_validate(data)
    except ValidationError as e:
        raise SystemValidationError(_format_validation_error(path, e)) from e


def parse_system(path: str | Path) -> SystemDescription:
    """Read and validate a system description file.

    Raises:
        SystemValidationError: unreadable file, malformed JSON (with line and
            column) or schema/shape violations (with the offending field)
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SystemValidationError(f"{path}: cannot read file: {e}") from e
    description = parse_system_text(text, str(path))
    logger.debug(f"Parsed {description.kind} system '{description.name}' from {path}")
    return description


def serialize_system(description: SystemDescription) -> str:
    return json.dumps(description.model_dump(), indent=2) + "\n"


class RunReport(BaseModel):
    version: str = VERSION
    schema_version: int = REPORT_SCHEMA_VERSION
    command: str
    input_digest: str
    seed: int | None = None
    results: dict[str, Any]
    timings: dict[str, float] | None = None


def input_digest(descriptions: list[SystemDescription], options: dict[str, Any]) -> str:
    """SHA-256 over the canonical form of the inputs and the options that affect results."""
    canonical = json.dumps(
        {"systems": [d.model_dump() for d in descriptions], "options": options},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode()).hexdigest()


def to_jsonable(value: Any) -> Any:
    """Plain JSON types from reports, models, numpy values and operators."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, LtvOperator):
        return to_jsonable(system_from_operator(value))
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def render_report(report: RunReport) -> str:
    data = to_jsonable(report)
    if data["timings"] is None:
        del data["timings"]
    return json.dumps(data, indent=2) + "\n"


def write_report(report: RunReport, output: str | Path | None = None) -> str:
    text = render_report(report)
    if output is None:
        print(text, end="")
    else:
        Path(output).write_text(text)
        logger.info(f"Report written to {output}")
    return text
