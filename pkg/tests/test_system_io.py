import json

import numpy as np
import pytest

from ltv_robust.core import toeplitz_lift
from ltv_robust.errors import DimensionMismatchError, SystemValidationError
from ltv_robust.system_io import (
    RunReport,
    input_digest,
    operator_from_system,
    parse_system,
    parse_system_text,
    render_report,
    serialize_system,
    system_from_operator,
    write_report,
)

DELAY = {"kind": "fir", "horizon": 4, "name": "delay", "payload": {"h": [0, 1]}}


@pytest.fixture()
def delay_file(tmp_path):
    """Delay description written to a temporary file."""
    path = tmp_path / "delay.json"
    path.write_text(json.dumps(DELAY))
    return path


# Test parsing
def test_parse_fir_description(delay_file):
    """Test that an FIR document lifts to the shift."""
    description = parse_system(delay_file)
    assert description.name == "delay"
    assert np.array_equal(operator_from_system(description).matrix, np.eye(4, k=-1))


def test_horizon_override_for_fir(delay_file):
    """Test that an FIR description can be lifted at another horizon."""
    operator = operator_from_system(parse_system(delay_file), horizon=7)
    assert operator.horizon == 7


@pytest.mark.parametrize("horizon", [0, -3])
def test_nonpositive_horizon_override_is_rejected(delay_file, horizon):
    """Test that a horizon override below one is refused instead of ignored."""
    with pytest.raises(DimensionMismatchError, match="Horizon must be >= 1"):
        operator_from_system(parse_system(delay_file), horizon=horizon)


def test_parse_state_space_description():
    """Test a time-invariant state-space document with repeated matrices."""
    text = json.dumps(
        {
            "kind": "state_space",
            "horizon": 3,
            "payload": {"A": [[[0.5]]], "B": [[[1.0]]], "C": [[[1.0]]], "D": [[[0.0]]]},
        }
    )
    operator = operator_from_system(parse_system_text(text))
    assert np.allclose(operator.matrix, toeplitz_lift([0.0, 1.0, 0.5], 3).matrix)


def test_block_matrix_must_be_causal_when_declared():
    """Test that entries above the diagonal contradict the causal flag."""
    text = json.dumps(
        {
            "kind": "block_matrix",
            "horizon": 2,
            "payload": {"codomain_dims": [1, 1], "domain_dims": [1, 1], "entries": [[1, 2], [0, 1]]},
        }
    )
    with pytest.raises(SystemValidationError, match="nonzero blocks above the diagonal"):
        parse_system_text(text)


def test_malformed_json_reports_position():
    """Test that a syntax error names the line and column."""
    with pytest.raises(SystemValidationError, match=r"plant.json:2:\d+"):
        parse_system_text('{"kind": "fir",\n  "horizon": }', "plant.json")


def test_schema_errors_name_the_field():
    """Test that validation errors point at the offending field."""
    text = json.dumps({**DELAY, "horizon": 0})
    with pytest.raises(SystemValidationError, match="field 'horizon'"):
        parse_system_text(text, "delay.json")
    with pytest.raises(SystemValidationError, match="payload.A has 3 entries"):
        parse_system_text(
            json.dumps(
                {
                    "kind": "state_space",
                    "horizon": 2,
                    "payload": {"A": [1, 1, 1], "B": [1], "C": [1], "D": [0]},
                }
            )
        )
    with pytest.raises(SystemValidationError, match="does not match kind"):
        parse_system_text(json.dumps({**DELAY, "kind": "state_space"}))


def test_unknown_fields_are_rejected():
    """Test that extra keys are refused."""
    with pytest.raises(SystemValidationError, match="Extra inputs"):
        parse_system_text(json.dumps({**DELAY, "comment": "x"}))


def test_missing_file():
    """Test that an unreadable file is a validation error."""
    with pytest.raises(SystemValidationError, match="cannot read file"):
        parse_system("/nonexistent/plant.json")


# Test serialization
def test_operator_serialization_is_exact(rng):
    """Test that a serialized operator parses back to the same floats."""
    operator = toeplitz_lift([rng.standard_normal(), rng.standard_normal()], 3)
    text = serialize_system(system_from_operator(operator, "random"))
    restored = operator_from_system(parse_system_text(text))
    assert np.array_equal(restored.matrix, operator.matrix)


def test_input_digest_is_stable():
    """Test that the digest depends on content only."""
    description = parse_system_text(json.dumps(DELAY))
    first = input_digest([description], {"tol": None})
    assert first == input_digest([parse_system_text(json.dumps(DELAY))], {"tol": None})
    assert first != input_digest([description], {"tol": 1e-6})


def test_report_rendering(tmp_path):
    """Test that timings are omitted unless given and infinities survive."""
    report = RunReport(command="corona", input_digest="abc", results={"corona_value": float("inf")})
    rendered = json.loads(render_report(report))
    assert "timings" not in rendered
    assert rendered["results"]["corona_value"] == float("inf")
    output = tmp_path / "report.json"
    write_report(report.model_copy(update={"timings": {"total_seconds": 0.5}}), output)
    assert json.loads(output.read_text())["timings"] == {"total_seconds": 0.5}


def test_state_space_delay_matches_fir_delay(delay_file):
    """Test that both ingestion paths of the delay give one operator."""
    text = json.dumps(
        {
            "kind": "state_space",
            "horizon": 4,
            "payload": {"A": [0.0], "B": [1.0], "C": [1.0], "D": [0.0]},
        }
    )
    state_space = operator_from_system(parse_system_text(text))
    assert np.array_equal(state_space.matrix, operator_from_system(parse_system(delay_file)).matrix)


def test_non_finite_numbers_are_rejected():
    """Test that NaN and infinity are refused in payloads."""
    with pytest.raises(SystemValidationError, match="payload"):
        parse_system_text('{"kind": "fir", "horizon": 2, "payload": {"h": [NaN, 1]}}')
