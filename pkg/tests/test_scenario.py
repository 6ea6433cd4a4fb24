import math

import numpy as np
import pytest

from einsel.errors import CapacityError, ParseError, ValidationError
from einsel.scenario import ScenarioError, dump_scenario, load_scenario, parse_scenario, parse_state

MINIMAL = """\
[scenario]
id = mini
entities = 2

[hamiltonian]
1.0 * Z0 Z1

[initial_state]
0 +

[povm]
label: a
proj: 0 on 0

label: b
proj: 1 on 0

[observer]
epsilon = 0.05

[schedule]
dt = 0.5
steps = 4
"""


def test_minimal_loads():
    sc = parse_scenario(MINIMAL)
    assert sc.id == "mini" and sc.entity_count == 2
    assert sc.mode == "witness" and sc.seed == 0 and sc.gap_policy == "break"
    assert np.allclose(np.asarray(sc.state()), [1, 1, 0, 0] / np.sqrt(2))
    assert sc.povm().labels == ("a", "b")
    assert sc.analysis is None


def test_golden_scenarios_round_trip(scenario_dir):
    paths = sorted(scenario_dir.glob("*.scn"))
    assert len(paths) >= 6
    for path in paths:
        text = path.read_text()
        sc = load_scenario(path)
        assert dump_scenario(sc) == text, path.name
        assert parse_scenario(dump_scenario(sc)) == sc


def test_field_path_for_out_of_range_term():
    text = MINIMAL.replace("1.0 * Z0 Z1", "1.0 * Z0 Z1\n0.5 * Z5").replace("entities = 2", "entities = 3").replace("0 +", "0 + 0")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert "hamiltonian.terms[1]: entity 5 ≥ 3" in str(info.value)
    assert info.value.category == "validation"


def test_all_errors_collected():
    text = MINIMAL.replace("epsilon = 0.05", "epsilon = 0.9\nmode = loud").replace("dt = 0.5", "dt = -1").replace("0 +", "0 q")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    messages = [str(e) for e in info.value.errors]
    assert any(m.startswith("observer:") for m in messages)
    assert any(m.startswith("schedule:") for m in messages)
    assert any(m.startswith("initial_state:") for m in messages)
    assert len(messages) >= 3


def test_parse_error_has_line_number():
    text = MINIMAL.replace("1.0 * Z0 Z1", "1.0 Z0 Z1")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.category == "parse"
    err = info.value.errors[0]
    assert isinstance(err, ParseError) and err.line == 6


def test_unknown_section_and_key():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL + "\n[extra]\nx = 1\n")
    assert "unknown section" in str(info.value)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL.replace("steps = 4", "steps = 4\nspeed = 2"))
    assert "unknown key 'speed'" in str(info.value)


def test_missing_sections():
    with pytest.raises(ScenarioError) as info:
        parse_scenario("[scenario]\nid = x\nentities = 1\n")
    text = str(info.value)
    for name in ("hamiltonian", "initial_state", "povm", "observer", "schedule"):
        assert f"missing section [{name}]" in text


def test_povm_must_be_complete():
    text = MINIMAL.replace("label: b\nproj: 1 on 0\n", "label: b\nproj: + on 0\n")
    with pytest.raises(ScenarioError, match="povm: completeness"):
        parse_scenario(text)


def test_povm_rows_and_weight():
    text = MINIMAL.replace(
        "label: a\nproj: 0 on 0\n\nlabel: b\nproj: 1 on 0\n",
        "label: half\nweight: 0.5\nrow: 1 0 0 0\nrow: 0 1 0 0\nrow: 0 0 1 0\nrow: 0 0 0 1\n\n"
        "label: rest\nproj: 0 0\nproj: 0 1\nproj: 1 0\nproj: 1 1\nweight: 0.5\n",
    )
    sc = parse_scenario(text)
    assert np.allclose(sc.povm().effects[0], np.eye(4) / 2)
    assert dump_scenario(parse_scenario(dump_scenario(sc))) == dump_scenario(sc)


def test_proj_on_reordered_entities():
    text = MINIMAL.replace("proj: 0 on 0", "proj: 0 1 on 1 0").replace("proj: 1 on 0", "proj: 0 0\nproj: 0 1\nproj: 1 1")
    sc = parse_scenario(text)
    # entity 1 in |0>, entity 0 in |1>: basis index 2
    assert np.allclose(np.diag(sc.povm().effects[0]).real, [0, 0, 1, 0])


def test_named_states_and_amplitudes():
    assert np.allclose(np.asarray(parse_state("-i", 1)), [1 / math.sqrt(2), -1j / math.sqrt(2)])
    assert np.allclose(np.asarray(parse_state("amplitudes: 0.6 0.8j", 1)), [0.6, 0.8j])
    with pytest.raises(ValidationError):
        parse_state("amplitudes: 1 1", 1)
    with pytest.raises(ValidationError):
        parse_state("0 0", 1)


def test_capacity_category(monkeypatch):
    monkeypatch.setenv("EINSEL_MAX_ENTITIES", "1")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL)
    assert info.value.category == "capacity"
    assert any(isinstance(e, CapacityError) for e in info.value.errors)


def test_analysis_defaults_and_checks():
    sc = parse_scenario(MINIMAL + "\n[analysis]\nsystem = 0\n")
    assert sc.analysis.fragment == (1,) and sc.analysis.eta == 0.1
    with pytest.raises(ScenarioError, match="overlaps"):
        parse_scenario(MINIMAL + "\n[analysis]\nsystem = 0\nfragment = 0 1\n")
    with pytest.raises(ScenarioError, match="both fragments"):
        parse_scenario(MINIMAL + "\n[analysis]\nsystem = 0\nf1 = 1\n")


def test_overrides():
    sc = parse_scenario(MINIMAL + "\n[analysis]\nsystem = 0\n").with_overrides(seed=9, epsilon=0.2, eta=0.3)
    assert (sc.seed, sc.epsilon, sc.analysis.eta) == (9, 0.2, 0.3)
    with pytest.raises(ValidationError):
        sc.with_overrides(epsilon=0.7)
