import pytest

from conftest import SCENARIOS
from src.errors import ScenarioError
from src.scenario import Scenario, validate_with_schema
from src.tracecheck import GroupSpec, PropertyId

BASE = """
version: 1
name: base
protocol:
  name: simpleplus
  provers: [P0, P1]
"""


def adversary(flags, *actions, t_attack=None):
    lines = [f"adversary:\n  flags: [{', '.join(flags)}]"]
    if t_attack is not None:
        lines.append(f"  t_attack: {t_attack}")
    if actions:
        lines.append("  schedule:")
        lines += [f"    - {a}" for a in actions]
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.scn")), ids=lambda p: p.stem)
def test_bundled_scenarios_load(path, config):
    loaded = Scenario.load(path, config)
    assert loaded.name == path.stem
    assert loaded.properties


def test_unknown_fields_are_rejected(from_yaml):
    with pytest.raises(ScenarioError) as info:
        from_yaml(BASE + "colour: blue\n")
    assert info.value.diagnostics
    assert "colour" in str(info.value)


def test_version_must_be_one():
    problems = validate_with_schema({"version": 2, "protocol": {"name": "simpleplus"}})
    assert len(problems) == 1
    assert problems[0].startswith("['version']")


def test_unreadable_scenario(tmp_path):
    with pytest.raises(ScenarioError):
        Scenario.load(tmp_path / "missing.scn")
    bad = tmp_path / "list.scn"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ScenarioError):
        Scenario.load(bad)


@pytest.mark.parametrize("adv, problem", [
    (adversary(["dy"], "{at: 1, action: compromise, prover: P0}"), "needs flag sw"),
    (adversary(["sw"], "{at: 1, action: restore, prover: P0}"), "needs flag msw"),
    (adversary(["sw"], "{at: 1, action: read, prover: P0}"), "needs flag pni or pi"),
    (adversary(["pi"], "{at: 1, action: capture, prover: P0, until: 9}"), "needs adversary.t_attack"),
    (adversary(["pi"], "{at: 1, action: capture, prover: P0, until: 3}", t_attack=4), "window shorter"),
    (adversary(["pi"], "{at: 1, action: capture, prover: P0}", t_attack=4), "needs until"),
    (adversary(["sw"], "{at: 1, action: compromise, prover: P7}"), "unknown prover"),
    (adversary(["sw"], "{at: 1, action: compromise, prover: P0, label: evil}"), "label must start"),
    (adversary(["sw"], "{at: 1, action: compromise, prover: P0, until: 4}"), "only apply to capture"),
])
def test_schedule_is_checked_against_capabilities(from_yaml, adv, problem):
    with pytest.raises(ScenarioError) as info:
        from_yaml(BASE + adv)
    assert any(problem in d for d in info.value.diagnostics)


def test_fields_and_defaults(from_yaml):
    loaded = from_yaml(BASE)
    assert loaded.provers == ["P0", "P1"]
    assert loaded.properties == list(PropertyId)
    assert loaded.variants == ["star"]
    assert loaded.group_spec == GroupSpec()
    assert loaded.horizon == 200
    assert loaded.expect == {}


def test_header_describes_the_run(scenario):
    trace = scenario("simpleplus_paper").run(variant="V-P1")
    header = trace.header
    assert header["scenario"] == "simpleplus_paper"
    assert header["variant"] == "V-P1"
    assert header["provers"] == ["P1"]
    assert header["adversary"]["flags"] == ["sw", "dy"]
    assert header["interactive"] is True


def test_acceptable_states_from_scenario(from_yaml):
    loaded = from_yaml(BASE + "acceptable:\n  labels: {P0: [good, v2]}\n"
                              "  updates: [{at: 5, prover: P1, labels: [v3]}]\n")
    acceptable = loaded.acceptable(loaded.provers)
    assert acceptable.at("P0", 0) == {"good", "v2"}
    assert acceptable.at("P1", 5) == {"v3"}
