import pytest
import yaml
from hypothesis import given, settings, strategies as st

from rpltrust.scenario import (
    REFERENCE_ATTACKERS, MAX_NODES, ScenarioError, emit_scenario, from_dict, load_scenario, random_placement,
    resolve_positions,
)

CASES = settings(max_examples=100, deadline=None)


def test_empty_file_gives_reference_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    c = load_scenario(path)
    assert c.topology.nodes == 15 and c.topology.root == 1 and c.topology.area == 130.0
    assert c.radio.tx_range == 50.0 and c.radio.interference_range == 100.0
    assert c.traffic.packet_size == 46 and c.traffic.data_period == 60.0 and c.traffic.duration == 9000.0
    assert sorted(c.attackers) == sorted(REFERENCE_ATTACKERS) and len(c.attackers) == 3
    assert (c.defense.w_s, c.defense.w_d) == (0.3, 0.7)


def test_root_attacker_rejected():
    with pytest.raises(ScenarioError) as err:
        from_dict({"attack": {"ids": [1, 4]}})
    assert any("attack.ids[0]" in v for v in err.value.violations)


def test_weight_complement_filled():
    c = from_dict({"defense": {"w_s": 0.2}})
    assert c.defense.w_d == pytest.approx(0.8)


def test_unknown_keys_rejected_with_paths():
    with pytest.raises(ScenarioError) as err:
        from_dict({"radio": {"tx_rnage": 40}, "bogus": 1})
    text = " ".join(err.value.violations)
    assert "radio.tx_rnage" in text and "bogus" in text


def test_every_violation_listed():
    with pytest.raises(ScenarioError) as err:
        from_dict({"defense": {"threshold": 2.0, "scheme": "magic"}, "traffic": {"duration": -1}})
    assert len(err.value.violations) >= 3


def test_node_cap():
    with pytest.raises(ScenarioError):
        from_dict({"topology": {"nodes": MAX_NODES + 1, "layout": "random"}})


def test_bad_yaml_root(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_random_placement_connected_and_seeded():
    a = random_placement(20, 130.0, 50.0, seed=4)
    assert a == random_placement(20, 130.0, 50.0, seed=4)
    for n, p in a.items():
        assert any(((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2) ** 0.5 <= 50.0 for m, q in a.items() if m != n)


@CASES
@given(st.integers(0, 10_000), st.sampled_from(["proposed", "def", "hp", "tprp"]), st.floats(0.05, 0.95),
       st.floats(0, 1), st.floats(0, 2), st.sampled_from(["reference", "random"]))
def test_config_round_trip(seed, scheme, threshold, w_s, lam, layout):
    raw = {"seed": seed, "defense": {"scheme": scheme, "threshold": threshold, "w_s": w_s, "lambda_g": lam},
           "topology": {"layout": layout}}
    c = from_dict(raw)
    again = from_dict(yaml.safe_load(emit_scenario(c)))
    assert again == c
    assert emit_scenario(again) == emit_scenario(c)


def test_echo_has_no_hidden_defaults():
    echoed = yaml.safe_load(emit_scenario(from_dict({})))
    for section in ("topology", "radio", "traffic", "rpl", "attack", "defense", "energy"):
        assert all(v is not None for k, v in echoed[section].items() if k not in ("placement_seed", "window")), section
    assert resolve_positions(from_dict({})) == resolve_positions(from_dict(echoed))
