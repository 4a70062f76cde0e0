import copy
import json
import math

import pytest
import yaml

from holdsim.fixtures import SERIES_1, SERIES_2, he2019_document
from holdsim.scenario import ScenarioError, dump_scenario, load_scenario, scenario_from_document


def test_fixture_sizes(line):
    assert line.n_buses == 9
    assert line.n_stops == 30
    assert len(line.intersections) == 13
    assert len(line.road_segments) == 43
    assert line.loop_length_m == 17950


def test_fixture_totals(line):
    assert math.fsum(r.length_m for r in line.road_segments) == 17950
    assert math.fsum(s.arrival_rate for s in line.stops) == 11 * 1 + 13 * 2 + 4 * 3 + 2 * 4 == 57
    for series in line.destination_series:
        assert abs(math.fsum(series.probabilities) - 1.0) < 1e-9


def test_bus_three():
    sc = load_scenario("builtin:he2019")
    bus = sc.buses[2]
    assert (bus.id, bus.capacity, bus.initial_target_stop, bus.rtba_s) == (3, 80, 8, 40)


def test_initial_targets_literal(line):
    assert [b.initial_target_stop for b in line.buses] == [1, 4, 8, 11, 15, 18, 21, 25, 28]


def test_segment_sixteen(line):
    seg = next(g for g in line.bus_line_segments if g.id == 16)
    assert seg.ordered_elements == (("road", 22), ("intersection", 7), ("road", 23),
                                    ("intersection", 8), ("road", 24))
    assert [line.road_by_id[r].length_m for r in (22, 23, 24)] == [200, 250, 100]


def test_printed_series_sums():
    assert abs(math.fsum(SERIES_2) - 1.0) < 1e-12
    # first series is printed rounded and gets renormalized by the fixture
    assert abs(math.fsum(SERIES_1) - 0.9999) < 1e-12


def test_series_one_renormalized(line):
    s1 = line.series_by_id[1].probabilities
    assert s1[6] == pytest.approx(0.1351, abs=2e-5)


def test_noise_defaults_to_half_percent(line):
    assert line.road_by_id[3].noise_sd_s == pytest.approx(0.005 * 500)


def test_critical_point_order(line):
    pts = line.critical_points
    assert len(pts) == 30 + 13
    assert pts[0].kind == "stop" and pts[0].id == 1
    assert pts[1].kind == "intersection" and pts[1].id == 1
    assert all(a.distance_m < b.distance_m for a, b in zip(pts, pts[1:]))


def test_round_trip(line):
    doc = dump_scenario(line)
    again = scenario_from_document(doc)
    assert again == line
    assert scenario_from_document(json.loads(json.dumps(doc))) == line


def test_yaml_file_round_trip(tmp_path, line):
    path = tmp_path / "line.yaml"
    path.write_text(yaml.safe_dump(dump_scenario(line)))
    assert load_scenario(path) == line


def test_cycle_mismatch_names_intersection():
    doc = he2019_document()
    doc["intersections"][4]["cycle_s"] = 999.0
    with pytest.raises(ScenarioError) as err:
        scenario_from_document(doc)
    assert "intersection 5" in str(err.value)


def test_series_not_summing_to_one():
    doc = copy.deepcopy(he2019_document())
    probs = list(SERIES_2)
    probs[0] -= 0.001
    doc["series"][1]["probabilities"] = probs
    with pytest.raises(ScenarioError, match="series 2"):
        scenario_from_document(doc)


@pytest.mark.parametrize("mutate, entity", [
    (lambda d: d["buses"][0].update(capacity=0), "bus 1"),
    (lambda d: d["buses"][0].update(rtba_s=-1.0), "bus 1"),
    (lambda d: d["action_sets"][0].update(holding_times_s=[1.0, 2.0]), "action set 1"),
    (lambda d: d["action_sets"][0].update(holding_times_s=[0.0, 4.0, 2.0]), "action set 1"),
])
def test_invariant_errors_name_entity(mutate, entity):
    doc = copy.deepcopy(he2019_document())
    mutate(doc)
    with pytest.raises(ScenarioError, match=entity):
        scenario_from_document(doc)


def test_unknown_fixture():
    with pytest.raises(ScenarioError):
        load_scenario("builtin:nope")


def test_with_control_overrides(line):
    sc = line.with_control(strategy="nsla", stages=2, control_stops=[11, 16, 25],
                           action_set=[0, 3, 6])
    assert sc.control.stages == 2
    assert [s.id for s in sc.stops if s.controllable] == [11, 16, 25]
    assert sc.actions_at(16) == (0.0, 3.0, 6.0)
    assert sc.actions_at(1) == (0.0,)
    assert line.actions_at(16) == (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
