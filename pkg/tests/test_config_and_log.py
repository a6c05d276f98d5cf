import json

import numpy as np
import pytest

from cxsmc import config as cfgmod
from cxsmc.errors import ConfigError, InvalidArgumentError
from cxsmc.mission import ScenarioConfig
from cxsmc.missionlog import COLUMNS, SCHEMA_VERSION, MissionLog, MissionPhase, column_names


def test_defaults_document_builds_the_default_config():
    assert cfgmod.scenario_from_document({}).config_hash() == ScenarioConfig().config_hash()


def test_overrides_change_the_hash():
    a = cfgmod.scenario_from_document({})
    b = cfgmod.scenario_from_document({"controller": {"k_p": 0.6}})
    assert b.gains.k_p == 0.6 and a.config_hash() != b.config_hash()
    assert cfgmod.apply_overrides(a, seed=4).config_hash() != a.config_hash()


ELEMENTS = cfgmod.default_scenario_document()["chaser"]["elements"]


@pytest.mark.parametrize("doc, key", [
    ({"chaser": {"mass_kg": -1.0}}, "chaser.mass_kg"),
    ({"chaser": {"elements": {**ELEMENTS, "eccentricity": "high"}}}, "chaser.elements.eccentricity"),
    ({"chaser": {"elements": {"eccentricity": 0.1}}}, "chaser.elements.semi_major_axis_km"),
    ({"controller": {"bogus": 1}}, "controller.bogus"),
    ({"constraints": {"cone_half_angle_deg": 95.0}}, "constraints.cone_half_angle_deg"),
])
def test_schema_errors_name_the_key(doc, key):
    with pytest.raises(ConfigError) as ei:
        cfgmod.scenario_from_document(doc)
    assert ei.value.key == key


def test_semantic_errors_name_the_key():
    with pytest.raises(ConfigError) as ei:
        cfgmod.scenario_from_document({"target": {"inertia_kgm2": [[1, 2, 0], [2, 1, 0], [0, 0, 1]]}})
    assert ei.value.key == "target.inertia_kgm2"


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"seed": 1,,}')
    with pytest.raises(ConfigError, match="line 1"):
        cfgmod.load_scenario(p)


def test_shipped_scenario_is_the_default(tmp_path):
    from pathlib import Path
    doc = json.loads((Path(__file__).parents[1] / "scenarios" / "table1.json").read_text())
    assert cfgmod.scenario_from_document(doc).config_hash() == ScenarioConfig().config_hash()


# -- mission log ---------------------------------------------------------------


def random_log(n=25, seed=0):
    rng = np.random.default_rng(seed)
    rows = {}
    for name, width in COLUMNS:
        shape = (n,) if width == 1 else (n, 3, 3) if width == 9 else (n, 3)
        rows[name] = rng.normal(size=shape) * 10.0 ** rng.integers(-12, 8)
    rows["t"] = np.cumsum(rng.uniform(0.01, 1.0, n))
    rows["phase"] = np.sort(rng.integers(0, 4, n))
    rows["closed_loop"] = rng.integers(0, 2, n).astype(bool)
    return MissionLog.from_rows(rows)


def test_csv_roundtrip_is_exact(tmp_path):
    log = random_log()
    log.to_csv(tmp_path / "log.csv")
    back = MissionLog.from_csv(tmp_path / "log.csv")
    for name, _ in COLUMNS:
        np.testing.assert_array_equal(getattr(back, name), getattr(log, name))
    assert back.phase.dtype.kind == "i" and back.closed_loop.dtype == bool


def test_csv_header_and_width(tmp_path):
    random_log(3).to_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == f"# {SCHEMA_VERSION}"
    assert lines[1].split(",") == column_names()
    assert len(column_names()) == sum(w for _, w in COLUMNS)


def test_empty_or_foreign_logs_are_rejected(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text(f"# {SCHEMA_VERSION}\n" + ",".join(column_names()) + "\n")
    with pytest.raises(InvalidArgumentError, match="no samples"):
        MissionLog.from_csv(p)
    p.write_text("# other/2\nt\n1\n")
    with pytest.raises(InvalidArgumentError, match="schema"):
        MissionLog.from_csv(p)
    p.write_text(f"# {SCHEMA_VERSION}\nt,phase\n1,0\n")
    with pytest.raises(InvalidArgumentError, match="missing columns"):
        MissionLog.from_csv(p)


def test_log_order_checks():
    rows = {name: random_log(4).arrays[name] for name, _ in COLUMNS}
    rows["t"] = np.array([0.0, 2.0, 1.0, 3.0])
    with pytest.raises(InvalidArgumentError):
        MissionLog.from_rows(rows)


def test_decimate_keeps_phase_ends():
    n = 101
    rows = {name: np.zeros((n,) if w == 1 else (n, 3, 3) if w == 9 else (n, 3)) for name, w in COLUMNS}
    rows["t"] = np.arange(n, dtype=float)
    rows["phase"] = np.r_[np.zeros(50, int), np.ones(51, int)]
    log = MissionLog.from_rows(rows).decimate({0: 10.0, 1: 0.0})
    t = log.t
    assert t[0] == 0 and 49 in t and 50 in t and t[-1] == 100
    assert np.all(np.isin(np.arange(50, 101), t))
    assert set(t[t < 50]) == {0, 10, 20, 30, 40, 49}
    assert MissionPhase.Docked == 3
