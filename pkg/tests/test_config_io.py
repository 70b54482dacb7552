from __future__ import annotations

import json
import math
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vzfold.config_io import (
    BUNDLED_CONFIGS,
    CSV_COLUMNS,
    DEFAULT_PROVENANCE,
    ConfigError,
    ExperimentConfig,
    RunManifest,
    bundled_config_path,
    config_from_dict,
    dumps_config,
    load_config,
    loads_config,
    parse_sequence_spec,
    read_results,
    save_config,
    write_results,
)
from vzfold.lindblad import sweep
from vzfold.lowering import NoInterference, TailOverlap


def test_minimal_config_defaults():
    c = config_from_dict({"sequences": ["XY4:sym"]})
    assert c.sequences == (("XY4", "sym"),)
    assert c.tau_ns == 56.8 and c.t_g_ns == 56.8
    assert c.shots == 800
    assert c.cycle_counts == tuple(range(1, 321))
    assert c.noise.T1_us == 100.0 and isinstance(c.noise.interference, TailOverlap)
    assert c.noise.eps_err == pytest.approx(0.01 / 56.8)


def test_t_g_follows_tau():
    c = config_from_dict({"tau_ns": 60.0})
    assert c.t_g_ns == 60.0


def test_tau_shorter_than_gate_names_both_fields():
    with pytest.raises(ConfigError) as e:
        config_from_dict({"tau_ns": 40.0, "t_g_ns": 56.8})
    assert "tau_ns" in str(e.value) and "t_g_ns" in str(e.value)


@pytest.mark.parametrize(
    "doc,path",
    [
        ({"bogus": 1}, "bogus"),
        ({"noise": {"T2_us": 5}}, "noise.T2_us"),
        ({"noise": {"interference": {"type": "tail_overlap", "width": 3}}}, "noise.interference.width"),
        ({"sequences": ["XY4", "CPMG"]}, "sequences[1]"),
        ({"sequences": ["UR4:asym"]}, "sequences[0]"),
        ({"cycle_counts": [1, 3, 2]}, "cycle_counts"),
        ({"cycle_counts": []}, "cycle_counts"),
        ({"cycle_counts": [1, 2.5]}, "cycle_counts[1]"),
        ({"shots": -1}, "shots"),
        ({"initial_states": ["plus", "up"]}, "initial_states[1]"),
        ({"spacing_multipliers": [1, 0]}, "spacing_multipliers[1]"),
        ({"spacing_multipliers": [1.013]}, "spacing_multipliers[0]"),
        ({"noise": {"T1_us": -3}}, "noise.T1_us"),
        ({"noise": {"interference": {"type": "echo", "reflection_amplitude": 1.5}}}, "noise.interference"),
        ({"equal_time": "yes"}, "equal_time"),
    ],
)
def test_validation_errors_carry_field_path(doc, path):
    with pytest.raises(ConfigError) as e:
        config_from_dict(doc)
    assert e.value.path == path
    assert str(e.value).startswith(path)


def test_json_syntax_error():
    with pytest.raises(ConfigError):
        loads_config("{not json")


@given(st.binary(max_size=200))
def test_validation_is_total(data):
    try:
        c = loads_config(data)
    except ConfigError:
        return
    assert isinstance(c, ExperimentConfig)


@given(st.dictionaries(st.sampled_from(["tau_ns", "shots", "seed", "cycle_counts", "noise", "dt_ns"]),
                       st.one_of(st.integers(-5, 100), st.floats(allow_nan=True), st.none(), st.text(max_size=3))))
def test_validation_total_on_wrong_types(doc):
    try:
        c = config_from_dict(doc)
    except ConfigError:
        return
    assert isinstance(c, ExperimentConfig)


def test_infinite_times_round_trip(tmp_path):
    c = config_from_dict({"noise": {"T1_us": None, "Tphi_us": 30.0, "interference": {"type": "none"}}})
    assert math.isinf(c.noise.T1_us)
    assert isinstance(c.noise.interference, NoInterference)
    p = tmp_path / "c.json"
    save_config(c, p)
    assert load_config(p) == c
    assert json.loads(p.read_text())["noise"]["T1_us"] is None


@pytest.mark.parametrize("name", BUNDLED_CONFIGS)
def test_bundled_configs_validate_and_round_trip(name, tmp_path):
    path = bundled_config_path(name)
    c = load_config(path)
    out = tmp_path / "again.json"
    save_config(c, out)
    assert out.read_text() == path.read_text()


def test_fig3_bundle_contents():
    c = load_config(bundled_config_path("fig3_sequence_zoo"))
    assert c.sequences == (("XY4", "sym"), ("XY4", "asym"), ("UR4", None), ("YY", "sym"), ("XXbar", None))
    assert c.spacing_multipliers == (1.0,)


def test_sequence_spec_grammar():
    assert parse_sequence_spec("XY4:asym@2") == ("XY4", "asym", 2.0)
    assert parse_sequence_spec("UR4") == ("UR4", None, None)
    for bad in ("Q", "XY4:diag", "XY4@0", "XY4@x", ""):
        with pytest.raises(ConfigError):
            parse_sequence_spec(bad)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def small_config(tmp_path, **kw):
    base = load_config(bundled_config_path("fig3_sequence_zoo"))
    return replace(base, cycle_counts=tuple(range(1, 9)), output_path=str(tmp_path / "out.csv"), **kw)


def test_empty_results_header_only(tmp_path):
    c = small_config(tmp_path)
    csv_path, json_path = write_results([], [], RunManifest.for_config(c), tmp_path / "empty.csv")
    assert csv_path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    doc = json.loads(json_path.read_text())
    assert doc["fits"] == []


def test_manifest_provenance():
    m = RunManifest.for_config(ExperimentConfig()).to_dict()
    for key in ("T1_us", "Tphi_us", "eps_err", "del_err", "quasistatic_sigma", "interference"):
        assert m["defaults_provenance"][f"noise.{key}"] == "model-default"
    assert m["defaults_provenance"]["tau_ns"] == "from-experiment"
    assert set(DEFAULT_PROVENANCE) <= set(m["defaults_provenance"])
    assert m["tool_version"]


def test_manifest_timestamp_from_source_date_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert RunManifest.for_config(ExperimentConfig()).timestamp == "1970-01-01T00:00:00Z"
    monkeypatch.delenv("SOURCE_DATE_EPOCH")
    assert RunManifest.for_config(ExperimentConfig()).timestamp is None


def _run(c, path):
    from vzfold.cli import _fit_curves

    curves = sweep(c)
    fits = _fit_curves(curves)
    return write_results(curves, fits, RunManifest.for_config(c), path)


def test_sweep_rows_and_determinism(tmp_path):
    c = small_config(tmp_path)
    a_csv, a_json = _run(c, tmp_path / "a.csv")
    b_csv, b_json = _run(c, tmp_path / "b.csv")
    assert a_csv.read_bytes() == b_csv.read_bytes()
    assert a_json.read_bytes() == b_json.read_bytes()
    rows = a_csv.read_text().splitlines()
    assert len(rows) == 1 + 5 * 8
    curves = read_results(a_csv)
    assert [cv.label for cv in curves] == ["XY4:sym@1/plus", "XY4:asym@1/plus", "UR4@1/plus", "YY:sym@1/plus", "XXbar@1/plus"]
    # two-pulse sequences run two repetitions per four-pulse grid point
    assert list(curves[3].cycles) == list(range(2, 17, 2))
    assert list(curves[0].times) == pytest.approx(list(curves[3].times))
    fits = json.loads(a_json.read_text())["fits"]
    assert {"label", "a", "b", "T_D_us", "rms_residual", "osc_amplitude", "osc_period_ns"} <= set(fits[0])


def test_sweep_independent_of_workers(tmp_path):
    c = small_config(tmp_path)
    a = sweep(c, workers=1)
    b = sweep(c, workers=3)
    assert [cv.points for cv in a] == [cv.points for cv in b]
    seeds = [p.seed for cv in a for p in cv.points]
    assert seeds == [c.seed ^ i for i in range(len(seeds))]


def test_no_sampling_gives_nan(tmp_path):
    c = small_config(tmp_path, shots=0)
    curves = sweep(c)
    assert all(math.isnan(p.fidelity_sampled) for p in curves[0].points)
    text = _run(c, tmp_path / "n.csv")[0].read_text()
    assert ",nan," in text


def test_write_failure_has_path_and_leaves_nothing(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as e:
        write_results([], [], RunManifest.for_config(ExperimentConfig()), blocker / "sub" / "r.csv")
    assert str(blocker) in str(e.value)


def test_dumps_is_stable():
    c = ExperimentConfig()
    assert dumps_config(c) == dumps_config(loads_config(dumps_config(c)))
