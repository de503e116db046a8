import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from phcdiode.devicecfg import (
    ConfigError,
    ConfigParseError,
    DeviceParams,
    build_paper_device,
    calibrate_splitting,
    calibrate_stiffness,
    calibrate_thermal,
    dumps_config,
    load_config,
    load_preset,
    preset_path,
    write_config,
)


def test_preset_anchor_values(paper):
    assert paper.mech.d0 == 200.0
    assert paper.optics.Q == 2270.0
    assert paper.emitter.tau_bulk == 1.45
    assert paper.detector.efficiency == 0.45


def test_shipped_preset_matches_builder():
    assert load_preset() == build_paper_device()


def test_round_trip_identity(paper, tmp_path):
    path = tmp_path / "cfg.json"
    write_config(paper, path)
    again = load_config(path)
    assert again == paper
    write_config(again, tmp_path / "cfg2.json")
    assert (tmp_path / "cfg2.json").read_bytes() == path.read_bytes()


def test_dict_round_trip(paper):
    assert DeviceParams.from_dict(json.loads(dumps_config(paper))) == paper


def _with(paper, section, key, value):
    d = paper.to_dict()
    d[section][key] = value
    return d


def test_efficiency_out_of_range_names_field(paper, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(_with(paper, "detector", "efficiency", 1.2)))
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert exc.value.field == "detector.efficiency"


def test_unknown_key_is_error(paper):
    d = paper.to_dict()
    d["optics"]["Q_typo"] = 1.0
    with pytest.raises(ConfigError, match="optics.Q_typo"):
        DeviceParams.from_dict(d)


def test_missing_key_is_error(paper):
    d = paper.to_dict()
    del d["mech"]["d0_nm"]
    with pytest.raises(ConfigError, match="mech.d0_nm"):
        DeviceParams.from_dict(d)


def test_missing_section_is_error(paper):
    d = paper.to_dict()
    del d["source"]
    with pytest.raises(ConfigError, match="source"):
        DeviceParams.from_dict(d)


def test_wrong_type_is_error(paper):
    with pytest.raises(ConfigError, match="optics.Q"):
        DeviceParams.from_dict(_with(paper, "optics", "Q", "high"))


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    with pytest.raises(ConfigParseError):
        load_config(path)


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nowhere.json"
    with pytest.raises(FileNotFoundError, match="nowhere.json"):
        load_config(missing)


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_path("no_such_device")


def test_replace_validates(paper):
    assert paper.replace(emitter={"stark_slope": 0.0}).emitter.stark_slope == 0.0
    with pytest.raises(ConfigError):
        paper.replace(detector={"efficiency": 0.0})


def test_params_are_immutable(paper):
    with pytest.raises(Exception):
        paper.mech.d0 = 100.0


# calibration

def test_calibrate_splitting_preset_anchors():
    s0, L_c = calibrate_splitting((200, 37.2), (145, 71.2))
    assert s0 == pytest.approx(37.2, abs=1e-12)
    assert L_c == pytest.approx(55 / math.log(71.2 / 37.2), rel=1e-12)
    assert abs(L_c - 84.7) <= 0.1


def test_calibrate_splitting_brute_force():
    # independent solve: scan L_c for the value whose law hits the second anchor
    import numpy as np

    L = np.linspace(50, 120, 700001)
    err = np.abs(37.2 * np.exp(55 / L) - 71.2)
    L_bf = L[np.argmin(err)]
    assert calibrate_splitting((200, 37.2), (145, 71.2))[1] == pytest.approx(L_bf, abs=2e-4)


@given(st.floats(1.0, 100.0), st.floats(5.0, 300.0), st.floats(100.0, 300.0))
def test_calibrate_splitting_decay_length_definition(s, L, d):
    s0, L_c = calibrate_splitting((d, s), (d + L, s * math.exp(-1)))
    assert L_c == pytest.approx(L, rel=1e-12)
    assert s0 == pytest.approx(s, rel=1e-12)


@given(st.floats(100.0, 250.0), st.floats(1.0, 80.0), st.floats(-80.0, -1.0), st.floats(1.0, 80.0))
def test_calibration_exact_at_anchors(da, s_a, dgap, extra):
    db = da + dgap
    sb = s_a + extra
    s0, L_c = calibrate_splitting((da, s_a), (db, sb))
    law = lambda d: s0 * math.exp(-(d - da) / L_c)
    assert abs(law(da) - s_a) / s_a < 1e-12
    assert abs(law(db) - sb) / sb < 1e-12


@pytest.mark.parametrize("a,b", [((200, 37.2), (200, 37.2)), ((200, 0.0), (145, 71.2)), ((200, 37.2), (145, -1))])
def test_calibrate_splitting_errors(a, b):
    with pytest.raises(ValueError):
        calibrate_splitting(a, b)


def test_calibrate_thermal():
    assert calibrate_thermal(0.6, 1.6) == pytest.approx(2.667, abs=1e-3)
    assert calibrate_thermal(0.6, 0.0) == 0.0
    assert calibrate_thermal(1.2, 1.6) == pytest.approx(1.333, abs=1e-3)
    with pytest.raises(ValueError):
        calibrate_thermal(0.0, 1.6)


def test_calibrate_thermal_brute_force():
    import numpy as np

    kappa = np.linspace(0, 5, 500001)
    best = kappa[np.argmin(np.abs(kappa * (2.3 - 1.7) - 1.6))]
    assert calibrate_thermal(2.3 - 1.7, 1.6) == pytest.approx(best, abs=2e-5)


def test_calibrate_stiffness_hits_anchor(paper):
    from phcdiode.actuator import equilibrium_gap

    k = calibrate_stiffness(200.0, 2.3, -1.0, 145.0)
    assert k == pytest.approx(paper.mech.k_over_epsA, rel=1e-12)
    assert equilibrium_gap(paper, -1.0).gap == pytest.approx(145.0, abs=1e-6)
    with pytest.raises(ValueError):
        calibrate_stiffness(200.0, 2.3, -1.0, 120.0)
