import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phcdiode.optics import decompose_tuning, mode_pair, splitting, thermal_shift


def test_splitting_examples(paper):
    assert splitting(paper, 200.0) == pytest.approx(37.2, abs=1e-12)
    assert splitting(paper, 145.0) == pytest.approx(71.2, abs=1e-9)
    assert splitting(paper, 200.0 + paper.optics.L_c) == pytest.approx(37.2 / math.e, rel=1e-12)


def test_thermal_shift_examples(paper):
    assert thermal_shift(paper, 2.3) == 0.0
    assert thermal_shift(paper, 1.7) == pytest.approx(-1.6, abs=1e-9)
    assert thermal_shift(paper, 2.0) == pytest.approx(-0.8, abs=1e-9)


def test_mode_pair_endpoints(paper):
    m = mode_pair(paper, 200.0, 2.3)
    assert m.lambda_S == pytest.approx(1242.3, abs=1e-9)
    assert m.lambda_AS == pytest.approx(1205.1, abs=1e-9)
    m = mode_pair(paper, 145.0, 1.7)
    assert m.lambda_S == pytest.approx(1257.7, abs=0.05)
    assert m.lambda_AS == pytest.approx(1186.5, abs=0.05)


def test_linewidth(paper):
    assert 1225.0 / paper.optics.Q == pytest.approx(0.5396, abs=1e-4)
    m = mode_pair(paper, 180.0, 2.0)
    assert m.fwhm_S == pytest.approx(m.lambda_S / 2270.0)
    assert m.fwhm_AS == pytest.approx(m.lambda_AS / 2270.0)


@given(st.floats(60.0, 400.0), st.floats(0.0, 5.0))
def test_mode_pair_invariants(paper, gap, I):
    m = mode_pair(paper, gap, I)
    assert m.lambda_S > m.lambda_AS
    assert m.splitting == pytest.approx(m.lambda_S - m.lambda_AS, rel=1e-12)
    assert abs((m.lambda_S + m.lambda_AS) / 2 - (paper.optics.lambda0 + m.thermal_shift)) < 1e-9


@given(st.floats(60.0, 400.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_splitting_independent_of_current(paper, gap, I1, I2):
    a, b = mode_pair(paper, gap, I1), mode_pair(paper, gap, I2)
    assert abs(a.splitting - b.splitting) <= 1e-12 * a.splitting


def test_monotone_in_gap(paper):
    gaps = np.linspace(140.0, 200.0, 50)
    pairs = [mode_pair(paper, g, 2.0) for g in gaps]
    s = np.array([m.splitting for m in pairs])
    lS = np.array([m.lambda_S for m in pairs])
    lAS = np.array([m.lambda_AS for m in pairs])
    assert np.all(np.diff(s) < 0)
    assert np.all(np.diff(lS) < 0)  # lambda_S grows as the gap shrinks
    assert np.all(np.diff(lAS) > 0)


def test_decompose_reference_sweep():
    rows = [(2.3, 1242.3, 1205.1), (-1.0, 1242.3 + 15.4, 1205.1 - 18.6)]
    mech, thermal = decompose_tuning(rows)
    assert mech == pytest.approx(17.0, abs=1e-9)
    assert thermal == pytest.approx(1.6, abs=1e-9)


def test_decompose_symmetric_has_no_thermal():
    mech, thermal = decompose_tuning([(0.0, 1240.0, 1200.0), (1.0, 1245.0, 1195.0)])
    assert thermal == 0.0
    assert mech == 5.0


def test_decompose_needs_two_rows():
    with pytest.raises(ValueError):
        decompose_tuning([(0.0, 1240.0, 1200.0)])


def test_decompose_forward_closure(paper):
    from phcdiode.actuator import drive_state, equilibrium_gap

    rows = []
    for V in (2.3, -1.0):
        gap = equilibrium_gap(paper, V).gap
        m = mode_pair(paper, gap, drive_state(paper, V, 3.5).I_QD)
        rows.append((V, m.lambda_S, m.lambda_AS))
    mech, thermal = decompose_tuning(rows)
    expected_thermal = paper.optics.kappa_th * (2.3 - 1.7)
    assert thermal == pytest.approx(expected_thermal, abs=1e-9)
    s_hi = splitting(paper, equilibrium_gap(paper, -1.0).gap)
    assert mech == pytest.approx((s_hi - splitting(paper, 200.0)) / 2, abs=1e-9)
