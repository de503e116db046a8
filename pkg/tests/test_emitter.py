import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phcdiode.emitter import (
    cavity_lorentzian,
    decay_budget,
    el_enhancement,
    exciton_wavelength,
    injection_current,
    purcell_max,
    purcell_rate,
    rc_cutoff,
    tunneling_rate,
)
from phcdiode.opfinder import find_resonant_bias, _mode_wavelength


@pytest.fixture(scope="module")
def lam_c(paper):
    return _mode_wavelength(paper, 2.2, 1.63, "S")


def test_exciton_on_resonance(paper, lam_c):
    assert exciton_wavelength(paper, 1.63) == pytest.approx(lam_c, abs=1e-9)


def test_stark_offset_gives_reference_detuning(paper, lam_c):
    assert exciton_wavelength(paper, 1.4675) - lam_c == pytest.approx(0.65, abs=1e-9)


def test_zero_stark_slope(paper):
    flat = paper.replace(emitter={"stark_slope": 0.0})
    assert exciton_wavelength(flat, 0.5) == exciton_wavelength(flat, 2.0)


def test_blue_shift_with_bias(paper):
    assert exciton_wavelength(paper, 1.7) < exciton_wavelength(paper, 1.6)


def test_tunneling_negligible_above_threshold(paper):
    assert tunneling_rate(paper, 1.5) <= 0.0069
    assert tunneling_rate(paper, paper.emitter.V_th) <= 0.01 / paper.emitter.tau_bulk


def test_tunneling_strictly_increasing_below_threshold(paper):
    rates = [tunneling_rate(paper, v) for v in np.linspace(1.2, 0.6, 30)]
    assert np.all(np.diff(rates) > 0)


@given(st.floats(-1.0, 4.0), st.floats(-1.0, 4.0))
def test_tunneling_monotone(paper, a, b):
    lo, hi = sorted((a, b))
    assert tunneling_rate(paper, lo) >= tunneling_rate(paper, hi)


def test_tunneling_off(paper):
    off = paper.replace(emitter={"tun_prefactor": 0.0})
    assert tunneling_rate(off, -5.0) == 0.0


def test_purcell_max_value(paper):
    assert purcell_max(paper) == pytest.approx(2.1587, abs=1e-3)
    # with tunneling switched off the closed form is 1/0.42 - 1/4.5
    off = paper.replace(emitter={"tun_prefactor": 0.0})
    assert purcell_max(off) == pytest.approx(1 / 0.42 - 1 / 4.5, rel=1e-12)
    assert 1.0 / purcell_max(off) == pytest.approx(0.4632, abs=1e-4)


def test_purcell_half_width(paper):
    lam = 1236.0
    half = lam / paper.optics.Q / 2
    assert purcell_rate(paper, half, lam) == pytest.approx(purcell_max(paper) / 2, rel=1e-12)
    assert purcell_rate(paper, 1e6, lam) < 1e-9
    with pytest.raises(ValueError):
        purcell_rate(paper, 0.0, 0.0)


def test_decay_budget_on_resonance(paper, lam_c):
    b = decay_budget(paper, 1.63, lam_c)
    assert b.tau_total == pytest.approx(0.420, abs=1e-3)
    assert b.gamma_total == (b.gamma_phc + b.gamma_leaky) + b.gamma_tun
    assert b.tau_total == 1.0 / b.gamma_total
    assert 0 <= b.beta <= 1


def test_decay_budget_far_detuned(paper):
    b = decay_budget(paper, 1.63, 1300.0)
    assert b.tau_total == pytest.approx(4.5, rel=0.01)


def test_decay_budget_tunnel_dominated(paper, lam_c):
    b = decay_budget(paper, 0.2, lam_c)
    assert b.tau_total == pytest.approx(1.0 / b.gamma_tun, rel=0.01)


@given(st.floats(-3.0, 4.0), st.floats(1000.0, 1400.0))
def test_budget_invariants(paper, v, lam):
    b = decay_budget(paper, v, lam)
    assert b.gamma_total == (b.gamma_phc + b.gamma_leaky) + b.gamma_tun
    assert b.tau_total == 1.0 / b.gamma_total
    assert 0.0 <= b.beta <= 1.0


def test_tau_monotone_in_detuning(paper, lam_c):
    lam_X = exciton_wavelength(paper, 1.63)
    taus = [decay_budget(paper, 1.63, lam_X - d).tau_total for d in np.linspace(0, 5, 60)]
    assert np.all(np.diff(taus) > 0)
    taus_neg = [decay_budget(paper, 1.63, lam_X + d).tau_total for d in np.linspace(0, 5, 60)]
    assert np.all(np.diff(taus_neg) > 0)


def test_plateau_above_threshold(paper):
    taus = [decay_budget(paper, v).tau_total for v in np.linspace(paper.emitter.V_th, 3.5, 200)]
    assert (max(taus) - min(taus)) / max(taus) < 0.01


def test_enhancement_examples(paper):
    lam = 1236.18
    assert el_enhancement(paper, 0.0, lam) == pytest.approx(10.0, rel=1e-12)
    lam_c = 1225.0
    ratio = el_enhancement(paper, 0.0, lam_c) / el_enhancement(paper, 0.65, lam_c)
    assert ratio == pytest.approx(9.7, abs=0.3)
    flat = paper.replace(emitter={"enh_max": 1.0})
    assert el_enhancement(flat, 0.3, lam) == 1.0


def test_plain_lorentzian_falls_short(paper):
    assert cavity_lorentzian(0.65, 1225.0, 2270.0) == pytest.approx(0.147, abs=2e-3)


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_enhancement_even_and_decreasing(paper, a, b):
    lam = 1236.0
    assert el_enhancement(paper, a, lam) == el_enhancement(paper, -a, lam)
    lo, hi = sorted((a, b))
    assert el_enhancement(paper, lo, lam) >= el_enhancement(paper, hi, lam)


def test_rc_cutoff():
    assert rc_cutoff(1.5e3, 15e-12) == pytest.approx(1 / (2 * math.pi * 1.5e3 * 15e-12), rel=1e-15)
    assert rc_cutoff(1.5e3, 15e-12) / 1e6 == pytest.approx(7.074, abs=1e-3)
    assert rc_cutoff(200.0, 1e-12) / 1e6 == pytest.approx(795.8, abs=0.1)
    assert rc_cutoff(400.0, 1e-12) == pytest.approx(rc_cutoff(200.0, 1e-12) / 2, rel=1e-15)
    for bad in ((0.0, 1e-12), (100.0, 0.0), (-1.0, 1e-12)):
        with pytest.raises(ValueError):
            rc_cutoff(*bad)


def test_injection_current(paper):
    assert injection_current(paper, 1.0) == 0.0
    assert injection_current(paper, 3.5) == pytest.approx(2.3, rel=1e-12)
    assert 0 < injection_current(paper, 1.63) < 0.01
