"""Quantum-dot exciton: Stark tuning, decay channels, EL enhancement."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .devicecfg import DeviceParams


@dataclass(frozen=True)
class DecayBudget:
    """Decay rates in 1/ns.

    In the bulk configuration (no cavity) ``gamma_phc`` is zero and the
    homogeneous-medium radiative rate ``1/tau_bulk`` occupies the
    ``gamma_leaky`` slot.
    """

    gamma_phc: float
    gamma_leaky: float
    gamma_tun: float
    gamma_total: float
    tau_total: float
    beta: float


def injection_current(p: DeviceParams, V_QD: float) -> float:
    """Diode current (mA) before crosstalk; zero below threshold."""
    d, V_th = p.diode, p.emitter.V_th
    if V_QD <= V_th:
        return 0.0
    num = math.expm1((V_QD - V_th) / d.V_scale)
    den = math.expm1((d.V_drive - V_th) / d.V_scale)
    return d.I_at_Vdrive * num / den


def exciton_wavelength(p: DeviceParams, V_QD: float) -> float:
    e = p.emitter
    return e.lambda_X_at_res + e.stark_slope * (V_QD - e.V_res / 1000.0)


def tunneling_rate(p: DeviceParams, V_QD: float) -> float:
    """Field-assisted escape rate out of the dot (1/ns), falling with V_QD."""
    e = p.emitter
    if e.tun_prefactor == 0.0:
        return 0.0
    return e.tun_prefactor * math.exp(-(V_QD - e.V_th) / e.tun_scale)


def cavity_lorentzian(detuning: float, lambda_mode: float, Q: float) -> float:
    """Unit-height cavity Lorentzian at ``detuning`` nm."""
    width = lambda_mode / Q
    x = 2.0 * detuning / width
    return 1.0 / (1.0 + x * x)


def purcell_max(p: DeviceParams) -> float:
    from .devicecfg import calibrate_purcell_max

    return calibrate_purcell_max(p)


def purcell_rate(p: DeviceParams, detuning: float, lambda_mode: float) -> float:
    """Decay rate into the cavity mode (1/ns)."""
    if lambda_mode <= 0:
        raise ValueError("lambda_mode must be > 0")
    return purcell_max(p) * cavity_lorentzian(detuning, lambda_mode, p.optics.Q)


def decay_budget(p: DeviceParams, V_QD: float, lambda_mode: float | None = None) -> DecayBudget:
    """Channel decomposition of the exciton decay at bias ``V_QD``.

    ``lambda_mode=None`` selects the bulk (no cavity) configuration.
    Summation order: (phc + leaky) + tun.
    """
    g_tun = tunneling_rate(p, V_QD)
    if lambda_mode is None:
        g_phc = 0.0
        g_leaky = 1.0 / p.emitter.tau_bulk
    else:
        if lambda_mode <= 0:
            raise ValueError("lambda_mode must be > 0")
        delta = exciton_wavelength(p, V_QD) - lambda_mode
        g_phc = purcell_rate(p, delta, lambda_mode)
        g_leaky = 1.0 / p.emitter.tau_leaky
    total = (g_phc + g_leaky) + g_tun
    return DecayBudget(
        gamma_phc=g_phc,
        gamma_leaky=g_leaky,
        gamma_tun=g_tun,
        gamma_total=total,
        tau_total=1.0 / total,
        beta=g_phc / total,
    )


def el_enhancement(p: DeviceParams, detuning: float, lambda_mode: float) -> float:
    """Electroluminescence intensity enhancement, ``enh_max`` on resonance."""
    if lambda_mode <= 0:
        raise ValueError("lambda_mode must be > 0")
    e = p.emitter
    L = cavity_lorentzian(detuning, lambda_mode, p.optics.Q)
    return 1.0 + (e.enh_max - 1.0) * L**e.enh_exponent


def rc_cutoff(R: float, C: float) -> float:
    """RC-limited modulation bandwidth in Hz (R in ohm, C in farad)."""
    if R <= 0 or C <= 0:
        raise ValueError("R and C must be positive")
    return 1.0 / (2.0 * math.pi * R * C)
