"""Resonance search and (V_CAV, V_QD) operating maps."""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import _io
from .actuator import PullInError, drive_state, equilibrium_gap
from .devicecfg import DeviceParams
from .emitter import decay_budget, el_enhancement, exciton_wavelength
from .optics import mode_pair


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class OperatingPoint:
    V_CAV: float
    V_QD: float
    detuning: float
    tau_total: float
    predicted_g2_zero: float
    enhancement: float
    pulled_in: bool = False
    iterations: int = 0


def predict_g2_zero(p: DeviceParams | None, point: OperatingPoint | None, rho_b: float) -> float:
    """g2(0) of an ideal single emitter diluted by a Poissonian background share ``rho_b``."""
    if not 0 <= rho_b < 1:
        raise ValueError("rho_b must be in [0, 1)")
    return 1.0 - (1.0 - rho_b) ** 2


def _mode_wavelength(p, V_CAV, V_QD, mode, gap=None):
    if gap is None:
        gap = equilibrium_gap(p, V_CAV).gap
    drive = drive_state(p, V_CAV, V_QD)
    return mode_pair(p, gap, drive.I_QD).wavelength(mode)


def detuning(p: DeviceParams, V_CAV: float, V_QD: float, mode: str | None = None) -> float:
    """Exciton minus cavity-mode wavelength (nm)."""
    mode = mode or p.spectra.cavity_mode
    return exciton_wavelength(p, V_QD) - _mode_wavelength(p, V_CAV, V_QD, mode)


def evaluate(p: DeviceParams, V_CAV: float, V_QD: float, mode: str | None = None,
             rho_b: float | None = None, iterations: int = 0) -> OperatingPoint:
    mode = mode or p.spectra.cavity_mode
    rho_b = p.source.background_fraction if rho_b is None else rho_b
    lam_c = _mode_wavelength(p, V_CAV, V_QD, mode)
    delta = exciton_wavelength(p, V_QD) - lam_c
    budget = decay_budget(p, V_QD, lam_c)
    return OperatingPoint(
        V_CAV=V_CAV, V_QD=V_QD, detuning=delta, tau_total=budget.tau_total,
        predicted_g2_zero=predict_g2_zero(p, None, rho_b),
        enhancement=el_enhancement(p, delta, lam_c), iterations=iterations,
    )


def find_resonant_bias(p: DeviceParams, V_CAV: float, mode: str | None = None,
                       V_max: float = 2.0, V_min: float | None = None, tol: float = 1e-4,
                       max_iter: int = 60) -> OperatingPoint:
    """Injection bias that tunes the exciton onto the cavity mode at ``V_CAV``.

    Bisection on the detuning over [V_th, V_max].  Raises
    :class:`NoCrossingError` when the detuning keeps its sign on the bracket.
    """
    mode = mode or p.spectra.cavity_mode
    if p.emitter.stark_slope == 0:
        raise NoCrossingError("stark_slope is zero: the exciton cannot be tuned")
    gap = equilibrium_gap(p, V_CAV).gap  # propagates pull-in

    def f(v):
        return exciton_wavelength(p, v) - _mode_wavelength(p, V_CAV, v, mode, gap)

    lo = p.emitter.V_th if V_min is None else V_min
    hi = V_max
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return evaluate(p, V_CAV, lo, mode)
    if f_hi == 0:
        return evaluate(p, V_CAV, hi, mode)
    if (f_lo > 0) == (f_hi > 0):
        raise NoCrossingError(
            f"no resonance crossing for V_QD in [{lo:g}, {hi:g}] V at V_CAV={V_CAV:g} V "
            f"(detuning {f_lo:+.4g} .. {f_hi:+.4g} nm)"
        )
    it = 0
    mid = 0.5 * (lo + hi)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0 or (hi - lo) < 1e-15:
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if abs(f_mid) < tol * 1e-3:
            break
    point = evaluate(p, V_CAV, mid, mode, iterations=it)
    if abs(point.detuning) >= tol:
        raise NoCrossingError(f"bisection did not reach |detuning| < {tol:g} nm")
    return point


def operating_map(p: DeviceParams, V_CAV_grid, V_QD_grid, mode: str | None = None,
                  rho_b: float | None = None) -> list:
    """One :class:`OperatingPoint` per grid cell; pull-in cells are flagged."""
    V_CAV_grid, V_QD_grid = list(V_CAV_grid), list(V_QD_grid)
    if not V_CAV_grid or not V_QD_grid:
        raise ValueError("grids must be nonempty")
    rows = []
    for vc in V_CAV_grid:
        for vq in V_QD_grid:
            try:
                rows.append(evaluate(p, float(vc), float(vq), mode, rho_b))
            except PullInError:
                nan = math.nan
                rows.append(OperatingPoint(float(vc), float(vq), nan, nan, nan, nan, pulled_in=True))
    return rows


MAP_HEADER = ("V_CAV", "V_QD", "detuning_nm", "tau_ns", "g2_zero", "enhancement")


def map_csv(rows) -> str:
    return _io.csv_text(MAP_HEADER, ((r.V_CAV, r.V_QD, r.detuning, r.tau_total,
                                      r.predicted_g2_zero, r.enhancement) for r in rows))
