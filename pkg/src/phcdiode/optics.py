"""Symmetric / antisymmetric supermodes of the coupled slabs."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .devicecfg import DeviceParams


@dataclass(frozen=True)
class ModePair:
    lambda_S: float
    lambda_AS: float
    fwhm_S: float
    fwhm_AS: float
    splitting: float
    thermal_shift: float

    def wavelength(self, mode: str) -> float:
        if mode == "S":
            return self.lambda_S
        if mode == "AS":
            return self.lambda_AS
        raise ValueError(f"mode must be 'S' or 'AS', got {mode!r}")

    def fwhm(self, mode: str) -> float:
        return self.fwhm_S if mode == "S" else self.fwhm_AS


def splitting(p: DeviceParams, gap: float) -> float:
    """S/AS splitting (nm) at membrane gap ``gap`` (nm)."""
    if gap <= 0:
        raise ValueError("gap must be > 0")
    o = p.optics
    return o.s0 * math.exp(-(gap - p.mech.d0) / o.L_c)


def thermal_shift(p: DeviceParams, I: float) -> float:
    """Common red shift (nm) of both modes from injection heating."""
    if I < 0:
        raise ValueError("current must be >= 0")
    return p.optics.kappa_th * (I - p.optics.I_ref)


def mode_pair(p: DeviceParams, gap: float, I: float) -> ModePair:
    s = splitting(p, gap)
    th = thermal_shift(p, I)
    centre = p.optics.lambda0 + th
    lam_S = centre + s / 2.0
    lam_AS = centre - s / 2.0
    Q = p.optics.Q
    return ModePair(
        lambda_S=lam_S,
        lambda_AS=lam_AS,
        fwhm_S=lam_S / Q,
        fwhm_AS=lam_AS / Q,
        splitting=s,
        thermal_shift=th,
    )


def decompose_tuning(sweep):
    """Split a cavity-voltage sweep into mechanical and thermal tuning ranges.

    ``sweep`` is a sequence of ``(V_CAV, lambda_S, lambda_AS)`` rows (or a
    :class:`~phcdiode.spectra.SweepTable`).  The shifts are taken between the
    lowest- and highest-voltage rows.  Returns ``(mech_range, thermal_range)``
    in nm: the mean and semi-difference of the two absolute shifts.
    """
    rows = _as_rows(sweep)
    if len(rows) < 2:
        raise ValueError("need at least two sweep rows")
    lo = min(rows, key=lambda r: r[0])
    hi = max(rows, key=lambda r: r[0])
    d_S = abs(hi[1] - lo[1])
    d_AS = abs(hi[2] - lo[2])
    return (d_S + d_AS) / 2.0, (d_AS - d_S) / 2.0


def _as_rows(sweep):
    if hasattr(sweep, "rows"):
        return [(r.V, r.lambda_S, r.lambda_AS) for r in sweep.rows if not r.pulled_in]
    return [tuple(map(float, r[:3])) for r in sweep]
