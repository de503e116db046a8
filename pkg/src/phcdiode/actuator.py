"""Lumped parallel-plate electromechanics of the double membrane.

The top membrane is a spring of stiffness ``k`` pulled by the electrostatic
force of the actuation junction.  Per unit ``eps*A`` the force balance is

    k/(eps A) * (d0 - d) = V_eff**2 / (2 d**2),   V_eff = V_bi_cav - V_CAV

and only the branch d in (2 d0/3, d0] is stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .devicecfg import DeviceParams, DriveState


class PullInError(ValueError):
    """No stable equilibrium: the membrane snaps down."""

    def __init__(self, V_CAV: float, V_pi: float, V_bi: float):
        super().__init__(
            f"pull-in at V_CAV={V_CAV:g} V: |V_eff|={abs(V_bi - V_CAV):g} V exceeds "
            f"the pull-in threshold {V_pi:g} V (V_CAV outside "
            f"[{V_bi - V_pi:g}, {V_bi + V_pi:g}] V)"
        )
        self.V_CAV = V_CAV
        self.V_pi = V_pi


@dataclass(frozen=True)
class Equilibrium:
    gap: float
    V_eff: float
    stable: bool


def pull_in(p: DeviceParams):
    """Return ``(V_pi, d_pi)``: pull-in voltage (|V_eff|) and gap."""
    d0, k = p.mech.d0, p.mech.k_over_epsA
    d_pi = 2.0 * d0 / 3.0
    V_pi = math.sqrt(8.0 * k * d0**3 / 27.0)
    return V_pi, d_pi


def force_residual(p: DeviceParams, gap: float, V_eff: float) -> float:
    """Spring force minus electrostatic force (per eps*A)."""
    return p.mech.k_over_epsA * (p.mech.d0 - gap) - V_eff**2 / (2.0 * gap**2)


def equilibrium_gap(p: DeviceParams, V_CAV: float, max_iter: int = 200) -> Equilibrium:
    """Stable equilibrium gap (nm) at actuation voltage ``V_CAV``.

    Bracketed bisection on (2 d0/3, d0]; raises :class:`PullInError` when no
    stable root exists.
    """
    d0 = p.mech.d0
    V_eff = p.mech.V_bi_cav - V_CAV
    if V_eff == 0.0:
        return Equilibrium(gap=d0, V_eff=0.0, stable=True)
    V_pi, d_pi = pull_in(p)
    lo, hi = d_pi, d0
    # residual > 0 at lo is required for a stable root in (lo, hi]
    if force_residual(p, lo, V_eff) <= 0.0:
        raise PullInError(V_CAV, V_pi, p.mech.V_bi_cav)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if force_residual(p, mid, V_eff) > 0.0:
            lo = mid
        else:
            hi = mid
    # pick the bracket end with the smaller residual
    gap = lo if abs(force_residual(p, lo, V_eff)) < abs(force_residual(p, hi, V_eff)) else hi
    return Equilibrium(gap=gap, V_eff=V_eff, stable=True)


def gap_slope(p: DeviceParams, V_CAV: float) -> float:
    """d(gap)/d(V_CAV) on the stable branch, from implicit differentiation."""
    eq = equilibrium_gap(p, V_CAV)
    d, V = eq.gap, eq.V_eff
    k = p.mech.k_over_epsA
    dd_dVeff = -(V / d**2) / (k - V**2 / d**3)
    return -dd_dVeff


def crosstalk_current(p: DeviceParams, V_CAV: float, I_nominal: float) -> float:
    """Injection current reduced by leakage into the actuation diode (mA)."""
    if I_nominal < 0:
        raise ValueError("I_nominal must be >= 0")
    c = p.crosstalk
    frac = (V_CAV - c.V_low) / (c.V_ref - c.V_low)
    I_line = c.I_at_Vlow + frac * (c.I_at_Vref - c.I_at_Vlow)
    return max(0.0, I_line * I_nominal / c.I_at_Vref)


def drive_state(p: DeviceParams, V_CAV: float, V_QD: float) -> DriveState:
    from .emitter import injection_current

    I = crosstalk_current(p, V_CAV, injection_current(p, V_QD))
    return DriveState(V_CAV=float(V_CAV), V_QD=float(V_QD), I_QD=I)
