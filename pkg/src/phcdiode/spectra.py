"""Forward synthesis of micro-EL spectra and voltage sweep tables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _io
from .actuator import PullInError, drive_state, equilibrium_gap
from .devicecfg import DeviceParams, DriveState
from .emitter import el_enhancement, exciton_wavelength
from .optics import mode_pair


@dataclass(frozen=True)
class Line:
    label: str
    center: float
    fwhm: float
    amplitude: float


@dataclass(eq=False)
class Spectrum:
    wavelengths: np.ndarray
    intensities: np.ndarray
    meta: DriveState | None = None
    lines: tuple = ()

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        if self.wavelengths.shape != self.intensities.shape or self.wavelengths.ndim != 1:
            raise ValueError("wavelengths and intensities must be 1-D and of equal length")
        if self.wavelengths.size > 1 and np.any(np.diff(self.wavelengths) <= 0):
            raise ValueError("wavelength grid must be strictly increasing")
        if np.any(self.intensities < 0):
            raise ValueError("intensities must be >= 0")

    def line(self, label: str) -> Line:
        for ln in self.lines:
            if ln.label == label:
                return ln
        raise KeyError(label)

    def crop(self, lo: float, hi: float) -> "Spectrum":
        m = (self.wavelengths >= lo) & (self.wavelengths <= hi)
        return Spectrum(self.wavelengths[m], self.intensities[m], self.meta, self.lines)


@dataclass(frozen=True)
class SweepRow:
    V: float
    V_CAV: float
    V_QD: float
    I_QD: float
    gap: float
    lambda_S: float
    lambda_AS: float
    lambda_X: float
    detuning: float
    peak_S: float
    peak_AS: float
    peak_X: float
    pulled_in: bool = False


@dataclass(frozen=True)
class SweepTable:
    swept: str  # "V_CAV" or "V_QD"
    rows: tuple = field(default_factory=tuple)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)


def lorentzian(x, center, fwhm, amplitude=1.0):
    u = 2.0 * (np.asarray(x, dtype=float) - center) / fwhm
    return amplitude / (1.0 + u * u)


def emission_lines(p: DeviceParams, drive: DriveState):
    """Spectral lines (relative amplitudes) and the mode pair at ``drive``."""
    sp = p.spectra
    gap = equilibrium_gap(p, drive.V_CAV).gap
    modes = mode_pair(p, gap, drive.I_QD)
    lam_c = modes.wavelength(sp.cavity_mode)

    mode_amp = sp.mode_amplitude * drive.I_QD / p.optics.I_ref
    lines = [
        Line("S", modes.lambda_S, modes.fwhm_S, mode_amp),
        Line("AS", modes.lambda_AS, modes.fwhm_AS, mode_amp),
    ]
    for i, (offset, rel) in enumerate(sp.band_edge_modes, start=1):
        lines.append(Line(f"B{i}", modes.lambda_AS + offset, modes.fwhm_AS, mode_amp * rel))

    if drive.I_QD > 0.0:
        lam_X = exciton_wavelength(p, drive.V_QD)
        enh = el_enhancement(p, lam_X - lam_c, lam_c)
        lines.append(Line("X", lam_X, sp.exciton_fwhm, sp.exciton_amplitude * enh))
        lines.append(Line("feeding", lam_c, modes.fwhm(sp.cavity_mode),
                          sp.feeding_amplitude * sp.exciton_amplitude))
        V_res = p.emitter.V_res / 1000.0
        for extra in sp.extra_lines:
            lam = p.emitter.lambda_X_at_res + extra.offset + extra.stark_slope * (drive.V_QD - V_res)
            lines.append(Line(extra.label, lam, sp.exciton_fwhm,
                              extra.amplitude * el_enhancement(p, lam - lam_c, lam_c)))
    return lines, modes


def wavelength_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("grid step must be > 0")
    if not hi > lo:
        raise ValueError("grid max must exceed grid min")
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def synthesize(p: DeviceParams, drive: DriveState, grid=(1180.0, 1265.0, 0.02),
               seed=None, integration_s: float = 1.0) -> Spectrum:
    """Spectrum in counts/s on ``grid = (min, max, step)`` nm.

    With ``seed`` set, Poisson shot noise for an ``integration_s`` exposure is
    applied per bin.
    """
    wl = wavelength_grid(*grid)
    lines, _ = emission_lines(p, drive)
    rel = np.full_like(wl, p.spectra.background)
    for ln in lines:
        rel += lorentzian(wl, ln.center, ln.fwhm, ln.amplitude)
    scale = p.spectra.counts_scale
    intensity = scale * rel
    if seed is not None:
        rng = np.random.default_rng(seed)
        intensity = rng.poisson(intensity * integration_s) / integration_s
    scaled = tuple(Line(ln.label, ln.center, ln.fwhm, ln.amplitude * scale) for ln in lines)
    return Spectrum(wl, intensity, drive, scaled)


def filter_transmission(p: DeviceParams, wavelengths) -> np.ndarray:
    """Gaussian band-pass transmission of the tuneable filter."""
    f = p.filter
    sigma = f.fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    x = np.asarray(wavelengths, dtype=float) - f.center
    return np.exp(-0.5 * (x / sigma) ** 2)


def apply_filter(p: DeviceParams, spec: Spectrum) -> Spectrum:
    return Spectrum(spec.wavelengths, spec.intensities * filter_transmission(p, spec.wavelengths),
                    spec.meta, spec.lines)


def _row(p, V, V_CAV, V_QD, on_pull_in):
    try:
        drive = drive_state(p, V_CAV, V_QD)
        lines, modes = emission_lines(p, drive)
    except PullInError:
        if on_pull_in == "raise":
            raise
        nan = float("nan")
        return SweepRow(V, V_CAV, V_QD, nan, nan, nan, nan, nan, nan, nan, nan, nan, pulled_in=True)
    amps = {ln.label: ln.amplitude for ln in lines}
    lam_X = exciton_wavelength(p, V_QD)
    lam_c = modes.wavelength(p.spectra.cavity_mode)
    gap = equilibrium_gap(p, V_CAV).gap
    return SweepRow(
        V=V, V_CAV=V_CAV, V_QD=V_QD, I_QD=drive.I_QD, gap=gap,
        lambda_S=modes.lambda_S, lambda_AS=modes.lambda_AS,
        lambda_X=lam_X, detuning=lam_X - lam_c,
        peak_S=amps["S"], peak_AS=amps["AS"], peak_X=amps.get("X", 0.0),
    )


def sweep_cavity(p: DeviceParams, V_list, V_QD: float = 3.5, on_pull_in: str = "raise") -> SweepTable:
    """Mode positions versus actuation voltage at fixed injection bias.

    ``on_pull_in="flag"`` turns pull-in voltages into flagged NaN rows.
    """
    V_list = sorted(float(v) for v in V_list)
    if not V_list:
        raise ValueError("V_list must be nonempty")
    rows = tuple(_row(p, V, V, V_QD, on_pull_in) for V in V_list)
    return SweepTable("V_CAV", rows)


def sweep_qd(p: DeviceParams, V_list, V_CAV: float = 2.2) -> SweepTable:
    """Exciton and mode positions versus injection bias at fixed actuation."""
    V_list = sorted(float(v) for v in V_list)
    if not V_list:
        raise ValueError("V_list must be nonempty")
    return SweepTable("V_QD", tuple(_row(p, V, V_CAV, V, "raise") for V in V_list))


# ----------------------------------------------------------------------- CSV

SPECTRUM_HEADER = ("wavelength_nm", "intensity")
SWEEP_HEADER = ("V", "lambda_S_nm", "lambda_AS_nm", "lambda_X_nm", "detuning_nm")


def spectrum_csv(spec: Spectrum) -> str:
    return _io.csv_text(SPECTRUM_HEADER, zip(spec.wavelengths, spec.intensities))


def sweep_csv(table: SweepTable) -> str:
    return _io.csv_text(SWEEP_HEADER, ((r.V, r.lambda_S, r.lambda_AS, r.lambda_X, r.detuning)
                                       for r in table.rows))


def read_spectrum_csv(path) -> Spectrum:
    cols = _io.read_csv(path, SPECTRUM_HEADER)
    return Spectrum(cols["wavelength_nm"], cols["intensity"])


def read_sweep_csv(path):
    """Rows of ``(V, lambda_S, lambda_AS, lambda_X, detuning)``."""
    cols = _io.read_csv(path, SWEEP_HEADER)
    return list(zip(*(cols[c] for c in SWEEP_HEADER)))
