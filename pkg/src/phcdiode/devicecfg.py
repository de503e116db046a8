"""Device parameter schema, JSON config loading and anchor calibration.

A config file is a JSON object with one sub-object per section.  Every key
carries its unit as a suffix (``d0_nm``, ``tau_bulk_ns``...).  All keys are
required and unknown keys are rejected.  See ``presets/paper_device.json``
for a complete example.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Invalid configuration value.  ``field`` is the dotted JSON path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigParseError(ConfigError):
    pass


def _key(name: str):
    return field(metadata={"key": name})


@dataclass(frozen=True)
class MechParams:
    d0: float = _key("d0_nm")
    V_bi_cav: float = _key("V_bi_cav_V")
    k_over_epsA: float = _key("k_over_epsA_V2_per_nm3")

    def _check(self):
        _positive(self, "d0", "k_over_epsA")


@dataclass(frozen=True)
class OpticsParams:
    lambda0: float = _key("lambda0_nm")
    s0: float = _key("s0_nm")
    L_c: float = _key("L_c_nm")
    Q: float = _key("Q")
    kappa_th: float = _key("kappa_th_nm_per_mA")
    I_ref: float = _key("I_ref_mA")

    def _check(self):
        _positive(self, "lambda0", "s0", "L_c", "Q")
        _nonnegative(self, "I_ref")


@dataclass(frozen=True)
class CrosstalkParams:
    I_at_Vref: float = _key("I_at_Vref_mA")
    I_at_Vlow: float = _key("I_at_Vlow_mA")
    V_ref: float = _key("V_ref_V")
    V_low: float = _key("V_low_V")

    def _check(self):
        _nonnegative(self, "I_at_Vlow")
        if self.I_at_Vref < self.I_at_Vlow:
            raise ConfigError("I_at_Vref_mA", "must be >= I_at_Vlow_mA")
        if self.I_at_Vref <= 0:
            raise ConfigError("I_at_Vref_mA", "must be > 0")
        if self.V_ref == self.V_low:
            raise ConfigError("V_low_V", "must differ from V_ref_V")


@dataclass(frozen=True)
class DiodeParams:
    """Exponential I-V of the injection diode above threshold."""

    V_drive: float = _key("V_drive_V")
    I_at_Vdrive: float = _key("I_at_Vdrive_mA")
    V_scale: float = _key("V_scale_V")

    def _check(self):
        _positive(self, "V_scale")
        _nonnegative(self, "I_at_Vdrive")


@dataclass(frozen=True)
class EmitterParams:
    lambda_X_at_res: float = _key("lambda_X_at_res_nm")
    V_res: float = _key("V_res_mV")
    stark_slope: float = _key("stark_slope_nm_per_V")
    tau_bulk: float = _key("tau_bulk_ns")
    tau_leaky: float = _key("tau_leaky_ns")
    tau_resonant: float = _key("tau_resonant_ns")
    V_th: float = _key("V_th_V")
    tun_prefactor: float = _key("tun_prefactor_per_ns")
    tun_scale: float = _key("tun_scale_V")
    enh_exponent: float = _key("enh_exponent")
    enh_max: float = _key("enh_max")
    dark_init_fraction: float = _key("dark_init_fraction")
    bright_to_dark: float = _key("bright_to_dark_per_ns")
    dark_to_bright: float = _key("dark_to_bright_per_ns")

    def _check(self):
        _positive(self, "tau_bulk", "tau_leaky", "tau_resonant", "tun_scale", "enh_exponent")
        _nonnegative(self, "tun_prefactor", "bright_to_dark", "dark_to_bright")
        _fraction(self, "dark_init_fraction", upper_open=False, lower_open=False)
        if self.enh_max < 1:
            raise ConfigError("enh_max", "must be >= 1")
        if 1.0 / self.tau_resonant <= 1.0 / self.tau_leaky:
            raise ConfigError("tau_resonant_ns", "must be shorter than tau_leaky_ns")


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = _key("efficiency")
    dark_rate: float = _key("dark_rate_Hz")
    jitter_fwhm: float = _key("jitter_fwhm_ps")
    jitter_is_sigma: bool = _key("jitter_is_sigma")
    dead_time: float = _key("dead_time_ns")

    def _check(self):
        _fraction(self, "efficiency", lower_open=True, upper_open=False)
        _nonnegative(self, "dark_rate", "jitter_fwhm", "dead_time")

    @property
    def jitter_sigma(self) -> float:
        """Gaussian jitter standard deviation in ps."""
        if self.jitter_is_sigma:
            return self.jitter_fwhm
        return self.jitter_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class CorrelatorParams:
    bin_width: float = _key("bin_width_ps")
    window: float = _key("window_ns")

    def _check(self):
        _positive(self, "bin_width", "window")
        if self.window * 1000.0 < self.bin_width:
            raise ConfigError("window_ns", "must cover at least one bin")


@dataclass(frozen=True)
class FilterParams:
    center: float = _key("center_nm")
    fwhm: float = _key("fwhm_nm")

    def _check(self):
        _positive(self, "center", "fwhm")


@dataclass(frozen=True)
class SourceParams:
    """CW emitter driving the correlation experiment."""

    pump_rate: float = _key("pump_rate_per_ns")
    antibunching_time: float = _key("antibunching_time_ns")
    background_fraction: float = _key("background_fraction")

    def _check(self):
        _positive(self, "antibunching_time")
        _nonnegative(self, "pump_rate")
        _fraction(self, "background_fraction", lower_open=False, upper_open=True)
        if self.pump_rate >= 1.0 / self.antibunching_time:
            raise ConfigError("pump_rate_per_ns", "must be below 1/antibunching_time_ns")


@dataclass(frozen=True)
class ExtraLine:
    label: str = _key("label")
    offset: float = _key("offset_nm")
    stark_slope: float = _key("stark_slope_nm_per_V")
    amplitude: float = _key("amplitude")

    def _check(self):
        _nonnegative(self, "amplitude")


@dataclass(frozen=True)
class SpectraParams:
    cavity_mode: str = _key("cavity_mode")
    mode_amplitude: float = _key("mode_amplitude")
    exciton_amplitude: float = _key("exciton_amplitude")
    exciton_fwhm: float = _key("exciton_fwhm_nm")
    feeding_amplitude: float = _key("feeding_amplitude")
    background: float = _key("background")
    counts_scale: float = _key("counts_scale_Hz")
    # (offset from the AS mode in nm, relative amplitude)
    band_edge_modes: tuple = _key("band_edge_modes")
    extra_lines: tuple = _key("extra_lines")

    def _check(self):
        if self.cavity_mode not in ("S", "AS"):
            raise ConfigError("cavity_mode", "must be 'S' or 'AS'")
        _positive(self, "exciton_fwhm", "counts_scale")
        _nonnegative(self, "mode_amplitude", "exciton_amplitude", "feeding_amplitude", "background")
        for off, amp in self.band_edge_modes:
            if amp < 0:
                raise ConfigError("band_edge_modes", "amplitudes must be >= 0")


@dataclass(frozen=True)
class DeviceParams:
    """Full calibrated parameter set of one device.  Immutable."""

    mech: MechParams
    optics: OpticsParams
    crosstalk: CrosstalkParams
    diode: DiodeParams
    emitter: EmitterParams
    detector: DetectorParams
    correlator: CorrelatorParams
    filter: FilterParams
    source: SourceParams
    spectra: SpectraParams

    def replace(self, **sections: dict[str, Any]) -> "DeviceParams":
        """Copy with some fields changed, e.g. ``p.replace(emitter={"stark_slope": 0.0})``.

        The result is validated.
        """
        changes = {}
        for name, updates in sections.items():
            changes[name] = dataclasses.replace(getattr(self, name), **updates)
        out = dataclasses.replace(self, **changes)
        _validate(out)
        return out

    def to_dict(self) -> dict:
        return {f.name: _section_to_dict(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a JSON object")
        _check_keys("<root>", data, [f.name for f in dataclasses.fields(cls)])
        sections = {}
        for f in dataclasses.fields(cls):
            sections[f.name] = _section_from_dict(f.name, _SECTION_TYPES[f.name], data[f.name])
        out = cls(**sections)
        _validate(out)
        return out


_SECTION_TYPES = {
    "mech": MechParams,
    "optics": OpticsParams,
    "crosstalk": CrosstalkParams,
    "diode": DiodeParams,
    "emitter": EmitterParams,
    "detector": DetectorParams,
    "correlator": CorrelatorParams,
    "filter": FilterParams,
    "source": SourceParams,
    "spectra": SpectraParams,
}


@dataclass(frozen=True)
class DriveState:
    """Control voltages and the resulting (measured) injection current."""

    V_CAV: float
    V_QD: float
    I_QD: float

    def __post_init__(self):
        if self.I_QD < 0:
            raise ValueError("I_QD must be >= 0")


# ---------------------------------------------------------------- validation

def _positive(sec, *names):
    for n in names:
        v = getattr(sec, n)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(_json_key(sec, n), f"must be > 0 (got {v})")


def _nonnegative(sec, *names):
    for n in names:
        v = getattr(sec, n)
        if not (math.isfinite(v) and v >= 0):
            raise ConfigError(_json_key(sec, n), f"must be >= 0 (got {v})")


def _fraction(sec, name, lower_open, upper_open):
    v = getattr(sec, name)
    lo_ok = v > 0 if lower_open else v >= 0
    hi_ok = v < 1 if upper_open else v <= 1
    if not (lo_ok and hi_ok):
        lo = "(0" if lower_open else "[0"
        hi = "1)" if upper_open else "1]"
        raise ConfigError(_json_key(sec, name), f"must be in {lo}, {hi} (got {v})")


def _json_key(sec, name):
    for f in dataclasses.fields(sec):
        if f.name == name:
            return f.metadata["key"]
    return name


def _validate(p: DeviceParams):
    for f in dataclasses.fields(p):
        sec = getattr(p, f.name)
        try:
            sec._check()
            if f.name == "spectra":
                for line in sec.extra_lines:
                    line._check()
        except ConfigError as exc:
            raise ConfigError(f"{f.name}.{exc.field}", str(exc).split(": ", 1)[1]) from None


def _check_keys(where, data, expected):
    unknown = sorted(set(data) - set(expected))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where != "<root>" else unknown[0], "unknown key")
    missing = [k for k in expected if k not in data]
    if missing:
        raise ConfigError(f"{where}.{missing[0]}" if where != "<root>" else missing[0], "missing key")


def _coerce(path, f, value):
    tp = f.type
    if tp == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp == "str":
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    if tp == "tuple":
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        if f.name == "band_edge_modes":
            out = []
            for item in value:
                if not (isinstance(item, list) and len(item) == 2):
                    raise ConfigError(path, "entries must be [offset_nm, amplitude]")
                out.append((_number(path, item[0]), _number(path, item[1])))
            return tuple(out)
        return tuple(_section_from_dict(path, ExtraLine, item) for item in value)
    return _number(path, value)


def _number(path, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number (got {value!r})")
    return float(value)


def _section_from_dict(where, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(where, "expected a JSON object")
    fields = dataclasses.fields(cls)
    _check_keys(where, data, [f.metadata["key"] for f in fields])
    kwargs = {}
    for f in fields:
        key = f.metadata["key"]
        kwargs[f.name] = _coerce(f"{where}.{key}", f, data[key])
    return cls(**kwargs)


def _section_to_dict(sec):
    out = {}
    for f in dataclasses.fields(sec):
        v = getattr(sec, f.name)
        if f.name == "band_edge_modes":
            v = [list(item) for item in v]
        elif f.name == "extra_lines":
            v = [_section_to_dict(item) for item in v]
        out[f.metadata["key"]] = v
    return out


# ----------------------------------------------------------------------- I/O

def load_config(path) -> DeviceParams:
    """Read and validate a JSON device config."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(str(path), f"malformed JSON ({exc})") from None
    return DeviceParams.from_dict(data)


def dumps_config(p: DeviceParams) -> str:
    return json.dumps(p.to_dict(), indent=2) + "\n"


def write_config(p: DeviceParams, path) -> None:
    Path(path).write_text(dumps_config(p), encoding="utf-8")


PRESETS = ("paper_device",)


def preset_path(name: str = "paper_device"):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("phcdiode") / "presets" / f"{name}.json"


def load_preset(name: str = "paper_device") -> DeviceParams:
    with resources.as_file(preset_path(name)) as path:
        return load_config(path)


# --------------------------------------------------------------- calibration

def calibrate_splitting(anchor_a, anchor_b, d0=None):
    """Exponential splitting law through two (gap nm, splitting nm) anchors.

    Returns ``(s0, L_c)`` such that ``s0 * exp(-(gap - d0) / L_c)`` passes
    through both anchors.  ``d0`` defaults to the gap of ``anchor_a``.
    """
    (da, sa), (db, sb) = anchor_a, anchor_b
    if sa <= 0 or sb <= 0:
        raise ValueError("splittings must be positive")
    if da == db:
        raise ValueError("anchors must have distinct gaps")
    if sa == sb:
        raise ValueError("equal splittings at distinct gaps give an infinite decay length")
    L_c = (db - da) / math.log(sa / sb)
    if L_c <= 0:
        raise ValueError("splitting must grow as the gap closes")
    if d0 is None:
        d0 = da
    s0 = sa * math.exp(-(d0 - da) / L_c)
    return s0, L_c


def calibrate_thermal(delta_I: float, delta_lambda: float) -> float:
    """Linear thermal coefficient (nm/mA) from a current change and the shift it causes."""
    if delta_I == 0:
        raise ValueError("delta_I must be nonzero")
    return delta_lambda / delta_I


def calibrate_stiffness(d0: float, V_bi: float, V_anchor: float, gap_anchor: float) -> float:
    """k/(eps A) that puts the equilibrium gap at ``gap_anchor`` for ``V_anchor``."""
    if not (2.0 * d0 / 3.0 < gap_anchor < d0):
        raise ValueError("anchor gap must lie on the stable branch (2 d0/3, d0)")
    V_eff = V_bi - V_anchor
    return V_eff**2 / (2.0 * gap_anchor**2 * (d0 - gap_anchor))


def calibrate_purcell_max(p: DeviceParams, V_QD: float | None = None) -> float:
    """Peak cavity decay rate (1/ns) giving ``tau_resonant`` at zero detuning."""
    from .emitter import tunneling_rate

    e = p.emitter
    if V_QD is None:
        V_QD = e.V_res / 1000.0
    # summation order matches decay_budget
    return 1.0 / e.tau_resonant - 1.0 / e.tau_leaky - tunneling_rate(p, V_QD)


def build_paper_device() -> DeviceParams:
    """Assemble the ``paper_device`` preset from its measurement anchors."""
    from .actuator import drive_state
    from .optics import mode_pair
    from .actuator import equilibrium_gap

    d0 = 200.0
    s_200, s_145 = 37.2, 1257.7 - 1186.5
    s0, L_c = calibrate_splitting((d0, s_200), (145.0, s_145))
    kappa_th = calibrate_thermal(2.3 - 1.7, 1.6)
    V_bi = 2.3
    k = calibrate_stiffness(d0, V_bi, -1.0, 145.0)

    data = {
        "mech": {"d0_nm": d0, "V_bi_cav_V": V_bi, "k_over_epsA_V2_per_nm3": k},
        "optics": {
            "lambda0_nm": (1242.3 + 1205.1) / 2.0,
            "s0_nm": s0,
            "L_c_nm": L_c,
            "Q": 2270.0,
            "kappa_th_nm_per_mA": kappa_th,
            "I_ref_mA": 2.3,
        },
        "crosstalk": {"I_at_Vref_mA": 2.3, "I_at_Vlow_mA": 1.7, "V_ref_V": 2.3, "V_low_V": -1.0},
        "diode": {"V_drive_V": 3.5, "I_at_Vdrive_mA": 2.3, "V_scale_V": 0.3},
        "emitter": {
            "lambda_X_at_res_nm": 1225.0,  # placeholder, solved below
            "V_res_mV": 1630.0,
            "stark_slope_nm_per_V": -4.0,
            "tau_bulk_ns": 1.45,
            "tau_leaky_ns": 4.5,
            "tau_resonant_ns": 0.42,
            "V_th_V": 1.2,
            "tun_prefactor_per_ns": 0.005,
            "tun_scale_V": 0.06,
            "enh_exponent": 3.0,
            "enh_max": 10.0,
            "dark_init_fraction": 0.2,
            "bright_to_dark_per_ns": 0.002,
            "dark_to_bright_per_ns": 1.0 / (10.0 * 1.45),
        },
        "detector": {
            "efficiency": 0.45,
            "dark_rate_Hz": 30.0,
            "jitter_fwhm_ps": 50.0,
            "jitter_is_sigma": False,
            "dead_time_ns": 30.0,
        },
        "correlator": {"bin_width_ps": 16.0, "window_ns": 5.0},
        "filter": {"center_nm": 1225.0, "fwhm_nm": 0.5},
        "source": {
            "pump_rate_per_ns": 0.035,
            "antibunching_time_ns": 0.42,
            "background_fraction": 1.0 - math.sqrt(0.87),
        },
        "spectra": {
            "cavity_mode": "S",
            "mode_amplitude": 1.0,
            "exciton_amplitude": 1.0,
            "exciton_fwhm_nm": 0.05,
            "feeding_amplitude": 0.1,
            "background": 0.02,
            "counts_scale_Hz": 10000.0,
            "band_edge_modes": [[4.0, 0.3], [8.5, 0.25], [13.0, 0.2], [17.0, 0.2],
                                [21.0, 0.15], [25.5, 0.15], [30.0, 0.1]],
            "extra_lines": [],
        },
    }
    p = DeviceParams.from_dict(data)

    # place the exciton on the S mode at the Fig. 3 operating point
    V_CAV, V_QD = 2.2, 1.630
    drive = drive_state(p, V_CAV, V_QD)
    modes = mode_pair(p, equilibrium_gap(p, V_CAV).gap, drive.I_QD)
    lam = modes.lambda_S if p.spectra.cavity_mode == "S" else modes.lambda_AS
    return p.replace(emitter={"lambda_X_at_res": lam}, filter={"center": lam})
