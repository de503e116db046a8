"""Electro-opto-mechanically tuned photonic-crystal LED with an embedded quantum dot.

Forward models for the cavity actuator, the coupled-mode optics and the
emitter, synthetic spectra and photon statistics, fitting estimators, an
operating-point finder and a command-line interface.
"""
__version__ = "0.1.0"

from .devicecfg import DeviceParams, DriveState, ConfigError, load_config, load_preset  # noqa: E402

__all__ = ["__version__", "DeviceParams", "DriveState", "ConfigError", "load_config", "load_preset"]
