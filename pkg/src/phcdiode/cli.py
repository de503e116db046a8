"""Command-line front end.

Every command writes its data file(s) plus ``<out>.manifest.json``.  Exit
codes: 0 success, 1 numeric or fit failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _io
from .actuator import PullInError
from .devicecfg import PRESETS, ConfigError, DeviceParams, load_config, load_preset, preset_path

CONFIG_ENV = "PHCDIODE_CONFIG"


class CommandError(Exception):
    def __init__(self, message, code=1, payload=None):
        super().__init__(message)
        self.code = code
        self.payload = payload


# ------------------------------------------------------------------- helpers

def _resolve_config(name):
    name = name or os.environ.get(CONFIG_ENV) or "paper_device"
    if name in PRESETS:
        return load_preset(name), f"preset:{name}"
    path = Path(name)
    if not path.exists():
        raise CommandError(f"config file not found: {path}", code=2)
    return load_config(path), str(path)


def _config_digest(p: DeviceParams) -> str:
    text = json.dumps(p.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _table_text(header, rows, fmt):
    rows = list(rows)
    if fmt == "json":
        cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
        return _io.json_text(cols)
    return _io.csv_text(header, rows)


def _write(path, text, outputs):
    _io.atomic_write_text(path, text)
    outputs.append(str(path))


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _linspace(lo, hi, steps):
    if steps < 1:
        raise CommandError("--steps must be >= 1", code=2)
    if steps == 1:
        return [lo]
    return np.linspace(lo, hi, steps).tolist()


# ------------------------------------------------------------------ commands

def cmd_sweep_cavity(args, p, outputs):
    from .spectra import SWEEP_HEADER, spectrum_csv, sweep_cavity, synthesize
    from .actuator import drive_state

    table = sweep_cavity(p, _linspace(args.vmin, args.vmax, args.steps), args.vqd, on_pull_in="flag")
    flagged = [r.V for r in table.rows if r.pulled_in]
    if flagged:
        print(f"warning: pull-in at {len(flagged)} voltage(s): "
              + ", ".join(_io.fmt(v) for v in flagged), file=sys.stderr)
    rows = [(r.V, r.lambda_S, r.lambda_AS, r.lambda_X, r.detuning) for r in table.rows]
    _write(args.out, _table_text(SWEEP_HEADER, rows, args.format), outputs)
    if args.spectra_dir:
        for r in table.rows:
            if r.pulled_in:
                continue
            spec = synthesize(p, drive_state(p, r.V, args.vqd))
            _write(Path(args.spectra_dir) / f"spectrum_Vcav_{_io.fmt(r.V)}.csv", spectrum_csv(spec), outputs)
    return 0


def cmd_sweep_qd(args, p, outputs):
    from .spectra import SWEEP_HEADER, sweep_qd

    table = sweep_qd(p, _linspace(args.vmin, args.vmax, args.steps), args.vcav)
    rows = [(r.V, r.lambda_S, r.lambda_AS, r.lambda_X, r.detuning) for r in table.rows]
    _write(args.out, _table_text(SWEEP_HEADER, rows, args.format), outputs)
    return 0


def cmd_spectrum(args, p, outputs):
    from .actuator import drive_state
    from .spectra import SPECTRUM_HEADER, synthesize

    spec = synthesize(p, drive_state(p, args.vcav, args.vqd), tuple(args.grid), seed=args.seed,
                      integration_s=args.integration)
    _write(args.out, _table_text(SPECTRUM_HEADER, zip(spec.wavelengths, spec.intensities), args.format),
           outputs)
    return 0


def cmd_hbt(args, p, outputs):
    from .photostats import G2_HEADER, EmitterRates, simulate_hbt, write_tags_bin, write_tags_csv

    rates = EmitterRates.from_params(p)
    if args.background_fraction is not None:
        rates = EmitterRates(rates.pump_rate, rates.decay_rate, args.background_fraction)
    duration = args.duration * 1e12
    bw, window = p.correlator.bin_width, p.correlator.window * 1000.0
    run = simulate_hbt(rates, p.detector, duration, args.seed, bw, window, keep_tags=bool(args.tags_out))
    c = run.curve
    _write(args.out, _table_text(G2_HEADER, zip(c.tau, c.g2, c.sigma, c.counts), args.format), outputs)
    if args.tags_out:
        writer = write_tags_bin if str(args.tags_out).endswith(".bin") else write_tags_csv
        writer(args.tags_out, run.tags)
        outputs.append(str(args.tags_out))
    print(f"detected: {run.n_a} + {run.n_b} tags, coincidences: {int(run.histogram.counts.sum())}")
    return 0


def cmd_fit_g2(args, p, outputs):
    from .estimator import fit_g2
    from .photostats import G2Curve

    curve = _read_g2(args.input)
    res = fit_g2(curve, weighted=not args.unweighted)
    _write(args.out, res.to_json(), outputs)
    if not res.converged:
        raise CommandError("g2 fit did not converge", code=1, payload=res.to_dict())
    print(f"g2(0) = {_io.fmt(res.derived['g2_zero'])} +- {_io.fmt(res.derived['g2_zero_err'])}")
    print(f"tau_t = {_io.fmt(res.params['tau_t'])} +- {_io.fmt(res.std_errors['tau_t'])} ps")
    return 0


def _read_g2(path):
    from .photostats import G2Curve

    path = Path(path)
    if not path.exists():
        raise CommandError(f"input file not found: {path}", code=2)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        return G2Curve(d["tau_ps"], d["g2"], d["sigma"], d["counts"])
    return G2Curve.read_csv(path)


def cmd_find_resonance(args, p, outputs):
    from .opfinder import NoCrossingError, find_resonant_bias

    try:
        pt = find_resonant_bias(p, args.vcav, args.mode, V_max=args.vmax)
    except NoCrossingError as exc:
        raise CommandError(str(exc), code=1)
    d = {"V_CAV": pt.V_CAV, "V_QD": pt.V_QD, "detuning_nm": pt.detuning, "tau_ns": pt.tau_total,
         "g2_zero": pt.predicted_g2_zero, "enhancement": pt.enhancement}
    if args.out:
        _write(args.out, _io.json_text(d), outputs)
    print(f"V_QD = {pt.V_QD:.3f} V")
    print(f"detuning_nm = {_io.fmt(pt.detuning)}  tau_ns = {_io.fmt(pt.tau_total)}  "
          f"enhancement = {_io.fmt(pt.enhancement)}")
    return 0


def cmd_map(args, p, outputs):
    from .opfinder import MAP_HEADER, operating_map

    rows = operating_map(p, _linspace(*args.vcav_grid[:2], int(args.vcav_grid[2])),
                         _linspace(*args.vqd_grid[:2], int(args.vqd_grid[2])))
    data = [(r.V_CAV, r.V_QD, r.detuning, r.tau_total, r.predicted_g2_zero, r.enhancement) for r in rows]
    _write(args.out, _table_text(MAP_HEADER, data, args.format), outputs)
    return 0


def cmd_decay_trace(args, p, outputs):
    from .photostats import decay_trace

    h = decay_trace(p, args.vqd, args.pulses, args.irf, args.seed)
    _write(args.out, _table_text(("t_ps", "counts"), zip(h.centers, h.counts), args.format), outputs)
    if args.fit_out:
        from .estimator import fit_biexp_irf

        res = fit_biexp_irf(h, args.irf)
        _write(args.fit_out, res.to_json(), outputs)
        if not res.converged:
            raise CommandError("decay fit did not converge", code=1, payload=res.to_dict())
    return 0


def cmd_replay(args, p_unused, outputs):
    path = Path(args.manifest)
    if not path.exists():
        raise CommandError(f"manifest not found: {path}", code=2)
    man = json.loads(path.read_text(encoding="utf-8"))
    code = main(man["argv"], _write_manifest=False)
    if code != 0:
        return code
    mismatched = [o for o, digest in man["sha256"].items() if _sha256(o) != digest]
    if mismatched:
        print("replay differs: " + ", ".join(mismatched), file=sys.stderr)
        return 1
    print(f"replay reproduced {len(man['sha256'])} output(s) bit-exactly")
    return 0


# -------------------------------------------------------------------- parser

def _common(sp, out_default=None, fmt=True):
    sp.add_argument("--config", help=f"config JSON or preset name (default: ${CONFIG_ENV} or paper_device)")
    sp.add_argument("--out", required=out_default is None, default=out_default, help="output file")
    if fmt:
        sp.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    ap = argparse.ArgumentParser(prog="phcdiode", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep-cavity", help="mode wavelengths versus V_CAV")
    _common(sp)
    sp.add_argument("--vmin", type=float, default=-1.0)
    sp.add_argument("--vmax", type=float, default=2.3)
    sp.add_argument("--steps", type=int, default=34)
    sp.add_argument("--vqd", type=float, default=3.5)
    sp.add_argument("--spectra-dir", help="also write one spectrum CSV per voltage here")
    sp.set_defaults(func=cmd_sweep_cavity)

    sp = sub.add_parser("sweep-qd", help="exciton and modes versus V_QD")
    _common(sp)
    sp.add_argument("--vcav", type=float, default=2.2)
    sp.add_argument("--vmin", type=float, default=1.5)
    sp.add_argument("--vmax", type=float, default=1.76)
    sp.add_argument("--steps", type=int, default=27)
    sp.set_defaults(func=cmd_sweep_qd)

    sp = sub.add_parser("spectrum", help="one synthetic micro-EL spectrum")
    _common(sp)
    sp.add_argument("--vcav", type=float, required=True)
    sp.add_argument("--vqd", type=float, required=True)
    sp.add_argument("--grid", type=float, nargs=3, metavar=("MIN", "MAX", "STEP"),
                    default=(1180.0, 1265.0, 0.02))
    sp.add_argument("--seed", type=int, help="apply Poisson shot noise with this seed")
    sp.add_argument("--integration", type=float, default=1.0, help="exposure for shot noise (s)")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("hbt", help="simulate the HBT correlation histogram")
    _common(sp)
    sp.add_argument("--duration", type=float, required=True, help="acquisition time (s)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--background-fraction", type=float)
    sp.add_argument("--tags-out", help="also export time tags (.csv or .bin)")
    sp.set_defaults(func=cmd_hbt)

    sp = sub.add_parser("fit-g2", help="fit the antibunching dip of a g2 file")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--unweighted", action="store_true")
    sp.set_defaults(func=cmd_fit_g2, needs_config=False)

    sp = sub.add_parser("find-resonance", help="V_QD that puts the exciton on the cavity mode")
    _common(sp, out_default="", fmt=False)
    sp.add_argument("--vcav", type=float, required=True)
    sp.add_argument("--mode", choices=("S", "AS"))
    sp.add_argument("--vmax", type=float, default=2.0)
    sp.set_defaults(func=cmd_find_resonance)

    sp = sub.add_parser("map", help="operating map over (V_CAV, V_QD)")
    _common(sp)
    sp.add_argument("--vcav-grid", type=float, nargs=3, metavar=("MIN", "MAX", "N"), default=(2.0, 2.3, 4))
    sp.add_argument("--vqd-grid", type=float, nargs=3, metavar=("MIN", "MAX", "N"), default=(1.5, 1.8, 31))
    sp.set_defaults(func=cmd_map)

    sp = sub.add_parser("decay-trace", help="time-resolved PL histogram")
    _common(sp)
    sp.add_argument("--vqd", type=float, required=True)
    sp.add_argument("--pulses", type=int, default=200000)
    sp.add_argument("--irf", type=float, default=90.0, help="IRF FWHM (ps)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--fit-out", help="also fit the bi-exponential model, JSON report here")
    sp.set_defaults(func=cmd_decay_trace)

    sp = sub.add_parser("replay", help="re-run a command from its manifest and compare outputs")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_replay, needs_config=False, is_replay=True)
    return ap


def main(argv=None, _write_manifest=True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    outputs: list = []
    t0 = time.perf_counter()
    try:
        p, config_label = None, None
        if getattr(args, "needs_config", True):
            p, config_label = _resolve_config(args.config)
        code = args.func(args, p, outputs)
    except CommandError as exc:
        if exc.payload is not None:
            print(json.dumps({"error": str(exc), "diagnostic": exc.payload}, default=str))
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PullInError, ValueError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1
    if _write_manifest and outputs and not getattr(args, "is_replay", False):
        manifest = {
            "command": args.command,
            "argv": argv,
            "config": config_label,
            "config_sha256": _config_digest(p) if p is not None else None,
            "seed": getattr(args, "seed", None),
            "outputs": outputs,
            "sha256": {o: _sha256(o) for o in outputs},
            "tool_version": __version__,
            "wall_time_s": time.perf_counter() - t0,
        }
        _io.atomic_write_text(f"{outputs[0]}.manifest.json", json.dumps(manifest, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
