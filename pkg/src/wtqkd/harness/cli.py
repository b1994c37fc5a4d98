"""Command-line entry point (``wtqkd``)."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace

from ..errors import WtqkdError
from ..keyrate import DetectionTally, key_rate_from_tally
from ..laser import metrics
from ..laser.dynamics import simulate
from .bridge import calibration_drive, point_seed
from .config import load_config
from .sweeps import emit_csv, run_attenuation_sweep, run_injection_sweep, run_wavelength_sweep


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML experiment config (default: shipped)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--fidelity", choices=("analytic", "mc"), help="link model fidelity")
    p.add_argument("--out", metavar="PATH", help="output CSV (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wtqkd", description="Wavelength-tunable QKD transmitter simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate-laser", help="simulate the laser, print its figures, optionally save the trace")
    _common(p)
    p.add_argument("--power-uw", type=float, help="injection power (default: config)")
    p.add_argument("--wavelength-nm", type=float, help="injection wavelength (default: config)")
    p.add_argument("--pulses", type=int, help="number of pulses (default: config drive)")
    for name, text in (("sweep-injection", "ER, visibility and QBER against injection power"),
                       ("sweep-attenuation", "key rate against channel attenuation"),
                       ("sweep-wavelength", "key rate against wavelength")):
        _common(sub.add_parser(name, help=text))
    p = sub.add_parser("skr", help="key rate from a tally CSV")
    _common(p)
    p.add_argument("tally", metavar="TALLY_CSV")
    return parser


def _config(args):
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.fidelity is not None:
        changes["fidelity"] = "monte_carlo" if args.fidelity == "mc" else args.fidelity
    return replace(config, **changes) if changes else config


def _write_rows(header, rows, out) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if out:
            fh.close()


def _simulate_laser(args, config) -> None:
    inj = config.injection
    if args.power_uw is not None:
        inj = replace(inj, power_uw=args.power_uw)
    if args.wavelength_nm is not None:
        inj = replace(inj, wavelength_nm=args.wavelength_nm)
    op = config.drive
    drive = calibration_drive(op, args.pulses or op.n_pulses)
    trace = simulate(config.laser, drive, inj, point_seed(config.seed, inj.wavelength_nm),
                     time_step_ps=op.time_step_ps)
    clock = op.pulse_rate_ghz
    discard = op.discard_pulses * 1e3 / clock
    if args.out:
        trace.to_csv(args.out)
    er = metrics.extinction_ratio(metrics.pulse_histogram(trace, clock, discard_ps=discard))
    summary = {
        "injection_uw": inj.power_uw,
        "wavelength_nm": inj.wavelength_nm,
        "er_db": er.value,
        "er_censored": er.censored,
        "fringe_visibility": metrics.fringe_visibility(trace, clock, discard),
        "smsr_db": metrics.mode_suppression_ratio(trace, discard).value,
        "pulse_fwhm_ps": metrics.pulse_fwhm(trace, clock, discard),
    }
    for k, v in summary.items():
        print(f"{k}={v!r}")


def _skr(args, config) -> None:
    tally = DetectionTally.from_csv(args.tally)
    res = key_rate_from_tally(tally, config.protocol, ec_efficiency=config.ec_efficiency,
                              sift_factor=config.sift_factor)
    items = res.as_dict()
    _write_rows(["key", "value"], [[k, repr(float(v))] for k, v in items.items()], args.out)


SWEEPS = {
    "sweep-injection": run_injection_sweep,
    "sweep-attenuation": run_attenuation_sweep,
    "sweep-wavelength": run_wavelength_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command == "simulate-laser":
            _simulate_laser(args, config)
        elif args.command == "skr":
            _skr(args, config)
        else:
            table = SWEEPS[args.command](config)
            emit_csv(table, args.out if args.out else sys.stdout)
    except (WtqkdError, ValueError, OSError) as exc:
        print(f"wtqkd: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
