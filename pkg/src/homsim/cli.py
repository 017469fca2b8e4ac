"""Command-line front end: ``homsim {dip,sweep,compensate,calibrate,fit,replay}``.

Every command that writes a file also writes ``<out>.manifest.json`` next to
it. The manifest records the exact argument vector, so ``homsim replay``
regenerates the same bytes. CSV outputs open with ``# manifest sha256=...``
followed by a header row.

Exit codes: 0 success, 1 computational failure, 2 input or parse failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    FitError,
    NoiseSettings,
    fit_gaussian_dip,
    read_dip_csv,
    synthesize_counts,
    visibility_sweep,
)
from .calibration import FiberChannel, calibrate, random_fiber
from .dsl import ParseError, ScanSettings, parse
from .engine import (
    InfeasibleError,
    closed_form_visibility,
    compensation_angle,
    dip_scan,
    engine_visibility,
    lab_geometry,
    relative_rate,
)

EPILOG = """\
environment:
  HOMSIM_THREADS  maximum worker threads for sweeps (default 1); results do
                  not depend on it

exit codes: 0 success, 1 computational failure, 2 input or parse failure
"""


class InputError(Exception):
    """Bad input; maps to exit code 2."""


class ComputeError(Exception):
    """Computation failed; maps to exit code 1."""


# -- manifest ----------------------------------------------------------------

def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(command, argv, parameters, seed, artifacts) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "parameters": parameters,
        "seed": seed,
        "artifacts": [str(a) for a in artifacts],
        "version": __version__,
    }


def manifest_hash(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


def _write_outputs(out, header, rows, manifest, extra=None):
    """Write the CSV, any extra text artifacts and the manifest; return the hash."""
    h = manifest_hash(manifest)
    buf = io.StringIO()
    buf.write(f"# manifest sha256={h}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(out).write_text(buf.getvalue())
    for path, text in (extra or {}).items():
        Path(path).write_text(text)
    _manifest_path(out).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return h


def _f(x) -> str:
    return repr(float(x))


# -- commands ----------------------------------------------------------------

def _noise_from(args, file_noise):
    rate = args.noise_rate if args.noise_rate is not None else (file_noise.rate if file_noise else None)
    if rate is None:
        return None
    dwell = args.dwell if args.dwell is not None else (file_noise.dwell if file_noise else 1.0)
    seed = args.seed if args.seed is not None else (file_noise.seed if file_noise else 0)
    try:
        return NoiseSettings(rate, dwell, seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_dip(args, argv):
    path = Path(args.experiment)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        exp = parse(text)
    except ParseError as exc:
        raise InputError("\n".join(f"{path}:{d}" for d in exc.diagnostics)) from None

    scan = exp.scan
    try:
        scan = ScanSettings(
            args.from_fs if args.from_fs is not None else scan.start_fs,
            args.to_fs if args.to_fs is not None else scan.stop_fs,
            args.steps if args.steps is not None else scan.steps,
        )
        delays = scan.delays()
    except ValueError as exc:
        raise InputError(str(exc)) from None
    noise = _noise_from(args, exp.noise)

    curve = dip_scan(exp.config, delays)
    if noise is None:
        header = ["delay_fs", "probability"]
        rows = [[_f(d), _f(p)] for d, p in zip(curve.delays, curve.values)]
        data = curve
    else:
        data = synthesize_counts(curve, noise.rate, noise.dwell, noise.seed)
        header = ["delay_fs", "probability", "counts", "duration_s"]
        rows = [[_f(r.delay), _f(p), r.counts, _f(r.duration)] for r, p in zip(data, curve.values)]

    params = {
        "experiment": str(path),
        "experiment_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "scan": {"from_fs": scan.start_fs, "to_fs": scan.stop_fs, "steps": scan.steps},
        "noise": None if noise is None else {"rate": noise.rate, "dwell": noise.dwell},
    }
    fit_path = Path(str(args.out) + ".fit.txt")
    try:
        fit = fit_gaussian_dip(data)
    except FitError as exc:
        manifest = build_manifest("dip", argv, params, noise.seed if noise else None, [args.out])
        _write_outputs(args.out, header, rows, manifest)
        raise ComputeError(f"fit failed: {exc}") from None
    report = fit.report()
    manifest = build_manifest("dip", argv, params, noise.seed if noise else None, [args.out, fit_path])
    _write_outputs(args.out, header, rows, manifest, {fit_path: report})
    sys.stdout.write(report)
    return 0


def _angle_grid(args):
    if args.angles:
        return [float(a) for a in args.angles]
    if args.step_deg <= 0:
        raise InputError("--step-deg must be positive")
    n = int(math.floor((args.stop_deg - args.start_deg) / args.step_deg + 1e-9)) + 1
    if n < 1:
        raise InputError("empty angle grid: --stop-deg is below --start-deg")
    return [args.start_deg + i * args.step_deg for i in range(n)]


def cmd_sweep(args, argv):
    R = args.R
    if not 0.0 < R < 1.0:
        raise InputError(f"R must be in (0,1), got {R}")
    T = 1.0 - R
    angles = _angle_grid(args)
    noise = None
    if args.noise_rate is not None:
        try:
            noise = NoiseSettings(args.noise_rate, args.dwell or 1.0, args.seed or 0)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    try:
        scan = ScanSettings(
            args.from_fs if args.from_fs is not None else -300.0,
            args.to_fs if args.to_fs is not None else 300.0,
            args.steps if args.steps is not None else 41,
        )
        delays = scan.delays()
    except ValueError as exc:
        raise InputError(str(exc)) from None

    v_cf = [closed_form_visibility(R, T, a) for a in angles]
    v_en = [engine_visibility(lab_geometry(R, a)) for a in angles]
    header = ["delta_theta_deg", "V_closed_form", "V_engine"]
    cols = [angles, v_cf, v_en]
    if noise is not None:
        pts = visibility_sweep(R, T, angles, noise, delays)
        header.append("V_fit_noisy")
        cols.append([p.visibility for p in pts])
    rows = [[_f(x) for x in row] for row in zip(*cols)]

    params = {
        "R": R,
        "angles_deg": angles,
        "scan": {"from_fs": scan.start_fs, "to_fs": scan.stop_fs, "steps": scan.steps},
        "noise": None if noise is None else {"rate": noise.rate, "dwell": noise.dwell},
    }
    manifest = build_manifest("sweep", argv, params, noise.seed if noise else None, [args.out])
    _write_outputs(args.out, header, rows, manifest)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_compensate(args, argv):
    R = args.R
    if not 0.0 < R < 1.0:
        raise InputError(f"R must be in (0,1), got {R}")
    T = 1.0 - R
    try:
        ang = compensation_angle(R, T)
    except InfeasibleError as exc:
        raise ComputeError(f"infeasible: {exc}") from None
    rc = relative_rate(R, T, ang)
    r0 = relative_rate(R, T, 0.0)
    report = (
        f"R={R!r}\n"
        f"delta_theta_deg={ang.degrees:.6f}\n"
        f"visibility={closed_form_visibility(R, T, ang):.12f}\n"
        f"rate_compensated={rc:.12g}\n"
        f"rate_aligned={r0:.12g}\n"
        f"penalty_factor={r0 / rc:.6g}\n"
    )
    sys.stdout.write(report)
    return 0


def cmd_calibrate(args, argv):
    if args.tolerance < 0:
        raise InputError("--tolerance must be non-negative")
    seed = args.seed if args.seed is not None else 0
    channel = FiberChannel.identity() if args.identity else random_fiber(seed)
    res = calibrate(channel, args.tolerance, seed=seed)
    report = res.report()
    sys.stdout.write(report)
    if args.out:
        params = {"identity": args.identity, "tolerance": args.tolerance}
        Path(args.out).write_text(report)
        m = build_manifest("calibrate", argv, params, seed, [args.out])
        _manifest_path(args.out).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    if not res.converged:
        print(f"calibration did not converge: {res.message}", file=sys.stderr)
        return 1
    return 0


def cmd_fit(args, argv):
    try:
        data = read_dip_csv(args.csv)
    except OSError as exc:
        raise InputError(f"{args.csv}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        fit = fit_gaussian_dip(data)
    except FitError as exc:
        raise ComputeError(f"fit failed: {exc}") from None
    sys.stdout.write(fit.report())
    if args.out:
        params = {"input": str(args.csv), "input_sha256": _sha256_file(args.csv)}
        m = build_manifest("fit", argv, params, None, [args.out])
        _write_outputs(args.out, fit.csv_header(), [fit.csv_row()], m)
    return 0


def cmd_replay(args, argv):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        stored = manifest["argv"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{args.manifest}: not a readable manifest ({exc})") from None
    if manifest.get("version") != __version__:
        print(f"warning: manifest written by version {manifest.get('version')}", file=sys.stderr)
    return main(stored)


# -- parser ------------------------------------------------------------------

def _scan_flags(p):
    p.add_argument("--from-fs", type=float, help="first delay of the scan in fs")
    p.add_argument("--to-fs", type=float, help="last delay of the scan in fs")
    p.add_argument("--steps", type=int, help="number of scan points")


def _noise_flags(p):
    p.add_argument("--noise-rate", type=float, help="emitted pairs per second; enables Poisson counts")
    p.add_argument("--dwell", type=float, help="seconds per scan point (default 1)")
    p.add_argument("--seed", type=int, help="random seed for counts (default 0)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    ap = argparse.ArgumentParser(
        prog="homsim",
        description="Two-photon interference at asymmetric beamsplitters.",
        epilog=EPILOG,
        formatter_class=fmt,
    )
    ap.add_argument("--version", action="version", version=f"homsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dip", help="simulate a dip scan from a .hom file",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("experiment", help="experiment description (.hom)")
    p.add_argument("--out", required=True, help="output CSV path")
    _scan_flags(p)
    _noise_flags(p)
    p.set_defaults(func=cmd_dip)

    p = sub.add_parser("sweep", help="visibility versus polarization angle",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("-R", type=float, required=True, help="splitter reflectivity")
    p.add_argument("--start-deg", type=float, default=0.0)
    p.add_argument("--stop-deg", type=float, default=90.0)
    p.add_argument("--step-deg", type=float, default=5.0)
    p.add_argument("--angles", type=float, nargs="+", help="explicit angles in degrees")
    p.add_argument("--out", required=True, help="output CSV path")
    _scan_flags(p)
    _noise_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compensate", help="compensation angle and rate penalty",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("-R", type=float, required=True, help="splitter reflectivity")
    p.set_defaults(func=cmd_compensate)

    p = sub.add_parser("calibrate", help="calibrate a simulated fiber channel",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("--seed", type=int, help="fiber and restart seed (default 0)")
    p.add_argument("--tolerance", type=float, default=1e-3,
                   help="target leakage and phase error (default 1e-3)")
    p.add_argument("--identity", action="store_true", help="use a birefringence-free channel")
    p.add_argument("--out", help="also write the report to this path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fit", help="fit a Gaussian dip to a CSV",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("csv", help="CSV with delay_fs and counts,duration_s or probability")
    p.add_argument("--out", help="write the fit as a one-row CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest",
                       epilog=EPILOG, formatter_class=fmt)
    p.add_argument("manifest", help="a .manifest.json written by another command")
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
