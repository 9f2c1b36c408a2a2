"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 fit non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, experiments, fitting, formats
from .solver import SolverError, spectrum, weak_drive_spectrum
from .units import NM, CalibInput, UncertaintyBudget, from_ghz, intracavity_photon_number

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FIT = 0, 2, 3, 4

log = logging.getLogger("diskqed")


def _load_config(args) -> formats.RunConfig:
    if getattr(args, "config", None):
        return formats.load_run_config(args.config)
    return formats.RunConfig()


def _emit_manifest(args, command: str, resolved: dict) -> dict:
    man = formats.manifest(command, resolved)
    out = getattr(args, "out", None)
    target = Path(args.manifest) if getattr(args, "manifest", None) else (Path(str(out) + ".manifest.json") if out else None)
    if target is not None:
        formats.write_manifest(target, man)
    return man


def _print_json(obj) -> None:
    sys.stdout.write(formats.canonical_json(obj))


def cmd_calib(args) -> int:
    budget = UncertaintyBudget() if args.budget == "default" else UncertaintyBudget.zero()
    inp = CalibInput(
        input_power=args.power_nw * 1e-9,
        taper_transmission=args.zeta,
        contrast=args.contrast,
        loaded_q=args.q,
        wavelength=args.wavelength_nm * NM,
        regime=args.regime,
        detuning=from_ghz(args.detuning_ghz),
    )
    res = intracavity_photon_number(inp, budget)
    _emit_manifest(args, "calib", {"input": {k: getattr(inp, k) for k in inp.__dataclass_fields__}, "budget": args.budget})
    _print_json(res.as_dict())
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _load_config(args)
    if args.method:
        cfg.solver.method = args.method
    params = cfg.system
    grid = cfg.grid.resolve(params)
    drive = cfg.drive.resolve(params)
    man = _emit_manifest(args, "spectrum", cfg.to_json_dict())
    if cfg.solver.method == "weak":
        spec = weak_drive_spectrum(params, grid, drive)
    else:
        spec = spectrum(params, drive, grid, n_max=cfg.solver.n_max, threads=args.threads)
    formats.write_spectrum_csv(spec, args.out, [f"manifest_sha256={man['sha256']}"])
    if spec.truncated.any():
        log.warning("%d grid points exceed the Fock truncation limit", int(spec.truncated.sum()))
    return EXIT_OK


def cmd_anticross(args) -> int:
    cfg = _load_config(args)
    params = cfg.system
    schedule = cfg.schedule.resolve()
    drive = cfg.drive.resolve(params)
    grid = None if cfg.grid.start_pm is None else cfg.grid.resolve(params)
    man = _emit_manifest(args, "anticross", cfg.to_json_dict())
    try:
        amap = experiments.anticrossing_scan(
            params, schedule, grid, drive, full=cfg.solver.method == "full", n_max=cfg.solver.n_max, threads=args.threads
        )
    except SolverError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            formats.write_table(
                formats.anticrossing_table(partial, [f"manifest_sha256={man['sha256']}", f"PARTIAL: {exc}"]), args.out
            )
        raise
    formats.write_table(formats.anticrossing_table(amap, [f"manifest_sha256={man['sha256']}"]), args.out)
    return EXIT_OK


def cmd_powersweep(args) -> int:
    cfg = _load_config(args)
    params = cfg.system
    if cfg.sweep.detuning_ca_pm is not None:
        params = params.with_(detuning_ca=cfg.sweep.detuning_ca_pm * 1e-12)
    grid = cfg.grid.resolve(params)
    drives = experiments.drives_for_photon_numbers(params, cfg.sweep.photon_numbers, cfg.drive.taper_transmission)
    man = _emit_manifest(args, "powersweep", cfg.to_json_dict())
    curve = experiments.power_sweep(
        params, drives, grid_pm=grid, n_max=cfg.solver.n_max, threads=args.threads,
        contrast_offset_pm=cfg.sweep.contrast_offset_pm,
    )
    formats.write_table(formats.saturation_table(curve, [f"manifest_sha256={man['sha256']}"]), args.out)
    return EXIT_OK


def _write_fit(args, result: fitting.FitResult) -> int:
    text = formats.canonical_json(result.to_json_dict())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK if result.converged else EXIT_FIT


def cmd_fit_bare(args) -> int:
    spec, _ = formats.read_spectrum_csv(args.spectrum)
    _emit_manifest(args, "fit-bare", {"spectrum": str(args.spectrum), "regime": args.regime})
    return _write_fit(args, fitting.fit_bare_cavity(spec, regime=args.regime))


def cmd_fit_qme(args) -> int:
    cfg = _load_config(args)
    if not cfg.fit.data:
        raise formats.ConfigError("config.fit.data: at least one spectrum is required")
    base = Path(args.config).parent if args.config else Path(".")
    data = []
    for item in cfg.fit.data:
        spec, _ = formats.read_spectrum_csv(base / item["csv"])
        drive = None
        if "input_power_nw" in item:
            drive = formats.DriveConfig(input_power_nw=float(item["input_power_nw"])).resolve(cfg.system)
        data.append(fitting.SpectrumData(spec, float(item["detuning_ca_pm"]), drive))
    _emit_manifest(args, "fit-qme", cfg.to_json_dict())
    f = cfg.fit
    result = fitting.fit_qme(
        data,
        cfg.system,
        free=tuple(f.free),
        weights=tuple(f.weights),
        seed=f.seed,
        restarts=f.restarts,
        noise_sigma=f.noise_sigma,
        ssr_tolerance=f.ssr_tolerance if f.ssr_tolerance is not None else float("inf"),
        verify_full=f.verify_full,
        n_max=cfg.solver.n_max,
    )
    return _write_fit(args, result)


def cmd_fit_powerlaw(args) -> int:
    t = formats.read_table(args.csv)
    for col in (args.power_column, args.intensity_column):
        if col not in t.columns:
            raise formats.ConfigError(f"{args.csv}: missing column {col!r}")
    _emit_manifest(args, "fit-powerlaw", {"csv": str(args.csv)})
    return _write_fit(args, fitting.fit_power_law(t.columns[args.power_column], t.columns[args.intensity_column]))


def cmd_analyze(args) -> int:
    specs = [formats.read_spectrum_csv(p)[0] for p in args.spectrum]
    out: dict = {}
    first = specs[0]
    peaks = analysis.find_extrema(first, args.channel, smooth=args.smooth)
    out["extrema"] = {
        "channel": args.channel,
        "kind": peaks.kind,
        "location_pm": peaks.location_pm.tolist(),
        "value": peaks.value.tolist(),
        "fwhm_pm": peaks.fwhm_pm.tolist(),
    }
    if args.splitting:
        sp = analysis.splitting(peaks)
        out["splitting"] = None if sp is None else {
            "delta_pm": sp.delta_pm,
            "delta_ghz": sp.delta_omega / (2 * np.pi * 1e9),
            "positions_pm": list(sp.positions_pm),
        }
        if sp is not None:
            sys.stderr.write(f"splitting: {sp.delta_pm:.6g} pm\n")
    if args.contrast_at is not None:
        out["contrast"] = {"offset_pm": args.contrast_at, "value": analysis.contrast_at(first, args.contrast_at)}
    if len(specs) > 1:
        st = analysis.ensemble_stats(specs, args.channel, normalize=args.normalize)
        out["ensemble"] = {"count": st.count, "max_rms": float(st.rms.max()), "mean_rms": float(st.rms.mean())}
    _print_json(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diskqed", description="Microdisk cavity / quantum-dot steady-state spectroscopy toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calib", help="intracavity photon number from taper measurements")
    c.add_argument("--power-nw", type=float, required=True)
    c.add_argument("--zeta", type=float, required=True, help="end-to-end taper transmission")
    c.add_argument("--contrast", type=float, required=True, help="resonance dip depth 1 - T")
    c.add_argument("--q", type=float, required=True, help="loaded quality factor")
    c.add_argument("--wavelength-nm", type=float, required=True)
    c.add_argument("--regime", choices=("undercoupled", "overcoupled"), default="undercoupled")
    c.add_argument("--detuning-ghz", type=float, default=0.0, help="laser minus cavity, ordinary frequency")
    c.add_argument("--budget", choices=("default", "none"), default="default")
    c.add_argument("--manifest")
    c.set_defaults(func=cmd_calib)

    def with_run(sp, out_required=True):
        sp.add_argument("--config")
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--manifest")
        sp.add_argument("--threads", type=int, default=1)

    s = sub.add_parser("spectrum", help="one transmission/reflection spectrum to CSV")
    with_run(s)
    s.add_argument("--method", choices=("weak", "full"))
    s.set_defaults(func=cmd_spectrum)

    a = sub.add_parser("anticross", help="anti-crossing map to CSV (long format)")
    with_run(a)
    a.set_defaults(func=cmd_anticross)

    w = sub.add_parser("powersweep", help="saturation curve to CSV")
    with_run(w)
    w.set_defaults(func=cmd_powersweep)

    fb = sub.add_parser("fit-bare", help="coupled-mode fit of an empty-cavity spectrum CSV")
    fb.add_argument("--spectrum", required=True)
    fb.add_argument("--regime", choices=("undercoupled", "overcoupled"), default="undercoupled")
    fb.add_argument("--out")
    fb.add_argument("--manifest")
    fb.set_defaults(func=cmd_fit_bare)

    fq = sub.add_parser("fit-qme", help="fit coupled spectra listed in the run config")
    with_run(fq, out_required=False)
    fq.set_defaults(func=cmd_fit_qme)

    fp = sub.add_parser("fit-powerlaw", help="power-law exponent from a two-column CSV")
    fp.add_argument("--csv", required=True)
    fp.add_argument("--power-column", default="power")
    fp.add_argument("--intensity-column", default="intensity")
    fp.add_argument("--out")
    fp.add_argument("--manifest")
    fp.set_defaults(func=cmd_fit_powerlaw)

    an = sub.add_parser("analyze", help="extrema, splitting, contrast and ensemble statistics of spectrum CSVs")
    an.add_argument("--spectrum", nargs="+", required=True)
    an.add_argument("--channel", default="T")
    an.add_argument("--splitting", action="store_true")
    an.add_argument("--contrast-at", type=float, help="laser offset in pm")
    an.add_argument("--smooth", action="store_true", help="3-point moving average before peak search")
    an.add_argument("--normalize", action="store_true")
    an.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except formats.ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
