"""Command-line front end.

Exit codes: 0 all checks pass, 1 a check failed or a module refused the
input, 2 configuration or input-file error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import SCENARIOS, default_config, load_config, parse_config
from .errors import ConfigError, SemimaxError
from .io import FormatError, load_field, save_field, save_wigner, write_csv
from .phase_space import WindowSpec, project_modes, wigner_transform
from .scenario import (
    Check,
    RunReport,
    _constant_coefficients,
    _write_measure,
    _write_slice,
    incident_wave_vector,
    run_scenario,
    transport_stage,
    write_rays,
)
from .spectral import MODE_LABELS, Medium, eigensystem, normalization_report
from .suites import SUITES, verify

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        value = args.threads
    else:
        env = os.environ.get("SEMIMAX_THREADS")
        if env is None or env.strip() == "":
            return None
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"SEMIMAX_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError("the thread count must be at least 1")
    return value


def _config(args):
    path = getattr(args, "config", None)
    cfg = load_config(path) if path else default_config(getattr(args, "scenario", None) or "half-space-conductor")
    if args.seed is not None:
        data = cfg.to_dict()
        data["rays"]["seed"] = args.seed
        cfg = parse_config(data)
    return cfg


def _out_dir(args, cfg=None) -> Optional[Path]:
    if args.out_dir is not None:
        out = Path(args.out_dir)
    elif cfg is not None:
        out = Path(cfg.output_dir)
    else:
        return None
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_report(report: RunReport, stream) -> None:
    for c in report.checks:
        print(c.line(), file=stream)
    for e in report.errors:
        print(f"ERROR {e['type']}: {e['message']}", file=stream)
    print(f"{'PASS' if report.passed else 'FAIL'} {report.name}", file=stream)


# ------------------------------------------------------------- commands


def cmd_dispersion_check(args, out) -> int:
    medium = Medium.homogeneous(args.epsilon, args.eta)
    x = np.zeros(3)
    k = np.asarray(args.k, dtype=float)
    es = eigensystem(medium, x, k)
    rep = normalization_report(es, medium, x, k)
    result = {
        "k": k.tolist(),
        "speed": float(medium.speed(x)),
        "eigenvalues": dict(zip(MODE_LABELS, np.asarray(es.eigenvalues, dtype=float).tolist())),
        "gram_deviation": rep.gram_dev,
        "flux_deviation": rep.flux_dev,
    }
    print(json.dumps(result, indent=2, sort_keys=True), file=out)
    report = RunReport("dispersion-check")
    report.add(Check("dispersion.normalization", rep.gram_dev, 1e-12))
    report.add(Check("dispersion.flux_identity", rep.flux_dev, 1e-10))
    if args.out_dir is not None:
        d = _out_dir(args)
        rows = [(lbl, float(es.eigenvalues[i]), *np.real(es.vectors[:, i])) for i, lbl in enumerate(MODE_LABELS)]
        write_csv(d / "eigensystem.csv", ["mode", "eigenvalue", "E1", "E2", "E3", "H1", "H2", "H3"], rows)
        report.write(d / "report.json")
    return report.exit_code()


def cmd_synthesize(args, out) -> int:
    from .grid import Grid
    from .synthesis import MirrorFieldSpec, PlaneWaveSpec, conductor_mirror_field, plane_wave_field

    cfg = _config(args)
    d = _out_dir(args, cfg)
    e_val, h_val = _constant_coefficients(cfg)
    v = 1.0 / np.sqrt(e_val * h_val)
    k0 = incident_wave_vector(cfg, v)
    nodes = cfg.grid["nodes"]
    for i, eps in enumerate(cfg.epsilons):
        h = np.pi * eps / cfg.grid["resolution"]
        spec = PlaneWaveSpec(k0, eps, cfg.wave["amplitude"], cfg.wave["mode"], e_val, h_val)
        if cfg.scenario == "half-space-conductor":
            if len(nodes) != 2:
                raise ConfigError("the conductor field uses a 2-D (x1, x3) grid")
            grid = Grid(tuple(nodes), (h, h), (0.0, 0.0), axes=(0, 2), periodic=(True, False), pinned_k=(0.0, k0[1], 0.0))
            snap = conductor_mirror_field(MirrorFieldSpec(spec), grid, strict=args.strict)
        else:
            axes = (0, 2, 1)[: len(nodes)]
            pinned = tuple(0.0 if a in axes else k0[a] for a in range(3))
            grid = Grid(tuple(nodes), (h,) * len(nodes), (0.0,) * len(nodes), axes=axes, pinned_k=pinned)
            snap = plane_wave_field(spec, grid, strict=args.strict)
        save_field(d / f"field_{i}.smxf", snap)
        print(f"field_{i}.smxf eps={eps!r} k={snap.meta.get('k', snap.meta.get('k_incident'))} adjusted={snap.meta['adjusted']}", file=out)
    return EXIT_PASS


def cmd_wigner(args, out) -> int:
    snap = load_field(args.field)
    window = WindowSpec(args.half_width, args.taper, args.taper_fraction)
    if args.probe:
        w = wigner_transform(snap, window, probes=np.asarray(args.probe, dtype=float), threads=_threads(args))
    else:
        centre = [[n // 2 for n in snap.grid.shape]]
        w = wigner_transform(snap, window, probe_indices=centre, threads=_threads(args))
    d = _out_dir(args) or Path(".")
    save_wigner(d / "wigner.smxw", w)
    dens = project_modes(w, Medium.homogeneous(args.epsilon, args.eta))
    for p in range(w.n_probes):
        _write_slice(d / f"phase_space_probe{p}.csv", w, dens, probe=p)
    for p, m in enumerate(w.marginal()):
        print(f"probe {p}: x={w.probes[p].tolist()} mass={float(m)!r}", file=out)
    return EXIT_PASS


def cmd_transport(args, out) -> int:
    cfg = _config(args)
    d = _out_dir(args, cfg)
    _, res = transport_stage(cfg, args.t_final)
    e = res.ensemble
    write_rays(d / "rays.csv", e)
    for name, measure in res.measures.items():
        if measure.count("alpha") or measure.count("beta"):
            _write_measure(d / f"boundary_measure_{name}.csv", measure)
    report = RunReport(f"transport:{cfg.scenario}", seed=cfg.rays["seed"])
    report.add(Check("transport.bookkeeping", e.bookkeeping_error(), 1e-12))
    report.add(Check("transport.failed_events", float(res.failed_events), 0.0))
    report.add(Check("transport.frequency_drift", e.max_drift_rate, 1e-8))
    report.write(d / "report.json")
    _print_report(report, out)
    return report.exit_code()


def cmd_verify(args, out) -> int:
    cfg = load_config(args.config) if args.config else None
    report = verify(args.suite, config=cfg, seed=args.seed, threads=_threads(args), rays=args.rays)
    _print_report(report, out)
    if args.out_dir is not None:
        report.write(_out_dir(args) / f"verify_{args.suite}.json")
    return report.exit_code()


def cmd_run(args, out) -> int:
    cfg = _config(args)
    d = _out_dir(args, cfg)
    report = run_scenario(cfg, d, threads=_threads(args), strict=args.strict)
    _print_report(report, out)
    return report.exit_code()


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the configuration)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (fallback: SEMIMAX_THREADS)")
    common.add_argument("--out-dir", default=None, help="output directory")
    common.add_argument("--strict", action="store_true", help="refuse to snap wave vectors to the grid lattice")

    p = argparse.ArgumentParser(prog="semimax", description="Phase-space diagnostics for time-harmonic Maxwell fields.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dispersion-check", parents=[common], help="eigensystem and normalization at one wave vector")
    s.add_argument("--k", type=float, nargs=3, default=[0.3, -0.2, 1.0])
    s.add_argument("--epsilon", type=float, default=1.0)
    s.add_argument("--eta", type=float, default=1.0)
    s.set_defaults(func=cmd_dispersion_check)

    s = sub.add_parser("synthesize", parents=[common], help="write plane-wave or mirror fields for each epsilon")
    s.add_argument("config", nargs="?", help="scenario YAML (default: built-in conductor scenario)")
    s.add_argument("--scenario", choices=SCENARIOS, default=None, help="built-in scenario when no file is given")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("wigner", parents=[common], help="Wigner matrices and mode densities of a field file")
    s.add_argument("field", help="SMXF field file")
    s.add_argument("--half-width", type=int, default=32)
    s.add_argument("--taper", choices=("cosine", "none"), default="cosine")
    s.add_argument("--taper-fraction", type=float, default=1.0)
    s.add_argument("--probe", type=float, nargs=3, action="append", help="probe point (repeatable)")
    s.add_argument("--epsilon", type=float, default=1.0, help="medium permittivity for the mode projection")
    s.add_argument("--eta", type=float, default=1.0, help="medium permeability for the mode projection")
    s.set_defaults(func=cmd_wigner)

    s = sub.add_parser("transport", parents=[common], help="ray stage of a scenario")
    s.add_argument("config", nargs="?")
    s.add_argument("--scenario", choices=SCENARIOS, default=None)
    s.add_argument("--t-final", type=float, default=3.0)
    s.set_defaults(func=cmd_transport)

    s = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    s.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    s.add_argument("--config", default=None, help="scenario YAML for the cross suite")
    s.add_argument("--rays", type=int, default=None, help="ray count override")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("run", parents=[common], help="full scenario pipeline")
    s.add_argument("config", nargs="?")
    s.add_argument("--scenario", choices=SCENARIOS, default=None)
    s.set_defaults(func=cmd_run)
    return p


def _error_record(exc: BaseException, code: int, args) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if code == EXIT_INTERNAL:
        rec["traceback"] = traceback.format_exc()
    out = getattr(args, "out_dir", None)
    if out is not None:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError:
            pass
    return rec


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_CONFIG
    if args.command == "verify" and args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=err)
        return EXIT_CONFIG
    try:
        return args.func(args, out)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        code, failure = EXIT_CONFIG, exc
    except SemimaxError as exc:
        code, failure = EXIT_FAIL, exc
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        code, failure = EXIT_INTERNAL, exc
        rec = _error_record(failure, code, args)
        print(json.dumps(rec, sort_keys=True), file=err)
        return code
    rec = _error_record(failure, code, args)
    print(json.dumps(rec, sort_keys=True), file=err)
    return code


if __name__ == "__main__":
    sys.exit(main())
