"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 validation error,
4 numerical failure.  Failures print one line ``error[<category>]: ...`` on
stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import selftest
from .fem import FemError
from .lab import ConfigError, run_deterministic_study, run_stochastic_study
from .noise import NoiseModel, ito_isometry_check
from .plot import emit_plot
from .spectral import CovarianceSpec, DivergentCovarianceError, QuadratureError

EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL = 2, 3, 4

log = logging.getLogger("stochschro")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error[config]: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochschro", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in [
        ("deterministic", "deterministic spatial convergence study"),
        ("stochastic", "strong convergence study with coupled Q-Wiener noise"),
        ("isometry", "Monte Carlo check of the Ito isometry for the truncated noise"),
        ("show-config", "print the effective configuration"),
        ("selftest", "run the invariant checks of all modules"),
    ]:
        sp = sub.add_parser(name, help=help_)
        if name == "selftest":
            continue
        sp.add_argument("--config", help="config file or shipped preset name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--output-dir")
        sp.add_argument("--levels")
        sp.add_argument("--samples", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--mode", choices=["be", "exact"])
        sp.add_argument("--reference", help="'oracle' or 'fine:<level>'")
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def effective_config(args) -> dict[str, str]:
    layers = []
    if args.command == "stochastic":
        layers.append({"noise": "on", "reference": "fine:9", "mode": "be", "levels": "2-5"})
    elif args.command == "isometry":
        layers.append({"noise": "on", "J": "64", "s": "1", "samples": "10000"})
    if args.config:
        layers.append(cfgmod.load_file(args.config))
    flags = {
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.output_dir,
        "levels": args.levels,
        "samples": args.samples,
        "dt": args.dt,
        "mode": args.mode,
        "reference": args.reference,
    }
    layers.append({k: str(v) for k, v in flags.items() if v is not None})
    layers.append(cfgmod.parse_overrides(args.overrides))
    flat = cfgmod.effective(*layers)
    if args.command == "deterministic":
        flat["noise"] = "off"
    return flat


def _write_outputs(report, out_dir: Path) -> None:
    (out_dir / "report.json").write_text(report.to_json())
    with open(out_dir / "table.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(report.table_rows())
    emit_plot(report, out_dir / "rate.svg")


def _setup_log(out_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(out_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("stochschro")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def _run(args) -> int:
    if args.command == "selftest":
        return 0 if selftest.run() else EXIT_NUMERICAL

    flat = effective_config(args)
    if args.command == "show-config":
        sys.stdout.write(cfgmod.dump(flat))
        return 0

    if args.command in ("stochastic", "isometry") and "seed" not in flat:
        flat["seed"] = str(secrets.randbits(63))
    out_dir = Path(flat["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = _setup_log(out_dir)
    try:
        log.info("effective config:\n%s", cfgmod.dump(flat))
        start = time.perf_counter()
        if args.command == "isometry":
            rep = _isometry(flat)
            (out_dir / "isometry.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
            print(f"empirical {rep['empirical']:.6g}  exact {rep['exact']:.6g}  "
                  f"deviation {rep['deviation_sigma']:.2f} sigma  within 3 sigma: {rep['within_3sigma']}")
        else:
            experiment = cfgmod.to_experiment(flat)
            if args.command == "stochastic":
                if experiment.noise is None:
                    raise ConfigError("stochastic study requires noise = on")
                report = run_stochastic_study(experiment)
            else:
                report = run_deterministic_study(experiment)
            report.config = {"effective": cfgmod.report_echo(flat), "resolved": report.config}
            _write_outputs(report, out_dir)
            print(f"rate u1 {report.fitted_rate_u1:.3f}  rate u2 {report.fitted_rate_u2:.3f}  "
                  f"fit residual {report.fit_residual:.3g}  -> {out_dir}")
        log.info("wall time %.2f s", time.perf_counter() - start)
    finally:
        logging.getLogger("stochschro").removeHandler(handler)
        handler.close()
    return 0


def _isometry(flat: dict[str, str]) -> dict:
    dt = float(flat["dt"])
    n_steps = round(float(flat["T"]) / dt)
    j = flat["J"]
    if j == "auto":
        raise cfgmod.ConfigParseError("isometry needs an explicit integer J")
    model = NoiseModel(
        CovarianceSpec(float(flat["s1"]), 1), CovarianceSpec(float(flat["s2"]), 2),
        int(j), int(flat["seed"]), dt, n_steps,
    )
    rep = ito_isometry_check(model, int(flat["samples"]))
    return {
        "config": flat,
        "empirical": rep.empirical,
        "exact": rep.exact,
        "stderr": rep.stderr,
        "deviation_sigma": rep.deviation_sigma,
        "within_3sigma": rep.within_3sigma,
        "t": rep.t,
        "n_samples": rep.n_samples,
    }


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _run(args)
    except DivergentCovarianceError as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except cfgmod.ConfigParseError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FemError, QuadratureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error[numerical]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
