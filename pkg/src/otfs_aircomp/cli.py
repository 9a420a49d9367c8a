"""Command line entry point: ``otfs-aircomp <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 self-consistency gate failure
(``--check``).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .aircomp_naive import SystemParams
from .channel_model import ensemble_from_gains, sample_ensemble
from .sim_harness import (ConfigError, csv_text, load_config, oracle_theorem1, oracle_zeta,
                          run_experiment, write_outputs)
from .zp_sic import ZpLayout, estimate_row_clean, sic_plan

EXIT_OK, EXIT_CONFIG, EXIT_GATE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _sweep_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="channel ensembles per point")
    p.add_argument("--frames", type=int, help="simulated frames per ensemble")
    p.add_argument("--out", help="CSV output path (PNG and JSON are written alongside)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--check", action="store_true",
                   help="fail with exit code 3 unless every report passes the 4-SE gate")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otfs-aircomp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run the sweep described by a config file")
    p.add_argument("config_path")
    _sweep_flags(p)
    p = sub.add_parser("sweep-snr", help="MSE against SNR")
    _sweep_flags(p)
    p = sub.add_parser("sweep-paths", help="MSE against the number of paths")
    _sweep_flags(p)

    p = sub.add_parser("oracle", help="closed forms against brute-force grid search")
    p.add_argument("which", choices=["theorem1", "zeta"])
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--check", action="store_true")

    p = sub.add_parser("plan-dump", help="print the SIC plan of a delay geometry")
    p.add_argument("--M", type=int, default=8)
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--delays", default="0,1,2,3", help="comma-separated distinct delays")
    p.add_argument("--out", help="write to a file instead of stdout")
    return parser


def _config_from_args(args, sweep: str):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected key=value")
        k, v = item.split("=", 1)
        overrides[k] = v
    for flag, key in (("seed", "master_seed"), ("trials", "trials"), ("frames", "frames"),
                      ("out", "out")):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    path = getattr(args, "config_path", None) or args.config
    config = load_config(path, overrides)
    if sweep is not None:
        config = config.replace(sweep=sweep)
    return config


def _cmd_sweep(args, sweep):
    config = _config_from_args(args, sweep)
    reports = run_experiment(config.replace(out=None), workers=args.workers)
    if config.out:
        paths = write_outputs(reports, config, config.sweep, plot=not args.no_plot)
        print(f"wrote {', '.join(str(p) for p in paths.values())}", file=sys.stderr)
    else:
        sys.stdout.write(csv_text(reports))
    if args.check:
        failed = [r for r in reports if not r.gate()]
        for r in failed:
            print(f"GATE FAIL {r.scheme} snr={r.snr_db} R={r.R}: empirical {r.empirical_mse:.6g} "
                  f"vs analytic {r.analytic_mse:.6g} (SE {r.gate_se:.3g})", file=sys.stderr)
        if failed:
            return EXIT_GATE
    return EXIT_OK


def _cmd_oracle(args):
    rng = np.random.default_rng(args.seed)
    failures = 0
    print("instance,grid,closed_form,resolution,ok")
    for n in range(args.instances):
        if args.which == "theorem1":
            U, R = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            snr = float(rng.choice([0.0, 10.0, 20.0]))
            ens = sample_ensemble(rng, U, R, 3, 0, shared_geometry=False)
            params = SystemParams.from_snr_db(8, 8, U, snr)
            res = oracle_theorem1(ens, params, args.grid)
            ok = res.agrees()
            print(f"{n},{res.grid_value:.12g},{res.closed_form:.12g},{res.resolution:.3g},{int(ok)}")
        else:
            U = int(rng.integers(1, 6))
            params = SystemParams.from_snr_db(8, 8, U, float(rng.choice([0.0, 10.0, 20.0])))
            ens = ensemble_from_gains(rng.rayleigh(np.sqrt(0.5), size=(U, 1)))
            prev = estimate_row_clean(None, ens, params)
            g = rng.rayleigh(np.sqrt(0.5), size=U)
            z_grid, z_star = oracle_zeta(prev, g, params, args.step)
            ok = abs(z_grid - z_star) <= args.step
            print(f"{n},{z_grid:.12g},{z_star:.12g},{args.step:.3g},{int(ok)}")
        failures += not ok
    print(f"# {args.instances - failures}/{args.instances} agree", file=sys.stderr)
    return EXIT_GATE if args.check and failures else EXIT_OK


def _cmd_plan_dump(args):
    try:
        delays = [int(v) for v in args.delays.replace(",", " ").split()]
    except ValueError:
        raise ConfigError("delays", f"cannot parse {args.delays!r}") from None
    if not delays:
        raise ConfigError("delays", "at least one delay is needed")
    try:
        plan = sic_plan(ZpLayout(args.M, args.N, max(delays)), delays)
    except ValueError as exc:
        raise ConfigError("delays", str(exc)) from None
    text = plan.dump()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_sweep(args, None)
        if args.command == "sweep-snr":
            return _cmd_sweep(args, "snr")
        if args.command == "sweep-paths":
            return _cmd_sweep(args, "paths")
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_plan_dump(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
