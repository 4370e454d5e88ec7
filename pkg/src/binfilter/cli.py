"""Command-line entry point: ``binfilter {toy,run,oracle,dump-truth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import (
    ConfigError,
    PAIR_TOL,
    VALUE_TOL,
    load_config,
    make_shared_data,
    run_experiment,
    run_oracle_suite,
    run_toy,
    TOY_Y,
)
from .truth import TrueModelTable, matrix_to_csv

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("binfilter")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="binfilter", description="Optimal-coupling ensemble updates for binary chains.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    toy = sub.add_parser("toy", help="four-node example with exact checks")
    toy.add_argument("--out", help="directory for CSV outputs")
    toy.add_argument("--y", type=_floats, default=TOY_Y, help="comma-separated observations")
    toy.add_argument("--sigma", type=float, default=2.0)
    toy.add_argument("--dump-value-functions", action="store_true",
                     help="write E_k.csv value functions and t_star.csv")

    def common(sp):
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a configuration key (repeatable)")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")

    run = sub.add_parser("run", help="replicated filtering experiment")
    common(run)
    run.add_argument("--jobs", type=int, default=1, help="worker processes")

    orc = sub.add_parser("oracle", help="brute-force validation batteries")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--out", help="directory for oracle_suite.csv")
    orc.add_argument("--instances", type=int, default=200)
    orc.add_argument("--grid-instances", type=int, default=50)
    orc.add_argument("--grid-steps", type=int, default=2000)

    dump = sub.add_parser("dump-truth", help="write the simulated truth and observations")
    common(dump)
    return p


def cmd_toy(args) -> int:
    if len(args.y) < 2:
        raise UsageError("--y needs at least two values")
    rep = run_toy(args.out, y=args.y, sigma=args.sigma, dump_value_functions=args.dump_value_functions)
    q = rep["rule"]
    print("posterior P(x_k=0):", " ".join(f"{v:.6f}" for v in rep["posterior_marginals0"]))
    print("t*:", " ".join(f"{v:.6f}" for v in rep["t_star"]))
    print(q.to_csv(), end="")
    print(f"expected unchanged: {rep['value']:.10f} (enumerated {rep['enumerated_value']:.10f})")
    print(f"pair-marginal error: {rep['pair_marginal_error']:.3g}")
    print(f"full-joint deviation (informational): {rep['joint_deviation']:.3g}")
    ok = rep["pair_marginal_error"] <= PAIR_TOL and abs(rep["value"] - rep["enumerated_value"]) <= VALUE_TOL
    return EXIT_OK if ok else EXIT_CHECK


def _config(args):
    return load_config(args.config, args.set, seed=args.seed, out=args.out)


def cmd_run(args) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cfg = _config(args)
    manifest = run_experiment(cfg, jobs=args.jobs)
    print(json.dumps(manifest["summary"], sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    ok, rows = run_oracle_suite(args.seed, args.instances, args.grid_instances,
                                grid_steps=args.grid_steps, out=args.out)
    fails = [r for r in rows if r[-1] == "fail"]
    for r in fails:
        print("FAIL", *r[:5], file=sys.stderr)
    print(f"{len(rows) - len(fails)}/{len(rows)} checks passed")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_dump_truth(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_shared_data(cfg)
    (out / "true_model.csv").write_text(TrueModelTable().to_csv(), encoding="utf-8", newline="\n")
    (out / "truth.csv").write_text(matrix_to_csv(data.truth, integer=True), encoding="utf-8", newline="\n")
    (out / "observations.csv").write_text(matrix_to_csv(data.obs), encoding="utf-8", newline="\n")
    if data.exact is not None:
        (out / "marginals_c.csv").write_text(matrix_to_csv(data.exact), encoding="utf-8", newline="\n")
    print(f"wrote truth for n={cfg.n} T={cfg.T} seed={cfg.seed} to {out}")
    return EXIT_OK


COMMANDS = {"toy": cmd_toy, "run": cmd_run, "oracle": cmd_oracle, "dump-truth": cmd_dump_truth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"binfilter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"binfilter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.exception("runtime error")
        print(f"binfilter: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
