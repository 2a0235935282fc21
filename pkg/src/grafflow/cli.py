"""Command line entry point: ``grafflow run|converge|check <spec.json>``.

Exit status: 0 success, 1 a qualitative check failed, 2 invalid input or
a numerical error (reported as one JSON object on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .errors import GrafflowError

COMMAND_KIND = {"run": "single_run", "converge": "convergence_study", "check": "qualitative_checks"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grafflow", description="Ground states of NLS on metric graphs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "single flow run"),
                        ("converge", "convergence-order study against an analytic state"),
                        ("check", "localization and decay checks on a graph with a main line")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("spec", help="experiment spec (JSON)")
        s.add_argument("--out", help=f"output root directory (default ${ex.OUT_ENV} or ./{ex.DEFAULT_OUT})")
        s.add_argument("--paper-scale", action="store_true", help="merge the spec's paper_scale block")
        s.add_argument("--max-iter", type=int)
        s.add_argument("--dt", type=float)
        s.add_argument("--eps", type=float)
        if name == "run":
            s.add_argument("--dump-matrix", action="store_true", help="also write H.coo (row col value)")
    return p


def _fail(exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"max_iter": args.max_iter, "dt": args.dt, "eps": args.eps}
    try:
        spec = ex.load_spec(args.spec, paper_scale=args.paper_scale, overrides=overrides)
        if spec.kind != COMMAND_KIND[args.command]:
            raise ex.SpecError(f"'grafflow {args.command}' needs kind {COMMAND_KIND[args.command]!r}, "
                               f"spec has {spec.kind!r}")
        if args.command == "run":
            out = ex.run_experiment(spec, args.out, dump_matrix=args.dump_matrix)
            print(json.dumps(out.summary | {"directory": str(out.directory)}, indent=2, sort_keys=True))
            return 0
        if args.command == "converge":
            t = ex.convergence_study(spec, args.out)
            print(f"{'dx':>10} {'linf_error':>14} {'local_order':>12}")
            for dx, err, lo in zip(t.dx, t.errors, t.local_orders):
                print(f"{dx:10.5g} {err:14.6e} {'' if lo != lo else f'{lo:12.4f}':>12}")
            print(f"fitted slope: {t.slope:.4f}  ({t.directory})")
            return 0
        rep = ex.qualitative_checks(spec, args.out)
        print(json.dumps({"passed": rep.passed, "localization": rep.localization,
                          "monotone_decay": rep.monotone_decay, "directory": str(rep.directory)},
                         indent=2, sort_keys=True))
        return 0 if rep.passed else 1
    except (GrafflowError, OSError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
