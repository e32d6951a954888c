"""Command-line entry point: ``schwarzlin {solve,table,figure,check}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, SchwarzlinError
from .harness.checks import CHECKS, check_suite
from .harness.config import parse_config_file, resolve_config
from .harness.experiments import (
    FIGURE_ALIASES,
    FIGURE_MODELS,
    REFERENCE_TABLES,
    figure_patterns,
    format_table,
    reproduce_table,
    run_experiment,
    run_figure,
    write_table_csv,
)

log = logging.getLogger("schwarzlin")

CONFIG_KEYS = ("problem", "alpha", "m", "fine", "coarse", "layers", "levels", "tau", "iters", "tol",
               "out", "seed", "large")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--problem", choices=["monomial", "pb", "l1"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--m", type=int, help="exponent of the monomial nonlinearity")
    g.add_argument("--fine", type=int, help="fine subdivisions per side (h = 1/fine)")
    g.add_argument("--coarse", type=int, help="coarse subdivisions per side (H = 1/coarse)")
    g.add_argument("--layers", type=int, help="overlap width in fine layers")
    g.add_argument("--levels", type=int, choices=[1, 2])
    g.add_argument("--tau", type=float, help="step size (default 1/4 or 1/5)")
    g.add_argument("--iters", type=int, help="outer iterations")
    g.add_argument("--tol", type=float, help="local relative energy tolerance")
    g.add_argument("--out", metavar="DIR", help="output directory")
    g.add_argument("--config", metavar="FILE", help="key = value configuration file")
    g.add_argument("--large", action="store_const", const=True, default=None,
                   help="include the large figure runs (slow)")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, default=1, help="table cells run in parallel")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="schwarzlin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run one configuration")
    t = sub.add_parser("table", parents=[common], help="reproduce a published table")
    t.add_argument("table_id", choices=sorted(REFERENCE_TABLES))
    f = sub.add_parser("figure", parents=[common], help="decay curves for one problem")
    f.add_argument("figure_id", choices=sorted(FIGURE_MODELS) + sorted(FIGURE_ALIASES))
    c = sub.add_parser("check", parents=[common], help="run the property-check suite")
    c.add_argument("selector", nargs="?", default=None, help=f"one of: {', '.join(CHECKS)}")
    return parser


def _flags(args) -> dict:
    return {k: getattr(args, k) for k in CONFIG_KEYS}


def _cmd_solve(args) -> int:
    cfg = resolve_config(_flags(args), args.config)
    res = run_experiment(cfg)
    print(f"rate {res.rate:.4f} over {cfg.iters} iterations (max inner iterations {res.max_inner})")
    if res.csv_path:
        print(f"wrote {res.csv_path}")
    return 0


RUN_CONTROL = ("iters", "tol", "out", "seed")


def _table_base(args):
    """Run-control settings for table cells; each cell fixes problem and geometry itself."""
    values = parse_config_file(args.config) if args.config else {}
    ignored = sorted(set(values) - set(RUN_CONTROL))
    if ignored:
        log.warning("table runs ignore config keys: %s", ", ".join(ignored))
    values = {k: v for k, v in values.items() if k in RUN_CONTROL}
    values.update({k: getattr(args, k) for k in RUN_CONTROL if getattr(args, k) is not None})
    return resolve_config({"problem": "monomial", "m": 3, **values})


def _cmd_table(args) -> int:
    base = _table_base(args)
    cells = reproduce_table(args.table_id, base=base, jobs=args.jobs,
                            cache_dir=Path(base.out) / "cache")
    print(format_table(cells))
    path = Path(base.out) / f"table-{args.table_id}.csv"
    write_table_csv(cells, path)
    bad = sum(not c.ok for c in cells)
    print(f"{len(cells) - bad}/{len(cells)} cells within tolerance; wrote {path}")
    return 0 if bad == 0 else 1


def _cmd_figure(args) -> int:
    out = args.out or "out"
    results = run_figure(args.figure_id, out=out, large=bool(args.large), iters=args.iters)
    ok = True
    for label, passed, detail in figure_patterns(results):
        print(f"{'PASS' if passed else 'FAIL'} {label}  [{detail}]")
        ok &= passed
    print(f"wrote SVG files to {out}")
    return 0 if ok else 1


def _cmd_check(args) -> int:
    results = check_suite(args.selector, seed=args.seed or 0)
    for r in results:
        print(r.line())
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


COMMANDS = {"solve": _cmd_solve, "table": _cmd_table, "figure": _cmd_figure, "check": _cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, KeyError) as exc:
        parser.error(str(exc))
    except (SchwarzlinError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
