"""Command line interface: gen, solve, sweep, oracle, summarize.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness.config import (SCENARIO_KEYS, SWEEP_AXES, ConfigError, ExperimentConfig,
                             config_from_dict, load_config, scenario_config)
from .harness.oracle_suite import (OracleSuiteConfig, load_oracle_config, run_oracle_suite,
                                   suite_summary, write_report)
from .harness.summarize import CsvFormatError, summarize, write_summary
from .harness.sweep import run_sweep
from .lgsbf.algorithms import ALGORITHMS, run_algorithm
from .lgsbf.stage1 import SolverSettings
from .netgen import Scenario, build_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"unknown scenario key in --set: {key}")
        out[key] = _parse_value(val)
    return out


def _algos(text: str):
    algos = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise ConfigError(f"--algos must be a comma list from {','.join(ALGORITHMS)}")
    return algos


def _experiment(args) -> ExperimentConfig:
    base = load_config(args.config).to_dict() if args.config else {}
    base.setdefault("scenario", {}).update(_overrides(args.set))
    for axis in SWEEP_AXES:
        vals = getattr(args, axis, None)
        if vals is not None:
            base.setdefault("sweep", {})[axis] = [_parse_value(v) for v in vals.split(",")]
    for key in ("trials", "workers"):
        if getattr(args, key, None) is not None:
            base[key] = getattr(args, key)
    if args.cross:
        base["cross"] = True
    if args.seed is not None:
        base["base_seed"] = args.seed
    if args.algos is not None:
        base["algorithms"] = list(_algos(args.algos))
    if args.out is not None:
        base["output"] = args.out
    return config_from_dict(base)


def _write(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---- subcommands


def cmd_gen(args) -> int:
    cfg = scenario_config(_overrides(args.set))
    seed = args.seed if args.seed is not None else 0
    sc = build_scenario(cfg, seed)
    _write(sc.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    algo = _algos(args.algos)[0] if args.algos else "lgsbf"
    if args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            try:
                sc = Scenario.from_json(fh.read())
            except (ValueError, KeyError) as err:
                raise ConfigError(f"invalid scenario file {args.scenario}: {err}") from err
    else:
        sc = build_scenario(scenario_config(_overrides(args.set)),
                            args.seed if args.seed is not None else 0)
    res = run_algorithm(sc, algo, SolverSettings())
    _write(res.to_json(indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment(args)

    def progress(recs):
        if not args.quiet:
            r = recs[0]
            print(f"point {r.point.as_dict()} trial {r.trial_id}: "
                  + ", ".join(f"{x.algorithm}={x.status}" for x in recs), file=sys.stderr)
    records = run_sweep(cfg, progress=progress)
    n_err = sum(r.status == "error" for r in records)
    print(f"wrote {len(records)} rows to {cfg.output} ({n_err} error rows)", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_oracle_config(args.config) if args.config else OracleSuiteConfig()
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.out is not None:
        changes["output"] = args.out
    if changes:
        d = {**cfg.__dict__, **changes}
        cfg = OracleSuiteConfig.from_dict(d)
    records = run_oracle_suite(cfg)
    with open(cfg.output, "w", newline="", encoding="utf-8") as fh:
        write_report(records, fh)
    print(json.dumps(suite_summary(records), indent=1))
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        table = summarize(args.csv)
    except (OSError, CsvFormatError) as err:
        raise ConfigError(str(err)) from err
    if args.out in (None, "-"):
        write_summary(table, sys.stdout)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_summary(table, fh)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachebeam", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--seed", type=int, default=None, help="scenario or base seed (default 0)")
        sp.add_argument("--out", default=None, help=out_help)
        sp.add_argument("--algos", default=None,
                        help=f"comma list from {','.join(ALGORITHMS)}")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a scenario key (repeatable)")

    g = sub.add_parser("gen", help="emit a scenario as JSON")
    common(g, "output file (default stdout)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one algorithm on one scenario")
    common(s, "result JSON file (default stdout)")
    s.add_argument("--scenario", help="scenario JSON from `gen` (otherwise generated)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run a Monte Carlo sweep and write CSV")
    common(w, "CSV path (overrides config output)")
    w.add_argument("--config", help="experiment JSON")
    w.add_argument("--trials", type=int, default=None)
    w.add_argument("--workers", type=int, default=None)
    w.add_argument("--cross", action="store_true", help="allow several varying axes")
    w.add_argument("--quiet", action="store_true")
    for axis in SWEEP_AXES:
        w.add_argument(f"--{axis}", default=None, help=f"comma list of {axis} values")
    w.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="tiny-instance comparison with exhaustive search")
    o.add_argument("--config", help="oracle suite JSON")
    o.add_argument("--trials", type=int, default=None)
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--out", default=None, help="report CSV path")
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("summarize", help="aggregate a sweep CSV")
    m.add_argument("csv")
    m.add_argument("--out", default=None, help="summary CSV (default stdout)")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
