"""Command-line front end.

    deepo defaults                      print the default experiment config
    deepo gen-data  [flags]             write a certified data batch
    deepo run ALGO  [flags]             run deepo | deepo-ce | deepo-rob
    deepo compare TRACE TRACE ...       align relative-error traces
    deepo verify    [flags]             run the certificate suite

Exit status: 0 success, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from . import data as dm
from . import experiments as ex
from .errors import DeePOError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    for f in dataclasses.fields(ex.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "gain":
            p.add_argument(flag, dest=f.name, type=json.loads, default=None,
                           help="gain matrix as a JSON list of rows")
        else:
            kind = {"int": int, "float": float, "str": str}.get(str(f.type), str)
            p.add_argument(flag, dest=f.name, type=kind, default=None)


def _config_from_args(args) -> ex.ExperimentConfig:
    base = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(ex.ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }
    return base.replace(**overrides)


def _load_inputs(args, cfg):
    """(data, system) from ``--data`` if given, else regenerated from the config."""
    system = ex.build_system(cfg)
    if getattr(args, "data", None):
        data, stored = dm.load_with_system(args.data)
        return data, stored or system
    return ex.build_data(cfg, system), system


def cmd_defaults(args) -> int:
    print(json.dumps(ex.ExperimentConfig().to_dict(), indent=2))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = _config_from_args(args)
    system = ex.build_system(cfg)
    data = ex.build_data(cfg, system)
    out = Path(args.output or Path(cfg.out_dir) / "data.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    dm.save(data, out, system)
    print(f"wrote {out}: n={data.n} m={data.m} T={data.T} seed={data.seed}")
    print(f"rank(D_-) = {data.m + data.n}, sigma_min(D_-) = {data.sigma_min_D:.6e}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    data, system = _load_inputs(args, cfg)
    result = ex.run_algorithm(cfg, args.algorithm, data, system)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / f"{args.algorithm}_trace.csv"
    ex.write_run_trace(result, trace_path)
    report = {"config": cfg.to_dict(), "trace_file": str(trace_path), **result.report()}
    report_path = out / f"{args.algorithm}_report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    c = report["certificates"]
    print(f"{args.algorithm}: {report['status']} after {report['iterations']} iterations "
          f"({report['wall_time']:.3f} s)")
    print(f"  final relative error {report['final_rel_err']:.3e}, ||K - K*||_F = {report['K_error_fro']:.3e}")
    print(f"  monotone={c['monotone']}  rate slope={c['rate_slope']:.4g}  R^2={c['rate_r2']:.4f}")
    print(f"  trace  -> {trace_path}\n  report -> {report_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    header, rows, rates = ex.compare_traces(args.traces, args.labels)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {out} ({len(rows)} rows, {len(header) - 1} runs)")
    for label, r in rates.items():
        print(f"  {label:<20s} log-rate slope={r['slope']:.5g}  R^2={r['r2']:.4f}  window={r['start']}..{r['stop']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config_from_args(args)
    data, system = _load_inputs(args, cfg)
    rep = ex.run_certificates(cfg, data, system)
    for line in rep.lines():
        print(line)
    n_fail = sum(not c.passed for c in rep.checks)
    print(f"seed={rep.seed}  checks={len(rep.checks)}  failures={n_fail}  time={rep.wall_time:.2f} s")
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepo", description="Data-enabled policy optimization for LQR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("defaults", help="print the default config as JSON")
    p.set_defaults(func=cmd_defaults)

    p = sub.add_parser("gen-data", help="generate and certify a data batch")
    _add_config_flags(p)
    p.add_argument("--output", "-o", help="output file (default OUT_DIR/data.json)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run one algorithm and write its trace")
    p.add_argument("algorithm", choices=ex.ALGORITHMS)
    _add_config_flags(p)
    p.add_argument("--data", help="data-batch file (default: regenerate from config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="combine run traces into one table")
    p.add_argument("traces", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--output", "-o", default="runs/compare.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the certificate suite")
    _add_config_flags(p)
    p.add_argument("--data", help="data-batch file (default: regenerate from config)")
    p.add_argument("--report", help="also write the report as JSON")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DeePOError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
