"""Command-line front end: single runs, sweeps, and figure-data extraction."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .engine import RunConfig, run
from .experiment import emit_figure_data, parse_spec, run_sweep, spec_from_mapping
from .phy import ConfigurationError

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} must look like field=value")
        name, raw = pair.split("=", 1)
        if name not in _FIELDS:
            raise ConfigurationError(f"unknown configuration field {name!r}")
        kind = _FIELDS[name].type
        if kind == "int":
            out[name] = int(raw)
        elif kind == "float":
            out[name] = float(raw)
        else:
            out[name] = raw
    return out


def _cmd_run(args) -> int:
    fields = {}
    if args.config:
        import yaml

        with open(args.config) as fh:
            doc = yaml.safe_load(fh) or {}
        spec = spec_from_mapping({"base": doc})
        fields.update(spec.base)
    fields.update(_parse_overrides(args.set or []))
    if args.seed is not None:
        fields["seed"] = args.seed
    cfg = RunConfig(**fields)
    report = run(cfg)
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.key()}.json").write_text(text)
    print(text)
    return 0


def _cmd_sweep(args) -> int:
    spec = parse_spec(args.spec)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if args.workers is not None:
        spec = dataclasses.replace(spec, workers=args.workers)
    out_dir = args.out or spec.output
    overrides = _parse_overrides(args.set or [])
    if overrides:
        base = dict(spec.base)
        base.update(overrides)
        spec = dataclasses.replace(spec, base=base)

    def progress(report):
        print(f"{report.config_key}: mean {report.mean_ms:.3f} ms "
              f"drop {report.drop_fraction:.3f} ({report.runtime_s:.1f} s)")

    csv_path, failures = run_sweep(spec, out_dir, progress=progress)
    print(f"results: {csv_path}")
    if failures:
        print(f"{failures} point(s) failed; see results.meta.json", file=sys.stderr)
        return 1
    return 0


def _cmd_figure(args) -> int:
    written = emit_figure_data(args.table, args.figure, args.out)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrv2x",
        description="Radio-latency simulation of V2N2V packet exchanges over 5G NR",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single configuration point")
    p_run.add_argument("--config", help="YAML file of RunConfig fields")
    p_run.add_argument("--set", action="append", metavar="FIELD=VALUE",
                       help="override one configuration field")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.add_argument("--out", help="directory for the JSON report")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a sweep specification")
    p_sweep.add_argument("--spec", required=True, help="YAML sweep file")
    p_sweep.add_argument("--out", help="output directory (default from spec)")
    p_sweep.add_argument("--seed", type=int, help="seed override")
    p_sweep.add_argument("--workers", type=int, help="parallel point workers")
    p_sweep.add_argument("--set", action="append", metavar="FIELD=VALUE",
                         help="override one base field for every point")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_fig = sub.add_parser("figure", help="emit plottable series for a figure")
    p_fig.add_argument("--table", required=True, help="results.csv from a sweep")
    p_fig.add_argument("--figure", required=True, help="figure id, e.g. fig4")
    p_fig.add_argument("--out", required=True, help="series output directory")
    p_fig.set_defaults(fn=_cmd_figure)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
