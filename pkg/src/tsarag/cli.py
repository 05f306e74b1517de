"""Command-line entrypoints.

Exit codes: 0 success, 1 usage error, 2 runtime error (one-line diagnostic
on stderr). ``--model-url`` overrides the config value, which overrides the
``TSARAG_MODEL_URL`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .agents import TaskRequest, route
from .dataio import (
    ExperimentConfig,
    SyntheticSpec,
    gen_synthetic,
    load_config,
    read_csv,
    write_csv,
    write_labels,
    write_mask_csv,
    write_results,
)
from .errors import TsaragError
from .experiment import run_task
from .missingness import MissingSpec, generate_mask

TASKS = ("forecast", "impute", "anomaly", "classify")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


def _add_task_command(sub, name: str) -> None:
    p = sub.add_parser(name, help=f"run the {name} pipeline")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--data", default=None, help="override the data CSV path")
    p.add_argument("--model-url", default=None, help="remote model endpoint")
    p.add_argument("--no-pool", action="store_true")
    p.add_argument("--universal-agent", action="store_true")
    p.add_argument("--no-train", action="store_true")
    p.add_argument("--no-dpo", action="store_true")
    p.add_argument("--shared-pool", action="store_true")
    p.add_argument("--cluster-raw", action="store_true",
                   help="cluster raw values instead of standardized ones")


def build_parser() -> _Parser:
    parser = _Parser(prog="tsarag",
                     description="agentic retrieval-augmented time series tasks")
    sub = parser.add_subparsers(dest="command")
    for task in TASKS:
        _add_task_command(sub, task)

    ask = sub.add_parser("ask", help="route a request text to its task kind")
    ask.add_argument("--text", required=True)

    gen = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    gen.add_argument("--generator", required=True,
                     choices=("seasonal_sines", "regime_switch", "ar1_spikes"))
    gen.add_argument("--n-series", type=int, default=4)
    gen.add_argument("--n-steps", type=int, default=2000)
    gen.add_argument("--noise", type=float, default=0.05)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--param", action="append", default=[],
                     metavar="KEY=VALUE", help="generator-specific parameter")

    mask = sub.add_parser("mask", help="generate a missingness mask for a CSV")
    mask.add_argument("--data", required=True)
    mask.add_argument("--pattern", required=True,
                      choices=("point", "block", "temporal_block", "spatial_block"))
    mask.add_argument("--rate", type=float, required=True)
    mask.add_argument("--mean-block-len", type=int, default=4)
    mask.add_argument("--width", type=int, default=1)
    mask.add_argument("--seed", type=int, required=True)
    mask.add_argument("--out", required=True, help="mask CSV path")
    return parser


def _parse_params(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise _UsageError(f"--param needs KEY=VALUE, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _run_task_command(args) -> int:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(
        task=args.command,
        seed=args.seed,
        out_dir=args.out,
        data_path=args.data,
        no_pool=True if args.no_pool else None,
        universal_agent=True if args.universal_agent else None,
        no_train=True if args.no_train else None,
        no_dpo=True if args.no_dpo else None,
        shared_pool=True if args.shared_pool else None,
        cluster_raw=True if args.cluster_raw else None,
    )
    url = args.model_url or cfg.model_url or os.environ.get("TSARAG_MODEL_URL")
    if url:
        cfg = cfg.with_overrides(model_url=url)
    resp = run_task(cfg)
    out = write_results(resp, cfg.out_dir, config=cfg)
    for name, value in resp.metrics.items():
        print(f"{name}: {value:.6g}")
    print(f"results written to {out}")
    return 0


def _run_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        generator=args.generator,
        n_series=args.n_series,
        n_steps=args.n_steps,
        noise=args.noise,
        seed=args.seed,
        params=_parse_params(args.param),
    )
    data, labels = gen_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv")
    print(f"wrote {out / 'data.csv'}")
    if labels is not None:
        write_labels(labels, out / "labels.csv")
        print(f"wrote {out / 'labels.csv'}")
    return 0


def _run_mask(args) -> int:
    data, _ = read_csv(args.data)
    spec = MissingSpec(
        pattern=args.pattern,
        rate=args.rate,
        mean_block_len=args.mean_block_len,
        seed=args.seed,
        spatial_width=args.width,
    )
    mask = generate_mask(spec, data.n_series, data.n_steps)
    write_mask_csv(mask, data.series_ids, args.out)
    print(f"wrote {args.out} (missing fraction {mask.missing_fraction:.4f})")
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command in TASKS:
            return _run_task_command(args)
        if args.command == "ask":
            kind = route(TaskRequest(text=args.text))
            print(kind.label)
            return 0
        if args.command == "gen-synthetic":
            return _run_gen_synthetic(args)
        return _run_mask(args)
    except (TsaragError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
