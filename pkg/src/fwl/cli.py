"""Command-line entry point: ``fwl <subcommand> [--config FILE] [--set key=value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .data import convert_dbpedia_csv, generate_synthetic, write_jsonl, write_labels

SUBCOMMANDS = {
    "train-s0": "s0",
    "fwl": "s0_fwl",
    "finetune": "s0_supervised",
    "full": "fully_supervised",
    "sweep": "sweep",
}


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise harness.ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")


def _config_from(args, pipeline: str | None = None) -> harness.ExperimentConfig:
    overrides = _parse_sets(args.set)
    if pipeline:
        overrides["pipeline"] = pipeline
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    return harness.load_config(args.config, overrides).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fwl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    helps = {
        "train-s0": "train S0 on the train split",
        "fwl": "fine-tune S0 with feedback-weighted learning",
        "finetune": "fine-tune S0 with gold deployment labels",
        "full": "train from scratch on train + deployment",
        "sweep": "lambda/beta grid sweep of FWL from a shared S0",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text))

    p = sub.add_parser("compare", help="run all four systems over several seeds")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the dev or test split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("dev", "test", "train", "deployment"), default="test")

    p = sub.add_parser("make-synthetic", help="write the synthetic task as JSONL files")
    _add_common(p)
    p.add_argument("--out", required=True, help="directory for train/dev/test.jsonl and labels.txt")

    p = sub.add_parser("convert-dbpedia", help="convert DBPedia Classes CSVs to raw-text JSONL")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label-column", default="l3")

    p = sub.add_parser("write-config", help="write the default (or overridden) config to a file")
    _add_common(p)
    p.add_argument("path")
    return parser


def _run(args) -> int:
    if args.command in SUBCOMMANDS:
        result = harness.run(_config_from(args, SUBCOMMANDS[args.command]))
        print(json.dumps({"pipeline": result.pipeline, "output": str(result.out_dir),
                          "dev_f1": result.metrics.get("dev", {}).get("f1_micro") if result.pipeline != "sweep"
                          else None}))
        return 0

    if args.command == "compare":
        summary = harness.compare(_config_from(args))
        for name, s in summary["systems"].items():
            print(f"{name:18s} {100 * s['mean']:6.2f} +- {100 * s['std']:.2f}  ({100 * s['delta_vs_s0']:+.2f})")
        return 0

    if args.command == "eval":
        config = _config_from(args)
        split, _ = harness.make_split(config)
        report = harness.evaluate_checkpoint(args.checkpoint, getattr(split, args.split), args.split)
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return 0

    if args.command == "make-synthetic":
        config = _config_from(args)
        pool, dev, test = generate_synthetic(config.synthetic_spec)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(out / "train.jsonl", pool)
        write_jsonl(out / "dev.jsonl", dev)
        write_jsonl(out / "test.jsonl", test)
        write_labels(out / "labels.txt", [f"class-{i}" for i in range(pool.num_classes)])
        print(str(out))
        return 0

    if args.command == "convert-dbpedia":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        labels = convert_dbpedia_csv(args.train, out / "train.jsonl", None, label_column=args.label_column)
        labels = convert_dbpedia_csv(args.dev, out / "dev.jsonl", labels, label_column=args.label_column)
        labels = convert_dbpedia_csv(args.test, out / "test.jsonl", labels, label_column=args.label_column)
        write_labels(out / "labels.txt", labels)
        print(f"{len(labels)} labels written to {out / 'labels.txt'}")
        return 0

    if args.command == "write-config":
        harness.write_config(args.path, _config_from(args))
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logging.getLogger("fwl").debug("pipeline failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
