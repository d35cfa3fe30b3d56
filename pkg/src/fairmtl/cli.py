"""Command-line entry point.

    fairmtl synth      --config synth.json  --out data.csv
    fairmtl train      --data data.csv --config train.json --out model.json
    fairmtl fairify    --model model.json --data data.csv --out preds.csv
    fairmtl evaluate   --predictions preds.csv --labels data.csv --out report.json
    fairmtl experiment --config protocol.json --out results/

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import SynthConfig, load_csv, load_json_config, synth_generate, write_csv
from .distrib import JitterConfig
from .errors import ConfigError, DataError, FairMTLError, InvalidConfig
from .mtl import MtlNetwork

log = logging.getLogger("fairmtl")


def _write_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _config(path) -> dict:
    return {} if path is None else load_json_config(path)


def cmd_synth(args) -> None:
    doc = _config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    ds = synth_generate(SynthConfig.from_dict(doc))
    write_csv(ds, args.out)
    log.info("wrote %d rows to %s", len(ds), args.out)


def cmd_train(args) -> None:
    settings = pipeline.TrainSettings.from_dict(_config(args.config), seed=args.seed)
    ds = load_csv(args.data)
    net = pipeline.fit_model(ds, settings)
    Path(args.out).write_text(net.to_json())
    log.info("trained on %d rows; lambda = %s", len(net.meta["train_ids"]), net.meta["lambda"])


def _parse_lambda(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise InvalidConfig(f"--lambda expects comma-separated numbers, got {text!r}") from None


def cmd_fairify(args) -> None:
    doc = _config(args.config)
    unknown = set(doc) - {"jitter", "seed", "lambda"}
    if unknown:
        raise InvalidConfig(f"unknown fairify config keys: {sorted(unknown)}")
    seed = doc.get("seed", 0) if args.seed is None else args.seed
    jitter = JitterConfig(**{"seed": seed, **doc.get("jitter", {})})
    lam = _parse_lambda(args.lam) if args.lam else doc.get("lambda")
    try:
        net = MtlNetwork.from_json(Path(args.model).read_text())
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidConfig(f"{args.model}: not a model file ({exc})") from None
    ds = load_csv(args.data)
    result = pipeline.fairify(net, ds, lam=lam, jitter=jitter, seed=seed)
    pipeline.write_predictions(result, args.out)
    if args.calibrator_out:
        Path(args.calibrator_out).write_text(result.calibrator.to_json() + "\n")


def cmd_evaluate(args) -> None:
    doc = _config(args.config)
    unknown = set(doc) - {"split", "bootstrap", "seed", "log_regression"}
    if unknown:
        raise InvalidConfig(f"unknown evaluate config keys: {sorted(unknown)}")
    seed = doc.get("seed", 0) if args.seed is None else args.seed
    preds = pipeline.read_predictions(args.predictions)
    ds = load_csv(args.labels)
    report = pipeline.evaluate_predictions(
        preds, ds, split=doc.get("split", "test"), bootstrap=int(doc.get("bootstrap", 20)), seed=seed,
        log_regression=bool(doc.get("log_regression", False)),
    )
    _write_json(report, Path(args.out))
    table = pipeline.render_table(report)
    if args.table:
        Path(args.table).write_text(table)
    else:
        sys.stdout.write(table)


def cmd_experiment(args) -> None:
    protocol = _config(args.config)
    report = pipeline.run_experiment(protocol, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(report, out / "report.json")
    (out / "table.txt").write_text(pipeline.render_experiment(report))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairmtl", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=None, help="overrides the seed in the config")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic biased dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train the lambda-conditioned multi-task network")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)

    p = add("fairify", cmd_fairify, "fit the fairness calibrator on the pool split and transform predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--lambda", dest="lam", help="comma-separated task weights (default: calibrated)")
    p.add_argument("--calibrator-out")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "performance/unfairness report with bootstrap spread")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--config")
    p.add_argument("--table", help="write the text table here instead of stdout")
    p.add_argument("--out", required=True)

    p = add("experiment", cmd_experiment, "MTL vs STL missing-label grid on synthetic data")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except FairMTLError as exc:
        print(f"fairmtl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"fairmtl {args.command}: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"fairmtl {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
