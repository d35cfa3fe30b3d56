"""End-to-end workflows behind the CLI: train, fairify, evaluate, experiment.

Reports are plain dictionaries with the layout
``{variant: {task: {"performance": {"mean", "std"}, "unfairness": {"mean", "std"}}}}``;
:func:`render_table` turns one into the text table printed by the CLI.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SPLIT_NAMES, Dataset, SplitSpec, SynthConfig, mask_labels, split_indices, synth_generate
from .distrib import JitterConfig
from .errors import DataLeakage, EmptyInput, InvalidConfig, ParseError, SchemaError
from .fairtransform import FairCalibrator, Predictions
from .metrics import ks_unfairness, task_report
from .mtl import MtlNetwork, NetworkConfig, YotoConfig, calibrate_lambda, init_network, lambda_grid_errors, train

log = logging.getLogger(__name__)

__all__ = [
    "TrainSettings",
    "fit_model",
    "fairify",
    "write_predictions",
    "read_predictions",
    "evaluate_predictions",
    "run_experiment",
    "render_table",
    "derive_seeds",
]


def derive_seeds(master: int, count: int) -> list:
    """Independent child seeds of ``master`` (stable across runs)."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(count)]


# -- training ---------------------------------------------------------------


@dataclass
class TrainSettings:
    network: dict = field(default_factory=dict)  # NetworkConfig fields except n_features / groups / tasks
    yoto: YotoConfig = field(default_factory=YotoConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    objective: str = "regression"
    standardize: bool = True

    @classmethod
    def from_dict(cls, doc: dict, seed: int | None = None) -> "TrainSettings":
        unknown = set(doc) - {"network", "yoto", "split", "objective", "standardize", "seed"}
        if unknown:
            raise InvalidConfig(f"unknown train config keys: {sorted(unknown)}")
        seed = doc.get("seed", 0) if seed is None else seed
        network = dict(doc.get("network", {}))
        yoto = dict(doc.get("yoto", {}))
        split = dict(doc.get("split", {}))
        for sub in (network, yoto, split):
            sub.setdefault("seed", seed)
        try:
            return cls(network, YotoConfig.from_dict(yoto), SplitSpec.from_dict(split),
                       doc.get("objective", "regression"), bool(doc.get("standardize", True)))
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None


def _network_config(ds: Dataset, settings: TrainSettings, tasks=None) -> NetworkConfig:
    doc = dict(settings.network)
    doc.setdefault("film_center", settings.yoto.midpoint)
    try:
        return NetworkConfig(n_features=ds.n_features, groups=ds.groups,
                             tasks=tuple(ds.task_kinds) if tasks is None else tasks, **doc)
    except TypeError as exc:
        raise InvalidConfig(f"bad network config: {exc}") from None


def fit_model(ds: Dataset, settings: TrainSettings, *, train_rows=None, validation_rows=None) -> MtlNetwork:
    """Train on the train split, pick ``lambda`` on the validation split.

    The returned network's ``meta`` records the chosen weights, the split and
    the training row ids (so the calibration pool can be checked for overlap).
    """
    if train_rows is None or validation_rows is None:
        train_rows, _, validation_rows, _ = split_indices(ds, settings.split)
    train_set, val_set = ds.subset(train_rows), ds.subset(validation_rows)
    net = init_network(_network_config(ds, settings))
    net = train(net, train_set, settings.yoto, standardize=settings.standardize)
    yoto = settings.yoto
    grid = yoto.grid(net.config.n_tasks)
    if len(val_set) and val_set.mask.any():
        lam = calibrate_lambda(net, val_set, grid, settings.objective, bounds=(yoto.lower, yoto.upper))
        errors = lambda_grid_errors(net, val_set, grid)
    else:
        log.warning("empty validation split; using the FiLM centre as lambda")
        lam, errors = np.full(net.config.n_tasks, yoto.midpoint), None
    net.meta = {
        "lambda": lam.tolist(),
        "objective": settings.objective,
        "split": settings.split.to_dict(),
        "yoto": yoto.to_dict(),
        "train_ids": np.sort(train_set.ids).tolist(),
        "validation_grid": [g.tolist() for g in grid],
        "validation_errors": None if errors is None else errors.tolist(),
    }
    return net


# -- post-processing --------------------------------------------------------


@dataclass
class FairifyResult:
    rows: np.ndarray  # row index into the dataset
    groups: np.ndarray
    split: np.ndarray  # split name per row
    base: np.ndarray  # (n, n_tasks)
    fair: np.ndarray  # (n, n_tasks)
    task_names: tuple
    task_kinds: tuple
    calibrator: FairCalibrator


def fairify(net: MtlNetwork, ds: Dataset, *, lam=None, jitter: JitterConfig | None = None, seed: int = 0,
            split_spec: SplitSpec | None = None) -> FairifyResult:
    """Fit the calibrator on the pool split and transform every row of ``ds``."""
    meta = net.meta or {}
    if lam is None:
        lam = meta.get("lambda")
    if lam is None:
        raise InvalidConfig("no lambda given and the model carries no calibrated lambda")
    if split_spec is None:
        if "split" not in meta:
            raise InvalidConfig("model has no split record; pass a split spec")
        split_spec = SplitSpec.from_dict(meta["split"])
    parts = split_indices(ds, split_spec)
    pool_rows = parts[SPLIT_NAMES.index("pool")]
    if pool_rows.size == 0:
        raise InvalidConfig("pool split is empty; calibration needs unlabeled pool data")
    overlap = np.intersect1d(ds.ids[pool_rows], np.asarray(meta.get("train_ids", []), dtype=np.int64))
    if overlap.size:
        raise DataLeakage(f"{overlap.size} pool rows were used for training")
    base = net.predict(ds.X, ds.s, lam)
    cal = FairCalibrator(net.config.tasks, jitter).fit(Predictions(base[pool_rows], ds.s[pool_rows]))
    fair = cal.transform_batch(Predictions(base, ds.s), seed=seed).values
    names = np.empty(len(ds), dtype=object)
    for name, idx in zip(SPLIT_NAMES, parts):
        names[idx] = name
    return FairifyResult(np.arange(len(ds)), ds.s.copy(), names, base, fair, ds.task_names, ds.task_kinds, cal)


def _fmt(x) -> str:
    return repr(float(x))


def write_predictions(result: FairifyResult, path) -> None:
    header = ["row", "s", "split"]
    header += [f"base_{t}" for t in result.task_names] + [f"fair_{t}" for t in result.task_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(result.rows)):
            writer.writerow([int(result.rows[i]), int(result.groups[i]), result.split[i],
                             *map(_fmt, result.base[i]), *map(_fmt, result.fair[i])])


def read_predictions(path) -> dict:
    """Parse a predictions CSV into ``{"row", "s", "split", "base", "fair", "tasks"}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: predictions file is empty") from None
        for col in ("row", "s", "split"):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        tasks = [h[len("base_"):] for h in header if h.startswith("base_")]
        if not tasks or any(f"fair_{t}" not in header for t in tasks):
            raise SchemaError(f"{path}: need matching base_<task> and fair_<task> columns")
        pos = {h: i for i, h in enumerate(header)}
        rows, groups, splits, base, fair = [], [], [], [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                rows.append(int(rec[pos["row"]]))
                groups.append(int(rec[pos["s"]]))
                base.append([float(rec[pos[f"base_{t}"]]) for t in tasks])
                fair.append([float(rec[pos[f"fair_{t}"]]) for t in tasks])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: malformed record on line {line_no}") from None
            splits.append(rec[pos["split"]])
    if not rows:
        raise EmptyInput(f"{path}: no prediction rows")
    n_tasks = len(tasks)
    return {
        "row": np.asarray(rows, dtype=np.int64),
        "s": np.asarray(groups, dtype=np.int64),
        "split": np.asarray(splits, dtype=object),
        "base": np.asarray(base, dtype=np.float64).reshape(-1, n_tasks),
        "fair": np.asarray(fair, dtype=np.float64).reshape(-1, n_tasks),
        "tasks": tasks,
    }


# -- evaluation -------------------------------------------------------------


def _summary(values) -> dict:
    if any(v is None for v in values):
        return {"mean": None, "std": None}
    values = np.asarray(values, dtype=np.float64)
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return {"mean": float(values.mean()), "std": std}


def _cell_metrics(kind, pred, label, present, groups, log_regression) -> tuple:
    """(performance on labeled rows, unfairness on all rows); performance is None without labels."""
    perf = None
    if present.any():
        perf = task_report(kind, pred[present], label[present], groups[present],
                           log_predictions=log_regression)["performance"]
    return perf, ks_unfairness(pred, groups)


def evaluate_predictions(preds: dict, ds: Dataset, *, split: str = "test", bootstrap: int = 20, seed: int = 0,
                         log_regression: bool = False) -> dict:
    """Performance and unfairness of base and fair columns, with bootstrap spread.

    Unfairness uses every selected row; performance uses rows whose label is
    present. ``bootstrap=0`` reports the point estimate with ``std = 0``.
    """
    rows = preds["row"]
    if rows.size == 0:
        raise EmptyInput("no prediction rows")
    if rows.max() >= len(ds) or rows.min() < 0:
        raise SchemaError("prediction rows do not index into the label file")
    keep = np.ones(rows.size, dtype=bool) if split == "all" else preds["split"] == split
    if not keep.any():
        raise EmptyInput(f"no prediction rows in split {split!r}")
    rows = rows[keep]
    groups = preds["s"][keep]
    if np.any(groups != ds.s[rows]):
        raise SchemaError("group column of predictions disagrees with the label file")
    name_to_col = {n: t for t, n in enumerate(ds.task_names)}
    missing = [t for t in preds["tasks"] if t not in name_to_col]
    if missing:
        raise SchemaError(f"label file lacks task columns {missing}")
    rng = np.random.default_rng(seed)
    draws = [np.arange(rows.size)] if bootstrap == 0 else [rng.integers(0, rows.size, rows.size) for _ in range(bootstrap)]
    report = {}
    for variant, key in (("base", "base"), ("fair", "fair")):
        values = preds[key][keep]
        report[variant] = {}
        for j, task in enumerate(preds["tasks"]):
            col = name_to_col[task]
            kind = ds.task_kinds[col]
            label = ds.y[rows, col]
            present = ds.mask[rows, col]
            perf, unfair = [], []
            for idx in draws:
                p, u = _cell_metrics(kind, values[idx, j], label[idx], present[idx], groups[idx], log_regression)
                perf.append(p)
                unfair.append(u)
            report[variant][task] = {"performance": _summary(perf), "unfairness": _summary(unfair)}
    return report


def render_table(report: dict, title: str | None = None) -> str:
    """Text rendering: one row per task, a (performance, unfairness) pair per variant."""
    variants = list(report)
    tasks = list(next(iter(report.values()))) if variants else []
    cell = lambda d: "n/a" if d["mean"] is None else f"{d['mean']:.3f} ± {d['std']:.2f}"
    header = ["task"] + [f"{v}: {m}" for v in variants for m in ("performance", "unfairness")]
    body = [[t] + [cell(report[v][t][m]) for v in variants for m in ("performance", "unfairness")] for t in tasks]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in [header] + body]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    if title:
        lines.insert(0, title)
    return "\n".join(lines) + "\n"


# -- missing-label experiment -----------------------------------------------

_PROTOCOL_KEYS = {"synth", "split", "network", "yoto", "missing_fractions", "replications", "objective",
                  "jitter", "seed", "masked_task"}


def _fit_stl(ds, settings, task, train_rows, val_rows) -> MtlNetwork:
    objective = "regression" if ds.task_kinds[task] == "regression" else "both"
    return fit_model(ds.select_tasks([task]), replace(settings, objective=objective),
                     train_rows=train_rows, validation_rows=val_rows)


def run_experiment(protocol: dict, seed: int | None = None) -> dict:
    """MTL vs STL, raw vs post-processed, across label-masking fractions.

    For each replication a fresh split and training seed are derived from the
    master seed; the masked task's labels are hidden in the train split only.
    Cells report mean and std across replications.
    """
    unknown = set(protocol) - _PROTOCOL_KEYS
    if unknown:
        raise InvalidConfig(f"unknown protocol keys: {sorted(unknown)}")
    master = protocol.get("seed", 0) if seed is None else seed
    ds = synth_generate(SynthConfig.from_dict(protocol.get("synth", {})))
    fractions = [float(f) for f in protocol.get("missing_fractions", [0.0, 0.25, 0.5, 0.75, 0.95])]
    reps = int(protocol.get("replications", 3))
    if reps < 1:
        raise InvalidConfig("replications must be >= 1")
    masked_task = int(protocol.get("masked_task", 0))
    jitter_doc = dict(protocol.get("jitter", {}))
    variants = ("MTL", "MTL, post-processed", "STL", "STL, post-processed")
    collected = {f: {v: {t: {"performance": [], "unfairness": []} for t in ds.task_names} for v in variants}
                 for f in fractions}
    for r, rep_seed in enumerate(derive_seeds(master, reps)):
        base_doc = {k: protocol[k] for k in ("network", "yoto", "split") if k in protocol}
        base_doc["objective"] = protocol.get("objective", "regression")
        settings = TrainSettings.from_dict(base_doc, seed=rep_seed)
        train_rows, pool_rows, val_rows, test_rows = split_indices(ds, settings.split)
        jitter = JitterConfig(half_width=jitter_doc.get("half_width", 1e-3), seed=rep_seed)
        # single-task models of the other tasks do not see the masking
        stl_cache = {t: _fit_stl(ds, settings, t, train_rows, val_rows) for t in range(ds.n_tasks) if t != masked_task}
        for f in fractions:
            log.info("replication %d, missing fraction %.2f", r, f)
            masked = ds.subset(train_rows)
            masked = mask_labels(masked, masked_task, f, seed=rep_seed)
            mask = ds.mask.copy()
            mask[train_rows] = masked.mask
            work = ds.with_mask(mask)
            mtl = fit_model(work, settings, train_rows=train_rows, validation_rows=val_rows)
            stl = [stl_cache[t] if t in stl_cache else _fit_stl(work, settings, t, train_rows, val_rows)
                   for t in range(ds.n_tasks)]
            base = {
                "MTL": mtl.predict(ds.X, ds.s, mtl.meta["lambda"]),
                "STL": np.column_stack([n.predict(ds.X, ds.s, n.meta["lambda"])[:, 0] for n in stl]),
            }
            for learner, pred in base.items():
                cal = FairCalibrator(ds.task_kinds, jitter).fit(Predictions(pred[pool_rows], ds.s[pool_rows]))
                fair = cal.transform_batch(Predictions(pred[test_rows], ds.s[test_rows]), seed=rep_seed).values
                for variant, values in ((learner, pred[test_rows]), (f"{learner}, post-processed", fair)):
                    for t, task in enumerate(ds.task_names):
                        rep = task_report(ds.task_kinds[t], values[:, t], ds.y[test_rows, t], ds.s[test_rows])
                        collected[f][variant][task]["performance"].append(rep["performance"])
                        collected[f][variant][task]["unfairness"].append(rep["unfairness"])
    results = {
        f"{f:g}": {v: {t: {m: _summary(vals) for m, vals in metrics.items()} for t, metrics in per_task.items()}
                   for v, per_task in per_variant.items()}
        for f, per_variant in collected.items()
    }
    return {"protocol": protocol, "seed": master, "replications": reps, "masked_task": ds.task_names[masked_task],
            "results": results}


def render_experiment(report: dict) -> str:
    chunks = []
    for frac, table in report["results"].items():
        pct = float(frac) * 100
        chunks.append(render_table(table, title=f"{report['masked_task']} labels missing: {pct:g}%"))
    return "\n".join(chunks)
