"""Datasets, CSV ingestion, splitting, label masking and a synthetic generator.

Missing labels are carried by an explicit boolean ``mask`` (``True`` = label
present); the label array holds ``0.0`` wherever the mask is ``False``.

Synthetic generator
-------------------
``synth_generate`` draws, for ``i = 1..n``::

    x_i ~ N(0, I_d)
    s_i ~ Categorical(group_values, proportions)
    u_i = <w, x_i> + delta * s_i + noise * e_i
    v_i = <w_v, x_i> + noise * e'_i
    y1_i = u_i
    y2_i ~ Bernoulli(sigmoid(rho * u_i + (1 - rho) * v_i + logodds_shift * s_i))

with ``w`` and ``w_v`` orthonormal directions drawn from the seed (``w_v = 0``
when ``d = 1``) and ``e, e'`` standard normal. With the default groups
``{-1, 1}`` the two group means of ``y1`` sit ``2 * delta`` apart.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, ParseError, SchemaError, ShapeError, StratificationError

__all__ = [
    "Dataset",
    "CsvSchema",
    "SplitSpec",
    "SynthConfig",
    "load_csv",
    "write_csv",
    "split",
    "mask_labels",
    "synth_generate",
    "load_json_config",
]

SPLIT_NAMES = ("train", "pool", "validation", "test")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (n, d)
    s: np.ndarray  # (n,) integer group labels
    y: np.ndarray  # (n, n_tasks)
    mask: np.ndarray  # (n, n_tasks) bool, True where the label is present
    ids: np.ndarray = None  # (n,) row identifiers, default 0..n-1
    task_names: tuple = ("y1", "y2")
    task_kinds: tuple = ("regression", "score")

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        n = X.shape[0]
        s = np.asarray(self.s).astype(np.int64, copy=False).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[:, None]
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if s.shape != (n,) or y.shape[0] != n or mask.shape != y.shape or ids.shape != (n,):
            raise ShapeError("features, groups, labels, mask and ids must align on the first axis")
        if len(self.task_names) != y.shape[1] or len(self.task_kinds) != y.shape[1]:
            raise ShapeError("one task name and kind per label column")
        y = np.where(mask, y, 0.0)
        for t, kind in enumerate(self.task_kinds):
            if kind == "score":
                present = y[mask[:, t], t]
                if not np.all((present == 0) | (present == 1)):
                    raise ParseError(f"labels of score task {self.task_names[t]!r} must be 0 or 1")
        for name, arr in (("X", X), ("s", s), ("y", y), ("mask", mask), ("ids", ids)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "task_names", tuple(self.task_names))
        object.__setattr__(self, "task_kinds", tuple(self.task_kinds))

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_tasks(self) -> int:
        return self.y.shape[1]

    @property
    def groups(self) -> tuple:
        return tuple(np.unique(self.s).tolist())

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], s=self.s[rows], y=self.y[rows], mask=self.mask[rows], ids=self.ids[rows])

    def select_tasks(self, tasks: Sequence[int]) -> "Dataset":
        tasks = list(tasks)
        return replace(
            self,
            y=self.y[:, tasks],
            mask=self.mask[:, tasks],
            task_names=tuple(self.task_names[t] for t in tasks),
            task_kinds=tuple(self.task_kinds[t] for t in tasks),
        )

    def with_mask(self, mask) -> "Dataset":
        return replace(self, mask=mask)


# -- CSV --------------------------------------------------------------------

_FEATURE_RE = re.compile(r"^x(\d+)$")


@dataclass(frozen=True)
class CsvSchema:
    """Column layout. ``features=None`` picks every ``x<k>`` column in index order."""

    features: tuple | None = None
    group: str = "s"
    labels: tuple = ("y1", "y2")
    kinds: tuple = ("regression", "score")


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Read a dataset; empty label cells become masked labels. Row order is kept."""
    schema = schema or CsvSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        if schema.features is None:
            feats = sorted((h for h in header if _FEATURE_RE.match(h)), key=lambda h: int(h[1:]))
            if not feats:
                raise SchemaError(f"{path}: no feature columns named x0, x1, ...")
        else:
            feats = list(schema.features)
        for col in [*feats, schema.group, *schema.labels]:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        pos = {h: i for i, h in enumerate(header)}
        X, s, y, mask = [], [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            X.append([_parse_float(row[pos[c]], row_no, c) for c in feats])
            g = row[pos[schema.group]].strip()
            try:
                s.append(int(g))
            except ValueError:
                raise ParseError(f"row {row_no}, column {schema.group!r}: group {g!r} is not an integer") from None
            ys, ms = [], []
            for c in schema.labels:
                cell = row[pos[c]].strip()
                ms.append(cell != "")
                ys.append(_parse_float(cell, row_no, c) if cell else 0.0)
            y.append(ys)
            mask.append(ms)
    n_tasks = len(schema.labels)
    return Dataset(
        X=np.asarray(X, dtype=np.float64).reshape(len(X), len(feats)),
        s=np.asarray(s, dtype=np.int64),
        y=np.asarray(y, dtype=np.float64).reshape(len(y), n_tasks),
        mask=np.asarray(mask, dtype=bool).reshape(len(mask), n_tasks),
        task_names=tuple(schema.labels),
        task_kinds=tuple(schema.kinds),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(ds: Dataset, path) -> None:
    header = [f"x{k}" for k in range(ds.n_features)] + ["s", *ds.task_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(ds)):
            labels = []
            for t, kind in enumerate(ds.task_kinds):
                if not ds.mask[i, t]:
                    labels.append("")
                elif kind == "score":
                    labels.append(str(int(ds.y[i, t])))
                else:
                    labels.append(_fmt(ds.y[i, t]))
            writer.writerow([*map(_fmt, ds.X[i]), str(int(ds.s[i])), *labels])


# -- splitting and masking --------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.6
    pool: float = 0.2
    validation: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if any(not math.isfinite(f) or f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidConfig(f"split fractions must be non-negative and sum to 1, got {fr}")

    @property
    def fractions(self) -> tuple:
        return (self.train, self.pool, self.validation, self.test)

    @classmethod
    def from_dict(cls, doc) -> "SplitSpec":
        return cls(**_known_fields(cls, doc))

    def to_dict(self) -> dict:
        return asdict(self)


def split_indices(ds: Dataset, spec: SplitSpec) -> tuple:
    """Row indices of the four splits, stratified by group."""
    rng = np.random.default_rng(spec.seed)
    cum = np.cumsum(spec.fractions)
    parts = [[] for _ in SPLIT_NAMES]
    for g in ds.groups:
        rows = np.flatnonzero(ds.s == g)
        rows = rows[rng.permutation(rows.size)]
        bounds = np.floor(cum * rows.size + 0.5).astype(np.int64)
        bounds[-1] = rows.size
        start = 0
        for k, stop in enumerate(bounds):
            parts[k].append(rows[start:stop])
            start = stop
    out = []
    for name, chunks in zip(SPLIT_NAMES, parts):
        idx = np.sort(np.concatenate(chunks))
        if idx.size:
            missing = set(ds.groups) - set(np.unique(ds.s[idx]).tolist())
            if missing:
                raise StratificationError(f"{name} split has no samples of group(s) {sorted(missing)}")
        out.append(idx)
    return tuple(out)


def split(ds: Dataset, spec: SplitSpec) -> tuple:
    """Partition into (train, pool, validation, test), group-stratified and seeded."""
    return tuple(ds.subset(idx) for idx in split_indices(ds, spec))


def mask_labels(ds: Dataset, task: int, fraction: float, seed: int = 0) -> Dataset:
    """Hide ``floor(fraction * n_present)`` labels of one task, chosen uniformly."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidConfig(f"mask fraction must lie in [0, 1], got {fraction}")
    if not 0 <= task < ds.n_tasks:
        raise InvalidConfig(f"task index {task} out of range")
    present = np.flatnonzero(ds.mask[:, task])
    # decimal fractions like 0.29 must not floor to 28/100 through binary rounding
    k = math.floor(Fraction(repr(float(fraction))) * present.size)
    rng = np.random.default_rng(seed)
    hidden = rng.choice(present, size=k, replace=False) if k else np.empty(0, dtype=np.int64)
    mask = ds.mask.copy()
    mask[hidden, task] = False
    return ds.with_mask(mask)


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n: int = 5000
    d: int = 5
    group_values: tuple = (-1, 1)
    proportions: tuple = (0.4, 0.6)
    delta: float = 2.0
    logodds_shift: float = 0.5
    rho: float = 0.8
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_values", tuple(int(g) for g in self.group_values))
        object.__setattr__(self, "proportions", tuple(float(p) for p in self.proportions))
        if self.n < 1 or self.d < 1:
            raise InvalidConfig("n and d must be positive")
        if len(self.group_values) < 2 or len(set(self.group_values)) != len(self.group_values):
            raise InvalidConfig("need at least two distinct group values")
        if len(self.proportions) != len(self.group_values):
            raise InvalidConfig("one proportion per group value")
        if any(p < 0 for p in self.proportions) or abs(sum(self.proportions) - 1.0) > 1e-9:
            raise InvalidConfig("group proportions must be non-negative and sum to 1")
        if not self.noise > 0:
            raise InvalidConfig("noise scale must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidConfig("rho must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc) -> "SynthConfig":
        return cls(**_known_fields(cls, doc))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["group_values"] = list(self.group_values)
        doc["proportions"] = list(self.proportions)
        return doc


def synth_generate(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    basis, _ = np.linalg.qr(rng.standard_normal((cfg.d, min(cfg.d, 2))))
    w = basis[:, 0]
    w_v = basis[:, 1] if cfg.d > 1 else np.zeros(cfg.d)
    X = rng.standard_normal((cfg.n, cfg.d))
    s = rng.choice(np.asarray(cfg.group_values), size=cfg.n, p=np.asarray(cfg.proportions))
    u = X @ w + cfg.delta * s + cfg.noise * rng.standard_normal(cfg.n)
    v = X @ w_v + cfg.noise * rng.standard_normal(cfg.n)
    logit = cfg.rho * u + (1.0 - cfg.rho) * v + cfg.logodds_shift * s
    y2 = (rng.random(cfg.n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)
    return Dataset(
        X=X,
        s=s,
        y=np.column_stack([u, y2]),
        mask=np.ones((cfg.n, 2), dtype=bool),
    )


# -- config helpers ---------------------------------------------------------


def _known_fields(cls, doc) -> dict:
    names = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(doc) - names
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dict(doc)


def load_json_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path}: top-level JSON value must be an object")
    return doc
