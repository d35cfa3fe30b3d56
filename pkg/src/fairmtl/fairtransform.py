"""Plug-in Wasserstein-barycenter post-processing.

For every task ``t`` and group ``s`` the calibrator stores the empirical law of
the jittered base predictions on an unlabeled pool. A new prediction ``g`` for
a member of group ``s`` is sent to

    sum_{s'} pi_{s'} * Q_{t|s'}( F_{t|s}(g + zeta) )

i.e. its within-group rank is read off and replaced by the weighted average of
all groups' quantiles at that rank. Every group is thereby pushed onto the
common barycenter of the group-conditional laws, while the order of
predictions inside a group is preserved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .distrib import EmpiricalDistribution, JitterConfig
from .errors import (
    InsufficientGroupData,
    InvalidConfig,
    InvalidThreshold,
    InvalidValue,
    NotFitted,
    ShapeError,
    UnknownGroup,
)

__all__ = [
    "TaskKind",
    "Predictions",
    "FairCalibrator",
    "fit_calibrator",
    "transform",
    "transform_batch",
    "classify",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
MIN_GROUP_SIZE = 2


class TaskKind(str, Enum):
    REGRESSION = "regression"
    SCORE = "score"

    @classmethod
    def parse(cls, value) -> "TaskKind":
        if isinstance(value, TaskKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidConfig(f"unknown task kind {value!r}; expected 'regression' or 'score'") from None


@dataclass(frozen=True)
class Predictions:
    """Per-sample predictions, one column per task, plus the group label."""

    values: np.ndarray  # (n, n_tasks)
    groups: np.ndarray  # (n,)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        groups = np.asarray(self.groups).astype(np.int64, copy=False)
        if values.ndim != 2 or groups.ndim != 1 or values.shape[0] != groups.shape[0]:
            raise ShapeError(f"predictions {values.shape} do not align with groups {groups.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.values.shape[1]


class FairCalibrator:
    """Per-(task, group) ECDFs plus group frequencies fitted on a pool split.

    Parameters
    ----------
    task_kinds : sequence of TaskKind or str
        One entry per prediction column. ``score`` outputs are clamped to
        ``[0, 1]`` after the barycentric map.
    jitter : JitterConfig
        Half-width of the tie-breaking noise and the seed of the fit-time
        stream. Transform-time noise comes from the seed passed to
        :meth:`transform_batch`.
    """

    def __init__(self, task_kinds: Sequence, jitter: JitterConfig | None = None):
        if len(task_kinds) == 0:
            raise InvalidConfig("at least one task is required")
        self.task_kinds = tuple(TaskKind.parse(k) for k in task_kinds)
        self.jitter = jitter if jitter is not None else JitterConfig()
        self.group_weights_: dict[int, float] | None = None
        self.distributions_: dict[tuple[int, int], EmpiricalDistribution] | None = None

    # -- construction -------------------------------------------------------

    def fit(self, pool: Predictions, *, min_groups: int = 2) -> "FairCalibrator":
        if pool.n_tasks != len(self.task_kinds):
            raise ShapeError(f"pool has {pool.n_tasks} task columns, calibrator expects {len(self.task_kinds)}")
        if not np.all(np.isfinite(pool.values)):
            raise InvalidValue("pool predictions must be finite")
        labels, counts = np.unique(pool.groups, return_counts=True)
        if labels.size < min_groups:
            raise InsufficientGroupData(f"pool contains {labels.size} group(s); at least {min_groups} required")
        small = labels[counts < MIN_GROUP_SIZE]
        if small.size:
            raise InsufficientGroupData(f"groups {small.tolist()} have fewer than {MIN_GROUP_SIZE} pool samples")

        rng = np.random.default_rng([self.jitter.seed, 0])
        jittered = pool.values + self.jitter.draw(pool.values.shape, rng)
        total = counts.sum()
        self.group_weights_ = {int(s): float(c / total) for s, c in zip(labels, counts)}
        self.distributions_ = {}
        for s in labels:
            rows = jittered[pool.groups == s]
            for t in range(len(self.task_kinds)):
                self.distributions_[(t, int(s))] = EmpiricalDistribution.from_values(rows[:, t])
        return self

    @classmethod
    def from_distributions(
        cls,
        task_kinds: Sequence,
        group_weights: Mapping[int, float],
        distributions: Mapping[tuple[int, int], EmpiricalDistribution],
        jitter: JitterConfig | None = None,
    ) -> "FairCalibrator":
        """Assemble a calibrator from explicit parts (no minimum-group checks)."""
        cal = cls(task_kinds, jitter)
        weights = {int(s): float(w) for s, w in group_weights.items()}
        if any(w <= 0 for w in weights.values()) or abs(sum(weights.values()) - 1.0) > 1e-12:
            raise InvalidConfig("group weights must be positive and sum to 1")
        for t in range(len(cal.task_kinds)):
            for s in weights:
                if (t, s) not in distributions:
                    raise InvalidConfig(f"missing distribution for task {t}, group {s}")
        cal.group_weights_ = weights
        cal.distributions_ = {(int(t), int(s)): d for (t, s), d in distributions.items()}
        return cal

    # -- queries ------------------------------------------------------------

    def _check_fitted(self):
        if self.distributions_ is None:
            raise NotFitted("calibrator has not been fitted")

    @property
    def groups(self) -> tuple[int, ...]:
        self._check_fitted()
        return tuple(sorted(self.group_weights_))

    @property
    def n_tasks(self) -> int:
        return len(self.task_kinds)

    def distribution(self, task: int, group: int) -> EmpiricalDistribution:
        self._check_fitted()
        try:
            return self.distributions_[(task, int(group))]
        except KeyError:
            if not 0 <= task < self.n_tasks:
                raise IndexError(f"task index {task} out of range") from None
            raise UnknownGroup(f"group {group} was not present in the calibration pool") from None

    def barycenter_quantile(self, task: int, v) -> np.ndarray | float:
        """``sum_s pi_s Q_{t|s}(v)``: the quantile function of the fair target law."""
        self._check_fitted()
        groups = self.groups
        anchor = self.distributions_[(task, groups[0])].quantile(v)
        # offsets from one group's quantile: identical groups give the anchor back exactly
        offset = 0.0
        for s in groups[1:]:
            offset = offset + self.group_weights_[s] * (self.distributions_[(task, s)].quantile(v) - anchor)
        return anchor + offset

    def map_values(self, task: int, group: int, values) -> np.ndarray:
        """Barycentric map for already-jittered inputs from one group."""
        source = self.distribution(task, group)
        ranks = source.cdf(np.asarray(values, dtype=np.float64))
        out = np.asarray(self.barycenter_quantile(task, ranks), dtype=np.float64)
        if self.task_kinds[task] is TaskKind.SCORE:
            out = np.clip(out, 0.0, 1.0)
        return out

    def transform(self, task: int, value: float, group: int, zeta: float = 0.0) -> float:
        if not np.isfinite(value):
            raise InvalidValue("prediction must be finite")
        return float(self.map_values(task, group, float(value) + float(zeta)))

    def transform_batch(self, preds: Predictions, seed: int = 0) -> Predictions:
        """Map every (sample, task) entry with fresh i.i.d. jitter drawn from ``seed``."""
        self._check_fitted()
        if len(preds) == 0:
            return Predictions(np.empty((0, self.n_tasks)), np.empty(0, dtype=np.int64))
        if preds.n_tasks != self.n_tasks:
            raise ShapeError(f"got {preds.n_tasks} task columns, calibrator expects {self.n_tasks}")
        if not np.all(np.isfinite(preds.values)):
            raise InvalidValue("predictions must be finite")
        unknown = set(np.unique(preds.groups).tolist()) - set(self.groups)
        if unknown:
            raise UnknownGroup(f"groups {sorted(unknown)} were not present in the calibration pool")
        rng = np.random.default_rng([seed, 1])
        jittered = preds.values + self.jitter.draw(preds.values.shape, rng)
        out = np.empty_like(jittered)
        for s in self.groups:
            rows = preds.groups == s
            if not rows.any():
                continue
            for t in range(self.n_tasks):
                out[rows, t] = self.map_values(t, s, jittered[rows, t])
        return Predictions(out, preds.groups.copy())

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "version": FORMAT_VERSION,
            "task_kinds": [k.value for k in self.task_kinds],
            "group_weights": [[s, self.group_weights_[s]] for s in self.groups],
            "distributions": [
                [[s, self.distributions_[(t, s)].values.tolist()] for s in self.groups] for t in range(self.n_tasks)
            ],
            "jitter": {"half_width": self.jitter.half_width, "seed": self.jitter.seed},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FairCalibrator":
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidConfig(f"unsupported calibrator format version {doc.get('version')!r}")
        jitter = JitterConfig(**doc["jitter"])
        weights = {int(s): float(w) for s, w in doc["group_weights"]}
        dists = {}
        for t, per_group in enumerate(doc["distributions"]):
            for s, vals in per_group:
                dists[(t, int(s))] = EmpiricalDistribution(np.asarray(vals, dtype=np.float64))
        return cls.from_distributions(doc["task_kinds"], weights, dists, jitter)

    @classmethod
    def from_json(cls, text: str) -> "FairCalibrator":
        return cls.from_dict(json.loads(text))


def fit_calibrator(pool: Predictions, task_kinds: Sequence, jitter: JitterConfig | None = None) -> FairCalibrator:
    """Fit a :class:`FairCalibrator` on pool predictions of the base model."""
    return FairCalibrator(task_kinds, jitter).fit(pool)


def transform(cal: FairCalibrator, task: int, value: float, s: int, zeta: float = 0.0) -> float:
    return cal.transform(task, value, s, zeta)


def transform_batch(cal: FairCalibrator, preds: Predictions, seed: int = 0) -> Predictions:
    return cal.transform_batch(preds, seed)


def classify(score, tau: float = 0.5):
    """Threshold a score: ``1{score >= tau}``."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidThreshold(f"threshold must lie in [0, 1], got {tau}")
    score = np.asarray(score, dtype=np.float64)
    out = (score >= tau).astype(np.int64)
    return int(out) if out.ndim == 0 else out
