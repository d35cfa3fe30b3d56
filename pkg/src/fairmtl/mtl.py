"""Shared-trunk multi-task network with FiLM conditioning on task weights.

The trunk ``h`` maps ``[x, onehot(s)]`` through fully connected layers to a
representation of width ``repr_dim``. Each trunk layer computes

    z = a_prev @ W + b
    a = act(gamma * z + beta)

where ``gamma`` and ``beta`` are affine functions of the centred log task
weights ``log(lambda) - log(film_center)``. Task heads are linear (regression)
or sigmoid (score) read-outs of the representation. Training follows the
"train once" recipe: every mini-batch draws ``lambda_t ~ U(b_l, b_u)``, feeds it
to the FiLM generators and weights the per-task losses with it, so a single fit
serves every trade-off in the sampling range.

Gradients are derived by hand; :func:`numerical_gradient` is the finite
difference cross-check used by the tests.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidConfig, NoLabels, NumericalError, ShapeError, UnknownGroup
from .fairtransform import TaskKind

__all__ = [
    "NetworkConfig",
    "YotoConfig",
    "MtlNetwork",
    "init_network",
    "forward",
    "loss",
    "backward",
    "train",
    "calibrate_lambda",
    "lambda_grid_errors",
    "task_weights",
    "numerical_gradient",
]

FORMAT_VERSION = 1
_ACTIVATIONS = ("tanh", "relu")


def task_weights(lam, n_tasks: int) -> np.ndarray:
    """Validate a trade-off vector: one strictly positive weight per task."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if lam.shape != (n_tasks,):
        raise ShapeError(f"expected {n_tasks} task weights, got shape {lam.shape}")
    if not np.all(np.isfinite(lam) & (lam > 0)):
        raise InvalidConfig(f"task weights must be finite and > 0, got {lam.tolist()}")
    return lam


@dataclass(frozen=True)
class NetworkConfig:
    n_features: int
    groups: tuple = (-1, 1)
    hidden: tuple = (32,)
    repr_dim: int = 16
    tasks: tuple = ("regression", "score")
    activation: str = "tanh"
    film_center: float = 1.0
    score_loss: str = "squared"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "tasks", tuple(TaskKind.parse(k).value for k in self.tasks))
        if self.n_features < 0 or self.input_dim < 1:
            raise InvalidConfig("network needs at least one input")
        if any(h < 1 for h in self.hidden) or self.repr_dim < 1:
            raise InvalidConfig("layer sizes must be >= 1")
        if not self.tasks:
            raise InvalidConfig("at least one task head is required")
        if len(set(self.groups)) != len(self.groups):
            raise InvalidConfig("group values must be distinct")
        if self.activation not in _ACTIVATIONS:
            raise InvalidConfig(f"activation must be one of {_ACTIVATIONS}")
        if self.score_loss not in ("squared", "cross_entropy"):
            raise InvalidConfig("score_loss must be 'squared' or 'cross_entropy'")
        if not self.film_center > 0:
            raise InvalidConfig("film_center must be positive")

    @property
    def input_dim(self) -> int:
        return self.n_features + len(self.groups)

    @property
    def layer_sizes(self) -> tuple:
        return (self.input_dim, *self.hidden, self.repr_dim)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @classmethod
    def from_dict(cls, doc) -> "NetworkConfig":
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("groups", "hidden", "tasks"):
            doc[key] = list(doc[key])
        return doc


@dataclass(frozen=True)
class YotoConfig:
    lower: float = 0.2
    upper: float = 1.8
    batch_size: int = 64
    epochs: int = 60
    learning_rate: float = 0.02
    grid_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.lower < self.upper:
            raise InvalidConfig("lambda bounds must satisfy 0 < lower < upper")
        if self.batch_size < 1 or self.epochs < 0 or self.grid_size < 1:
            raise InvalidConfig("batch_size and grid_size must be >= 1, epochs >= 0")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def grid(self, n_tasks: int) -> list:
        """Validation grid: every combination of ``grid_size`` levels per task."""
        levels = np.linspace(self.lower, self.upper, self.grid_size)
        mesh = np.meshgrid(*([levels] * n_tasks), indexing="ij")
        return [np.array(p) for p in zip(*(m.ravel() for m in mesh))]

    @classmethod
    def from_dict(cls, doc) -> "YotoConfig":
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _act(name, x):
    return np.tanh(x) if name == "tanh" else np.maximum(x, 0.0)


def _act_grad(name, pre, post):
    return 1.0 - post * post if name == "tanh" else (pre > 0).astype(np.float64)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class MtlNetwork:
    config: NetworkConfig
    params: dict
    # fixed preprocessing, set from the training data; not trained
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    output_shift: np.ndarray = None
    output_scale: np.ndarray = None
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cfg = self.config
        if self.input_shift is None:
            self.input_shift = np.zeros(cfg.n_features)
        if self.input_scale is None:
            self.input_scale = np.ones(cfg.n_features)
        if self.output_shift is None:
            self.output_shift = np.zeros(cfg.n_tasks)
        if self.output_scale is None:
            self.output_scale = np.ones(cfg.n_tasks)

    # -- parameters ---------------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self.config.layer_sizes) - 1

    def copy(self) -> "MtlNetwork":
        return MtlNetwork(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            self.input_shift.copy(),
            self.input_scale.copy(),
            self.output_shift.copy(),
            self.output_scale.copy(),
            list(self.history),
            dict(self.meta),
        )

    def film(self, lam) -> list:
        """Per-layer ``(gamma, beta)`` for task weights ``lam``."""
        code = np.log(task_weights(lam, self.config.n_tasks)) - np.log(self.config.film_center)
        p = self.params
        return [
            (code @ p[f"layer{l}.gamma_w"] + p[f"layer{l}.gamma_b"], code @ p[f"layer{l}.beta_w"] + p[f"layer{l}.beta_b"])
            for l in range(self.n_layers)
        ]

    # -- forward ------------------------------------------------------------

    def encode(self, X, s) -> np.ndarray:
        cfg = self.config
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :] if cfg.n_features and X.size == cfg.n_features else X[:, None]
        s = np.atleast_1d(np.asarray(s)).astype(np.int64)
        if X.shape != (s.size, cfg.n_features):
            raise ShapeError(f"expected features of shape ({s.size}, {cfg.n_features}), got {X.shape}")
        lookup = {g: k for k, g in enumerate(cfg.groups)}
        try:
            cols = np.array([lookup[int(g)] for g in s], dtype=np.int64)
        except KeyError as exc:
            raise UnknownGroup(f"group {exc.args[0]} not in network groups {cfg.groups}") from None
        onehot = np.zeros((s.size, len(cfg.groups)))
        onehot[np.arange(s.size), cols] = 1.0
        return np.hstack([(X - self.input_shift) / self.input_scale, onehot])

    def _forward(self, inputs, lam):
        cfg = self.config
        cache = {"a": [inputs], "z": [], "pre": []}
        a = inputs
        for l, (gamma, beta) in enumerate(self.film(lam)):
            z = a @ self.params[f"layer{l}.W"] + self.params[f"layer{l}.b"]
            pre = gamma * z + beta
            a = _act(cfg.activation, pre)
            cache["z"].append(z)
            cache["pre"].append(pre)
            cache["a"].append(a)
        logits = np.column_stack(
            [a @ self.params[f"head{t}.w"] + self.params[f"head{t}.b"] for t in range(cfg.n_tasks)]
        )
        out = np.empty_like(logits)
        for t, kind in enumerate(cfg.tasks):
            if kind == "score":
                out[:, t] = _sigmoid(logits[:, t])
            else:
                out[:, t] = logits[:, t] * self.output_scale[t] + self.output_shift[t]
        cache["logits"] = logits
        return out, cache

    def predict(self, X, s, lam=None) -> np.ndarray:
        """Per-task predictions, shape ``(n, n_tasks)``; ``lam=None`` uses the FiLM centre."""
        if lam is None:
            lam = np.full(self.config.n_tasks, self.config.film_center)
        out, _ = self._forward(self.encode(X, s), lam)
        return out

    # -- loss and gradient --------------------------------------------------

    def _loss_scale(self) -> np.ndarray:
        return np.where(np.asarray(self.config.tasks) == "regression", self.output_scale, 1.0)

    def loss_and_grad(self, X, s, y, mask, lam) -> tuple:
        cfg = self.config
        lam = task_weights(lam, cfg.n_tasks)
        y = np.asarray(y, dtype=np.float64).reshape(-1, cfg.n_tasks)
        mask = np.asarray(mask, dtype=bool).reshape(-1, cfg.n_tasks)
        keep = mask.any(axis=1)
        if not keep.any():
            raise NoLabels("every label in the batch is masked")
        # unlabeled rows carry no signal; dropping them keeps sums identical to a batch without them
        X = np.asarray(X)[keep]
        s = np.atleast_1d(np.asarray(s))[keep]
        y, mask = y[keep], mask[keep]
        out, cache = self._forward(self.encode(X, s), lam)
        value = _weighted_loss(out, y, mask, lam, cfg.tasks, cfg.score_loss, self._loss_scale())
        if not np.isfinite(value):
            raise NumericalError("non-finite loss")
        d_logits = np.zeros_like(out)
        for t, kind in enumerate(cfg.tasks):
            m = mask[:, t]
            count = m.sum()
            if count == 0:
                continue
            resid = np.where(m, out[:, t] - y[:, t], 0.0)
            if kind == "score":
                if cfg.score_loss == "cross_entropy":
                    d_logits[:, t] = lam[t] * resid / count
                else:
                    d_logits[:, t] = 2.0 * lam[t] * resid * out[:, t] * (1.0 - out[:, t]) / count
            else:
                # loss is taken in standardized units: residual / output_scale
                d_logits[:, t] = 2.0 * lam[t] * resid / self.output_scale[t] / count
        return value, self._backward(cache, d_logits, lam)

    def _backward(self, cache, d_logits, lam) -> dict:
        cfg = self.config
        p = self.params
        grads = {}
        a_top = cache["a"][-1]
        da = np.zeros_like(a_top)
        for t in range(cfg.n_tasks):
            grads[f"head{t}.w"] = a_top.T @ d_logits[:, t]
            grads[f"head{t}.b"] = np.array([d_logits[:, t].sum()])
            da += np.outer(d_logits[:, t], p[f"head{t}.w"])
        code = np.log(lam) - np.log(cfg.film_center)
        films = self.film(lam)
        for l in reversed(range(self.n_layers)):
            gamma, _ = films[l]
            d_pre = da * _act_grad(cfg.activation, cache["pre"][l], cache["a"][l + 1])
            d_gamma = (d_pre * cache["z"][l]).sum(axis=0)
            d_beta = d_pre.sum(axis=0)
            grads[f"layer{l}.gamma_w"] = np.outer(code, d_gamma)
            grads[f"layer{l}.gamma_b"] = d_gamma
            grads[f"layer{l}.beta_w"] = np.outer(code, d_beta)
            grads[f"layer{l}.beta_b"] = d_beta
            dz = d_pre * gamma
            grads[f"layer{l}.W"] = cache["a"][l].T @ dz
            grads[f"layer{l}.b"] = dz.sum(axis=0)
            if l:
                da = dz @ p[f"layer{l}.W"].T
        return {k: grads[k] for k in p}

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
            "buffers": {
                "input_shift": self.input_shift.tolist(),
                "input_scale": self.input_scale.tolist(),
                "output_shift": self.output_shift.tolist(),
                "output_scale": self.output_scale.tolist(),
            },
            "history": list(self.history),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc) -> "MtlNetwork":
        if doc.get("version") != FORMAT_VERSION:
            raise InvalidConfig(f"unsupported network format version {doc.get('version')!r}")
        params = {k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
        buffers = {k: np.asarray(v, dtype=np.float64) for k, v in doc["buffers"].items()}
        return cls(NetworkConfig.from_dict(doc["config"]), params, history=list(doc.get("history", [])),
                   meta=dict(doc.get("meta", {})), **buffers)

    @classmethod
    def from_json(cls, text: str) -> "MtlNetwork":
        return cls.from_dict(json.loads(text))


def _weighted_loss(out, y, mask, lam, kinds, score_loss, scale=None) -> float:
    total = 0.0
    for t, kind in enumerate(kinds):
        m = mask[:, t]
        if not m.any():
            continue
        pred, target = out[m, t], y[m, t]
        if kind == "score" and score_loss == "cross_entropy":
            pred = np.clip(pred, 1e-12, 1 - 1e-12)
            term = -np.mean(target * np.log(pred) + (1 - target) * np.log1p(-pred))
        else:
            resid = pred - target if scale is None else (pred - target) / scale[t]
            term = np.mean(resid * resid)
        total += lam[t] * term
    return float(total)


def init_network(cfg: NetworkConfig) -> MtlNetwork:
    """Glorot-uniform weights, zero biases, FiLM generators at ``gamma=1, beta=0``."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    sizes = cfg.layer_sizes
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"layer{l}.W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"layer{l}.b"] = np.zeros(fan_out)
        params[f"layer{l}.gamma_w"] = np.zeros((cfg.n_tasks, fan_out))
        params[f"layer{l}.gamma_b"] = np.ones(fan_out)
        params[f"layer{l}.beta_w"] = np.zeros((cfg.n_tasks, fan_out))
        params[f"layer{l}.beta_b"] = np.zeros(fan_out)
    limit = np.sqrt(6.0 / (cfg.repr_dim + 1))
    for t in range(cfg.n_tasks):
        params[f"head{t}.w"] = rng.uniform(-limit, limit, size=cfg.repr_dim)
        params[f"head{t}.b"] = np.zeros(1)
    return MtlNetwork(cfg, params)


def forward(net: MtlNetwork, x, s, lam) -> np.ndarray:
    return net.predict(x, s, lam)


def loss(predictions, labels, mask, lam, kinds=("regression", "score"), score_loss="squared") -> float:
    """``sum_t lam_t * mean_{unmasked} L_t``; a task without labels adds nothing."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    labels = np.asarray(labels, dtype=np.float64).reshape(predictions.shape)
    mask = np.asarray(mask, dtype=bool).reshape(predictions.shape)
    if not mask.any():
        raise NoLabels("every label is masked")
    lam = task_weights(lam, predictions.shape[1])
    return _weighted_loss(predictions, labels, mask, lam, tuple(kinds), score_loss)


def backward(net: MtlNetwork, X, s, y, mask, lam) -> dict:
    """Analytic gradient of the weighted loss with respect to every parameter."""
    return net.loss_and_grad(X, s, y, mask, lam)[1]


def numerical_gradient(f: Callable[[], float], params: dict, h: float = 1e-5) -> dict:
    """Central differences of ``f`` with respect to each entry of ``params`` (perturbed in place)."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def _fit_buffers(net: MtlNetwork, dataset) -> None:
    X = dataset.X
    net.input_shift = X.mean(axis=0)
    scale = X.std(axis=0)
    net.input_scale = np.where(scale > 0, scale, 1.0)
    for t, kind in enumerate(net.config.tasks):
        if kind != "regression":
            continue
        present = dataset.y[dataset.mask[:, t], t]
        if present.size:
            net.output_shift[t] = present.mean()
            sd = present.std()
            net.output_scale[t] = sd if sd > 0 else 1.0


def train(net: MtlNetwork, dataset, yoto: YotoConfig, *, standardize: bool = True) -> MtlNetwork:
    """Mini-batch gradient descent with one ``lambda ~ U(lower, upper)^T`` draw per batch.

    Returns a trained copy; ``history`` holds the mean batch loss of each epoch.
    With ``standardize`` the input and regression-output scaling constants are
    taken from ``dataset`` before the first step.
    """
    cfg = net.config
    if dataset.n_tasks != cfg.n_tasks or dataset.n_features != cfg.n_features:
        raise ShapeError("dataset does not match the network's feature and task counts")
    if not dataset.mask.any(axis=0).all():
        raise NoLabels("every task needs at least one labeled training sample")
    net = net.copy()
    net.history = []
    if yoto.epochs == 0:
        return net
    if standardize:
        _fit_buffers(net, dataset)
    shuffle_rng = np.random.default_rng([yoto.seed, 0])
    lambda_rng = np.random.default_rng([yoto.seed, 1])
    X, s, y, mask = dataset.X, dataset.s, dataset.y, dataset.mask
    # overflow is reported below as NumericalError, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(net, X, s, y, mask, yoto, shuffle_rng, lambda_rng)
    return net


def _run_epochs(net, X, s, y, mask, yoto, shuffle_rng, lambda_rng) -> None:
    n, n_tasks = len(X), net.config.n_tasks
    for epoch in range(yoto.epochs):
        order = shuffle_rng.permutation(n)
        batch_losses = []
        for start in range(0, n, yoto.batch_size):
            rows = np.sort(order[start:start + yoto.batch_size])
            lam = lambda_rng.uniform(yoto.lower, yoto.upper, size=n_tasks)
            if not mask[rows].any():
                continue
            try:
                value, grads = net.loss_and_grad(X[rows], s[rows], y[rows], mask[rows], lam)
            except NumericalError:
                raise NumericalError(f"training diverged in epoch {epoch}") from None
            for k, g in grads.items():
                net.params[k] -= yoto.learning_rate * g
            batch_losses.append(value)
        epoch_loss = float(np.mean(batch_losses))
        if not np.isfinite(epoch_loss) or not all(np.all(np.isfinite(v)) for v in net.params.values()):
            raise NumericalError(f"training diverged in epoch {epoch}")
        net.history.append(epoch_loss)


def lambda_grid_errors(net: MtlNetwork, validation, grid: Sequence) -> np.ndarray:
    """Validation error per (grid point, task): MSE for regression, ``1 - AUC`` for scores."""
    from .metrics import auc, mse

    errors = np.zeros((len(grid), net.config.n_tasks))
    for i, lam in enumerate(grid):
        pred = net.predict(validation.X, validation.s, lam)
        for t, kind in enumerate(net.config.tasks):
            m = validation.mask[:, t]
            if not m.any():
                errors[i, t] = np.nan
            elif kind == "regression":
                errors[i, t] = mse(pred[m, t], validation.y[m, t])
            else:
                errors[i, t] = 1.0 - auc(pred[m, t], validation.y[m, t].astype(np.int64))
    return errors


def calibrate_lambda(net, validation, grid: Sequence, objective: str = "regression", bounds=None) -> np.ndarray:
    """Pick the grid point with the lowest validation error.

    ``objective="regression"`` minimises the first regression task's MSE.
    ``objective="both"`` min-max normalises each task's error across the grid
    and minimises their mean. Ties go to the earliest grid point. ``bounds``,
    if given, rejects grid points outside the training range.
    """
    if len(grid) == 0:
        raise InvalidConfig("validation grid is empty")
    n_tasks = net.config.n_tasks
    grid = [task_weights(lam, n_tasks) for lam in grid]
    if bounds is not None:
        lo, hi = bounds
        for lam in grid:
            if np.any(lam < lo) or np.any(lam > hi):
                raise InvalidConfig(f"grid point {lam.tolist()} lies outside the sampled range [{lo}, {hi}]")
    errors = lambda_grid_errors(net, validation, grid)
    if objective == "regression":
        reg = [t for t, k in enumerate(net.config.tasks) if k == "regression"]
        if not reg:
            raise InvalidConfig("regression objective needs a regression task")
        score = errors[:, reg[0]]
    elif objective == "both":
        span = np.nanmax(errors, axis=0) - np.nanmin(errors, axis=0)
        normed = (errors - np.nanmin(errors, axis=0)) / np.where(span > 0, span, 1.0)
        score = np.nanmean(normed, axis=1)
    else:
        raise InvalidConfig(f"unknown calibration objective {objective!r}")
    if np.all(np.isnan(score)):
        raise NoLabels("validation set has no labels for the calibration objective")
    return grid[int(np.nanargmin(score))]
