"""Univariate empirical measures.

An :class:`EmpiricalDistribution` puts mass ``1/n`` on each stored value. Its CDF
is the right-continuous step function ``F(u) = #{x_i <= u} / n`` and its
quantile function is the left-continuous generalised inverse
``Q(v) = inf{u : F(u) >= v}``.

Both functions share one probability grid ``k / n`` (``k = 1..n``) so that
``Q(F(x))`` compares floats produced by the identical expression and never
suffers from rounding in ``ceil(v * n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySample, InvalidConfig, InvalidProbability, InvalidValue

__all__ = [
    "EmpiricalDistribution",
    "JitterConfig",
    "build_ecdf",
    "cdf_eval",
    "quantile_eval",
    "apply_jitter",
    "wasserstein2_univariate",
]

DEFAULT_JITTER = 1e-3


def _as_finite_array(values, *, what="values"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{what} must be finite")
    return arr


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted sample with ECDF and quantile queries.

    Build through :func:`build_ecdf` (or ``EmpiricalDistribution.from_values``);
    the constructor trusts that ``values`` is already sorted.
    """

    values: np.ndarray
    _grid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.size == 0:
            raise EmptySample("empirical distribution needs at least one value")
        vals = vals.copy()
        vals.flags.writeable = False
        grid = np.arange(1, vals.size + 1, dtype=np.float64) / vals.size
        grid.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_grid", grid)

    @classmethod
    def from_values(cls, values) -> "EmpiricalDistribution":
        arr = _as_finite_array(values)
        if arr.size == 0:
            raise EmptySample("empirical distribution needs at least one value")
        return cls(np.sort(arr, kind="stable"))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def grid(self) -> np.ndarray:
        """Probability levels ``k/n`` at which the ECDF jumps."""
        return self._grid

    def cdf(self, u):
        """``#{x_i <= u} / n``; accepts scalars or arrays."""
        counts = np.searchsorted(self.values, u, side="right")
        if np.ndim(counts) == 0:
            return 0.0 if counts == 0 else float(self._grid[counts - 1])
        counts = np.asarray(counts)
        out = np.zeros(counts.shape, dtype=np.float64)
        hit = counts > 0
        out[hit] = self._grid[counts[hit] - 1]
        return out

    def quantile(self, v):
        """Smallest stored value whose ECDF reaches ``v``; ``Q(0)`` is the minimum."""
        v_arr = np.asarray(v, dtype=np.float64)
        if np.any(~(v_arr >= 0.0) | ~(v_arr <= 1.0)):
            raise InvalidProbability("quantile level must lie in [0, 1]")
        idx = np.searchsorted(self._grid, v_arr, side="left")
        # v == 1 can exceed grid[-1] only through caller rounding; clip keeps Q(1) = max
        idx = np.minimum(idx, self.n - 1)
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def __len__(self):
        return self.n


def build_ecdf(values) -> EmpiricalDistribution:
    """Sort a finite, non-empty sample into an :class:`EmpiricalDistribution`."""
    return EmpiricalDistribution.from_values(values)


def cdf_eval(d: EmpiricalDistribution, u: float) -> float:
    if not np.isfinite(u):
        raise InvalidValue("cdf argument must be finite")
    return d.cdf(float(u))


def quantile_eval(d: EmpiricalDistribution, v: float) -> float:
    return d.quantile(float(v))


@dataclass(frozen=True)
class JitterConfig:
    """Uniform tie-breaking noise on ``(-half_width, half_width)``."""

    half_width: float = DEFAULT_JITTER
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.half_width) or self.half_width < 0:
            raise InvalidConfig(f"jitter half_width must be >= 0, got {self.half_width}")

    def draw(self, shape, rng: np.random.Generator) -> np.ndarray:
        if self.half_width == 0:
            return np.zeros(shape, dtype=np.float64)
        return rng.uniform(-self.half_width, self.half_width, size=shape)


def apply_jitter(values, cfg: JitterConfig) -> np.ndarray:
    """Add i.i.d. ``U(-u, u)`` noise drawn from ``cfg.seed``."""
    arr = _as_finite_array(values)
    rng = np.random.default_rng(cfg.seed)
    return arr + cfg.draw(arr.shape, rng)


def wasserstein2_univariate(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """Squared 2-Wasserstein distance between two empirical measures.

    Integrates ``(Q_a(v) - Q_b(v))**2`` over ``[0, 1]``. Both quantile functions
    are constant on the cells of the merged grid ``{i/n} U {j/m}``; the grid is
    handled in integer units of ``1/(n*m)`` so cell boundaries are exact.
    Equal sample sizes reduce to the mean squared gap between sorted samples.
    """
    if not isinstance(a, EmpiricalDistribution):
        a = build_ecdf(a)
    if not isinstance(b, EmpiricalDistribution):
        b = build_ecdf(b)
    n, m = a.n, b.n
    if n == m:
        diff = a.values - b.values
        return float(np.mean(diff * diff))
    # breakpoints i*m and j*n on the integer scale 0..n*m
    ticks = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m, np.arange(1, m + 1, dtype=np.int64) * n)
    widths = np.diff(np.concatenate(([0], ticks)))
    # left-continuous quantile at the right end of each cell: index ceil(tick/m) - 1
    ia = -(-ticks // m) - 1
    ib = -(-ticks // n) - 1
    diff = a.values[ia] - b.values[ib]
    return float(np.dot(widths, diff * diff) / (n * m))
