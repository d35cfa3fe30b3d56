import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairmtl.errors import DegenerateLabels, EmptyInput, InsufficientGroups, ShapeError
from fairmtl.metrics import auc, ks_two_sample, ks_unfairness, misclassification, mse, task_report

from oracles import auc_pairs, ks_double_loop


def test_ks_interleaved():
    assert ks_unfairness([0, 2, 1, 3], ["A", "A", "B", "B"]) == 0.5


def test_ks_disjoint():
    assert ks_two_sample([0, 1], [5, 6]) == 1.0


def test_ks_identical():
    assert ks_two_sample([1, 2, 2], [2, 1, 2]) == 0.0


def test_ks_needs_two_groups():
    with pytest.raises(InsufficientGroups):
        ks_unfairness([1, 2], [0, 0])


def test_ks_three_groups_takes_worst_pair():
    values = [0, 0, 1, 1, 10, 10]
    groups = [0, 0, 1, 1, 2, 2]
    assert ks_unfairness(values, groups) == 1.0


@given(
    st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 2)), min_size=2, max_size=30).filter(
        lambda rows: len({g for _, g in rows}) >= 2
    )
)
def test_ks_matches_double_loop(rows):
    values = [v for v, _ in rows]
    groups = [g for _, g in rows]
    assert ks_unfairness(values, groups) == pytest.approx(ks_double_loop(values, groups), abs=1e-12)


def test_mse_examples():
    assert mse([0, 0], [1, 3]) == 5.0
    assert mse([2, 2, 2, 2], [1, 3, 1, 3]) == 1.0


def test_mse_errors():
    with pytest.raises(ShapeError):
        mse([1, 2], [1])
    with pytest.raises(EmptyInput):
        mse([], [])


def test_auc_example():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auc_all_tied():
    assert auc([0.3] * 4, [0, 1, 0, 1]) == 0.5


def test_auc_single_class():
    with pytest.raises(DegenerateLabels):
        auc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=40).filter(
    lambda rows: {l for _, l in rows} == {0, 1}
))
def test_auc_matches_pair_count(rows):
    scores = [s / 6 for s, _ in rows]
    labels = [l for _, l in rows]
    assert auc(scores, labels) == auc_pairs(scores, labels)


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 1)), min_size=2, max_size=40).filter(
    lambda rows: {l for _, l in rows} == {0, 1}
))
def test_auc_rank_invariant(rows):
    scores = np.array([s for s, _ in rows], dtype=float)
    labels = [l for _, l in rows]
    assert auc(scores / 20, labels) == auc(np.exp(scores) + 3, labels)


def test_misclassification():
    assert misclassification([0.6, 0.4], [0, 1]) == 1.0
    assert misclassification([0.5, 0.49], [1, 0]) == 0.0


def test_task_report():
    rep = task_report("score", [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], [0, 1, 0, 1])
    assert rep == {"performance": 0.75, "unfairness": 1.0}
    rep = task_report("regression", [1.0, np.e], [np.e, np.e], [0, 1], log_predictions=True)
    assert rep["performance"] == pytest.approx(0.5)
    assert rep["unfairness"] == 1.0
