import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdaudit.errors import UnbalancedPanelError, ValidationError
from fdaudit.panel import (
    PanelDataset,
    assign_folds,
    first_differences,
    load_panel,
    panel_from_frame,
    rebuild_levels,
)

from conftest import make_panel


def small_frame():
    return pd.DataFrame({
        "cz": [2, 2, 1, 1, 3, 3],
        "yr": [2007, 1999, 1999, 2007, 1999, 2007],
        "emp": [5.0, 4.0, 1.0, 3.0, 2.0, 2.5],
        "imp": [0.5, 0.1, 0.2, 0.6, 0.0, 0.3],
    })


def test_sorted_by_unit_then_period():
    p = panel_from_frame(small_frame(), {"unit": "cz", "period": "yr", "y": "emp", "d": "imp"})
    assert list(p.unit) == [1, 1, 2, 2, 3, 3]
    assert list(p.period) == [1999, 2007] * 3
    np.testing.assert_array_equal(p.wide("y"), [[1.0, 3.0], [4.0, 5.0], [2.0, 2.5]])
    assert p.summary() == {"n_units": 3, "n_periods": 2, "n_clusters": 3, "periods": [1999, 2007],
                           "has_instrument": False}


def test_arrays_are_read_only():
    p = make_panel(np.ones((3, 2)), np.arange(6.0).reshape(3, 2))
    with pytest.raises(ValueError):
        p.y[0] = 1.0


def test_unbalanced_reports_units():
    f = small_frame().iloc[:-1]
    with pytest.raises(UnbalancedPanelError) as exc:
        panel_from_frame(f, {"unit": "cz", "period": "yr", "y": "emp", "d": "imp"})
    assert 3 in list(exc.value.units)


@pytest.mark.parametrize("mutate, message", [
    (lambda f: f.assign(emp=f.emp.where(f.index != 0)), "missing"),
    (lambda f: f.assign(yr=f.yr + 0.5), "integer"),
    (lambda f: pd.concat([f, f.iloc[[0]]]), "duplicate"),
    (lambda f: f.assign(cz=f.cz.where(f.index != 0)), "missing"),
])
def test_invalid_cells(mutate, message):
    with pytest.raises(ValidationError, match=message):
        panel_from_frame(mutate(small_frame()), {"unit": "cz", "period": "yr", "y": "emp", "d": "imp"})


def test_weights_must_be_positive_and_unit_constant():
    f = small_frame()
    cmap = {"unit": "cz", "period": "yr", "y": "emp", "d": "imp", "weight": "w"}
    with pytest.raises(ValidationError, match="positive"):
        panel_from_frame(f.assign(w=[1, 1, 0, 0, 1, 1]), cmap)
    with pytest.raises(ValidationError, match="constant"):
        panel_from_frame(f.assign(w=[1, 2, 1, 1, 1, 1]), cmap)


def test_single_period_rejected():
    with pytest.raises(ValidationError, match="two distinct periods"):
        make_panel(np.ones((3, 1)), np.ones((3, 1)))


def test_load_detects_tab_and_comma():
    f = small_frame()
    cmap = {"unit": "cz", "period": "yr", "y": "emp", "d": "imp"}
    a = load_panel(io.StringIO(f.to_csv(index=False)), cmap)
    b = load_panel(io.StringIO(f.to_csv(index=False, sep="\t")), cmap)
    np.testing.assert_array_equal(a.y, b.y)


def test_unknown_mapped_column():
    with pytest.raises(ValidationError, match="not found"):
        panel_from_frame(small_frame(), {"unit": "cz", "period": "yr", "y": "nope", "d": "imp"})


def test_wide_format():
    wide = pd.DataFrame({"id": [1, 2], "y_1": [1.0, 2.0], "y_2": [3.0, 5.0], "d_1": [0.0, 1.0], "d_2": [1.0, 1.0]})
    p = panel_from_frame(wide, {"unit": "id", "format": "wide"})
    np.testing.assert_array_equal(p.wide("y"), [[1, 3], [2, 5]])
    np.testing.assert_array_equal(p.periods, [1, 2])


def test_first_differences_columns():
    Y = np.array([[1.0, 2.0, 4.0], [0.0, -1.0, 1.0]])
    D = np.array([[0.0, 1.0, 3.0], [2.0, 2.0, 5.0]])
    fd = first_differences(make_panel(Y, D, periods=[1991, 1999, 2007]))
    assert list(fd.pairs) == [(1991, 1999), (1999, 2007)]
    last = fd.for_pair((1999, 2007))
    np.testing.assert_array_equal(last.dy, [2.0, 2.0])
    np.testing.assert_array_equal(last.dd, [2.0, 3.0])
    np.testing.assert_array_equal(last.d_lag, [1.0, 2.0])
    np.testing.assert_array_equal(last.d_lag2, [0.0, 2.0])
    np.testing.assert_array_equal(last.dy_lag, [1.0, -1.0])
    np.testing.assert_array_equal(last.dd_lag, [1.0, 0.0])
    first = fd.at(0)
    assert np.all(np.isnan(first.dy_lag))
    # end-period label and position resolve to the same pair
    np.testing.assert_array_equal(fd.for_pair(2007).dy, fd.at(1).dy)
    np.testing.assert_array_equal(fd.for_pair().dy, fd.at(1).dy)


def test_missing_instrument_column():
    fd = first_differences(make_panel(np.ones((3, 2)), np.arange(6.0).reshape(3, 2)))
    with pytest.raises(ValidationError, match="instrument"):
        fd.column("dz")


@given(arrays(np.float64, (6, 4), elements=st.floats(-1e6, 1e6)))
def test_differences_rebuild_levels(Y):
    p = make_panel(Y, np.zeros_like(Y))
    fd = first_differences(p)
    np.testing.assert_allclose(rebuild_levels(Y[:, 0], fd), Y, rtol=1e-12, atol=1e-6)


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_folds_partition_clusters(n_clusters, n_folds, seed):
    ids = np.arange(n_clusters) * 7 + 3
    if n_folds > n_clusters:
        with pytest.raises(ValidationError):
            assign_folds(ids, n_folds, seed)
        return
    fa = assign_folds(ids, n_folds, seed)
    sizes = fa.sizes()
    assert sizes.sum() == n_clusters and sizes.max() - sizes.min() <= 1
    assert set(np.unique(fa.cluster_fold)) == set(range(n_folds))
    again = assign_folds(ids[::-1], n_folds, seed)
    np.testing.assert_array_equal(fa.fold_of(ids), again.fold_of(ids))


def test_fold_rows_share_cluster_fold():
    G = 40
    cl = np.arange(G) // 4
    p = make_panel(np.zeros((G, 3)), np.zeros((G, 3)), cluster=cl)
    fd = first_differences(p)
    fa = assign_folds(fd, 5, seed=3)
    rows = fa.fold_of(fd.cluster)
    for c in np.unique(cl):
        assert len(np.unique(rows[fd.cluster == c])) == 1
    with pytest.raises(ValidationError):
        assign_folds(fd, 1)
    with pytest.raises(ValidationError, match="not covered"):
        fa.fold_of([999])
