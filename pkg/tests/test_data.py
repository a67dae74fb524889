import numpy as np
import pytest

from spbn.data import Dataset
from spbn.errors import DataError, DimensionMismatch, NonFinite


def test_one_dimensional_values_become_one_column():
    data = Dataset(["x"], [1.0, 2.0, 3.0])
    assert data.n == 3
    assert data.d == 1


def test_unique_columns_required():
    with pytest.raises(DataError):
        Dataset(["a", "a"], [[1.0, 2.0]])


def test_rejects_nan():
    with pytest.raises(NonFinite):
        Dataset(["a"], [np.nan])


def test_rejects_empty():
    with pytest.raises(DataError):
        Dataset(["a"], np.empty((0, 1)))


def test_column_count_must_match():
    with pytest.raises(DimensionMismatch):
        Dataset(["a", "b", "c"], [[1.0, 2.0]])


def test_project_reorders():
    data = Dataset(["a", "b"], [[1.0, 2.0], [3.0, 4.0]])
    swapped = data.project(["b", "a"])
    assert swapped.columns == ("b", "a")
    np.testing.assert_array_equal(swapped.values, [[2.0, 1.0], [4.0, 3.0]])


def test_project_missing():
    data = Dataset(["a"], [[1.0]])
    with pytest.raises(DimensionMismatch):
        data.project(["z"])


def test_values_read_only():
    data = Dataset(["a"], [[1.0]])
    with pytest.raises(ValueError):
        data.values[0, 0] = 2.0
