"""Named-column continuous dataset."""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionMismatch, NonFinite


class Dataset:
    """An (N, d) matrix of continuous observations with named columns."""

    __slots__ = ("columns", "values")

    def __init__(self, columns, values):
        cols = tuple(str(c) for c in columns)
        vals = np.array(values, dtype=np.float64, copy=True)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.ndim != 2:
            raise DataError(f"expected a 2-d value matrix, got ndim={vals.ndim}")
        if len(set(cols)) != len(cols):
            raise DataError("column names must be unique")
        if vals.shape[1] != len(cols):
            raise DimensionMismatch(
                f"{len(cols)} column names for {vals.shape[1]} value columns"
            )
        if vals.shape[0] < 1:
            raise DataError("dataset needs at least one row")
        if not np.all(np.isfinite(vals)):
            raise NonFinite("dataset contains NaN or infinite entries")
        vals.setflags(write=False)
        self.columns = cols
        self.values = vals

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            idx = self.columns.index(name)
        except ValueError:
            raise DimensionMismatch(f"no column named {name!r}") from None
        return self.values[:, idx]

    def project(self, columns) -> "Dataset":
        """Select columns by name, in the requested order."""
        names = tuple(columns)
        missing = [c for c in names if c not in self.columns]
        if missing:
            raise DimensionMismatch(f"missing columns: {missing}")
        idx = [self.columns.index(c) for c in names]
        return Dataset(names, self.values[:, idx])

    def take_rows(self, indices) -> "Dataset":
        return Dataset(self.columns, self.values[np.asarray(indices)])

    def __repr__(self):
        return f"Dataset(columns={self.columns!r}, n={self.n})"
