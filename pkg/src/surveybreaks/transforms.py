"""Logratio maps between the open simplex and real space.

All functions accept a single composition (1-D) or a matrix with one
composition per row. Compositions may be on any scale (fractions or
percentages); the forward maps are scale free and the inverses return
fractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroProportionError(ValueError):
    def __init__(self, period, category):
        super().__init__(
            f"proportion is zero or negative at period index {period}, category {category + 1}; "
            "logratio transforms need strictly positive proportions")
        self.period = period
        self.category = category


def _positive_rows(y):
    y = np.asarray(y, dtype=float)
    rows = np.atleast_2d(y)
    bad = np.argwhere(~(rows > 0))
    if bad.size:
        raise ZeroProportionError(int(bad[0, 0]), int(bad[0, 1]))
    return y, rows


def alr_forward(y, reference=None):
    """Log of each proportion relative to the reference category.

    ``reference`` is a 0-based column index, default the last category. The
    reference column is dropped from the output.
    """
    y, rows = _positive_rows(y)
    K = rows.shape[1]
    ref = K - 1 if reference is None else int(reference)
    if not 0 <= ref < K:
        raise ValueError(f"reference category {ref} out of range for K={K}")
    logs = np.log(rows)
    x = np.delete(logs - logs[:, [ref]], ref, axis=1)
    return x if y.ndim == 2 else x[0]


def _softmax(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def alr_inverse(x, reference=None):
    """Map ``K-1`` logratios back to ``K`` proportions summing to one."""
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(x)
    if not np.all(np.isfinite(rows)):
        raise ValueError("alr_inverse needs finite input")
    K = rows.shape[1] + 1
    ref = K - 1 if reference is None else int(reference)
    if not 0 <= ref < K:
        raise ValueError(f"reference category {ref} out of range for K={K}")
    full = np.insert(rows, ref, 0.0, axis=1)
    y = _softmax(full)
    return y if x.ndim == 2 else y[0]


def geometric_mean(y):
    _, rows = _positive_rows(y)
    return np.exp(np.log(rows).mean(axis=1))


def clr_forward(y):
    """Log of each proportion relative to the geometric mean of the row."""
    y, rows = _positive_rows(y)
    logs = np.log(rows)
    z = logs - logs.mean(axis=1, keepdims=True)
    return z if y.ndim == 2 else z[0]


def clr_inverse(z):
    """Softmax back to the simplex; invariant to adding a constant."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("clr_inverse needs finite input")
    y = _softmax(z)
    return y if z.ndim == 2 else y[0]


@dataclass(frozen=True)
class TransformedPanel:
    """Logratio-transformed panel ready for model building.

    ``values`` is ``T x (K-1)`` for ``kind='alr'`` and ``T x K`` for
    ``kind='clr'``. ``reference`` is the 0-based alr reference category.
    """

    kind: str
    values: np.ndarray
    sample_sizes: np.ndarray
    redesign_period: int
    periods: tuple
    reference: int | None = None
    geometric_means: np.ndarray | None = None
    categories: tuple = ()

    @property
    def n_periods(self):
        return self.values.shape[0]

    def inverse(self, values=None):
        """Proportions (fractions) for ``values`` on this panel's scale."""
        v = self.values if values is None else values
        if self.kind == "alr":
            return alr_inverse(v, self.reference)
        return clr_inverse(v)


def transform_panel(panel, kind, reference=None):
    """Apply ``alr`` or ``clr`` to a :class:`CompositionalPanel`."""
    y = panel.fractions()
    if kind == "alr":
        K = y.shape[1]
        ref = K - 1 if reference is None else int(reference)
        values = alr_forward(y, ref)
        gm = None
        cats = tuple(c for i, c in enumerate(panel.categories) if i != ref)
    elif kind == "clr":
        ref = None
        values = clr_forward(y)
        gm = geometric_mean(y)
        cats = tuple(panel.categories)
    else:
        raise ValueError(f"unknown transform {kind!r}")
    return TransformedPanel(kind=kind, values=values, sample_sizes=panel.sample_sizes,
                            redesign_period=panel.redesign_period, periods=panel.periods,
                            reference=ref, geometric_means=gm, categories=cats)
