"""Adjusting series for discontinuities and benchmarking domains to totals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .models import build_intervention_regressor
from .transforms import alr_forward, alr_inverse, clr_forward, clr_inverse

COND_WARN = 1e10


@dataclass(frozen=True)
class AdjustedSeries:
    """Adjusted proportions in the unit of the source panel."""

    values: np.ndarray
    unit: float
    direction: str
    variant: str
    beta: np.ndarray
    transform: str
    periods: tuple = ()
    categories: tuple = ()

    def fractions(self):
        return self.values / self.unit


def _shift(estimate, T, direction):
    if direction == estimate.direction:
        return np.asarray(estimate.shift, float)
    if estimate.kind != "level":
        raise ValueError(f"{estimate.kind} estimate was fitted for adjust-{estimate.direction}; "
                         "refit with the other direction")
    # level coefficients mean the same thing in both directions
    delta = build_intervention_regressor("level", estimate.redesign_period, T)
    b = np.asarray(estimate.beta, float)
    if direction == "after":
        return delta[:, None] * b[None, :]
    return (delta - 1.0)[:, None] * b[None, :]


def adjust_values(values, estimate, direction=None, unit=100.0):
    """Adjust a ``T x K`` matrix of proportions (in ``unit``).

    Untransformed estimates shift the series directly; alr and clr estimates
    shift the logratios and map the result back to the simplex.
    """
    y = np.asarray(values, float)
    direction = direction or estimate.direction
    shift = _shift(estimate, y.shape[0], direction)
    if estimate.scale == "original":
        return y - shift * (unit / 100.0)
    if estimate.scale == "alr":
        x = alr_forward(y, estimate.reference)
        return alr_inverse(x - shift, estimate.reference) * unit
    if estimate.scale == "clr":
        return clr_inverse(clr_forward(y) - shift) * unit
    raise ValueError(f"unknown analysis scale {estimate.scale!r}")


def adjust_series(panel, estimate, direction=None):
    """Remove the estimated discontinuity from one side of the redesign.

    ``direction='after'`` moves the new-design periods to the old level,
    ``'before'`` moves the old-design periods to the new level.
    """
    direction = direction or estimate.direction
    if direction not in ("after", "before"):
        raise ValueError(f"direction must be 'after' or 'before', got {direction!r}")
    if estimate.variant == "M1":
        warnings.warn("M1 coefficients are not restricted: the adjusted rows need not sum to the total",
                      UserWarning, stacklevel=2)
    vals = adjust_values(panel.proportions, estimate, direction, panel.unit)
    transform = {"original": "none", "alr": "alr", "clr": "clr"}[estimate.scale]
    return AdjustedSeries(values=vals, unit=panel.unit, direction=direction, variant=estimate.variant,
                          beta=np.array(estimate.beta), transform=transform,
                          periods=tuple(panel.periods), categories=tuple(panel.categories))


def build_restrictions(K, H, f, total=1.0):
    """Aggregation and unit-sum restrictions for (total, domain 1..H) stacks.

    Only the first K-1 categories carry an explicit aggregation row; the K-th
    follows from the unit-sum rows.
    """
    f = np.asarray(f, float)
    if K < 2 or H < 1 or f.shape != (H,):
        raise ValueError("need K >= 2, H >= 1 and one share per domain")
    L = np.hstack([np.eye(K - 1), np.zeros((K - 1, 1))])
    top = np.kron(np.concatenate([[1.0], -f]), L)
    bottom = np.kron(np.eye(H + 1), np.ones((1, K)))
    R = np.vstack([top, bottom])
    c = np.concatenate([np.zeros(K - 1), np.full(H + 1, float(total))])
    return R, c


@dataclass(frozen=True)
class BenchmarkProblem:
    """One period's stacked adjusted estimates and their restrictions."""

    y: np.ndarray
    R: np.ndarray
    c: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, float)
        R = np.atleast_2d(np.asarray(self.R, float))
        c = np.asarray(self.c, float)
        V = np.asarray(self.V, float)
        if V.ndim == 1:
            V = np.diag(V)
        n = y.size
        if R.shape[1] != n or c.shape != (R.shape[0],) or V.shape != (n, n):
            raise ValueError("inconsistent benchmark dimensions")
        if not np.allclose(V, V.T, atol=1e-12):
            raise ValueError("V must be symmetric")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "V", V)

    @classmethod
    def from_series(cls, total, domains, shares, V, unit=1.0):
        total = np.asarray(total, float)
        K, H = total.size, len(domains)
        R, c = build_restrictions(K, H, shares, unit)
        y = np.concatenate([total] + [np.asarray(d, float) for d in domains])
        return cls(y, R, c, V)


def benchmark_lagrange(problem):
    """Smallest ``V^-1``-norm change that satisfies ``R y = c``.

    Returns the benchmarked vector and its covariance.
    """
    y, R, c, V = problem.y, problem.R, problem.c, problem.V
    gap = c - R @ y
    VRt = V @ R.T
    S = R @ VRt
    cond = np.linalg.cond(S)
    if not np.isfinite(cond):
        raise np.linalg.LinAlgError("R V R' is singular; drop redundant restrictions")
    if cond > COND_WARN:
        warnings.warn(f"R V R' is ill-conditioned (condition number {cond:.3g}); "
                      "consider fewer restrictions", RuntimeWarning, stacklevel=2)
    try:
        W = linalg.solve(S, VRt.T, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("R V R' is singular; drop redundant restrictions") from exc
    Vstar = V - VRt @ W
    Vstar = 0.5 * (Vstar + Vstar.T)
    if not np.any(gap):
        return y.copy(), Vstar
    return y + W.T @ gap, Vstar


def benchmark_panel(total, domains, shares, variances, unit=100.0):
    """Benchmark every period of adjusted total and domain series.

    ``total`` and each domain are ``T x K``; ``variances`` is the diagonal
    of V, either one ``(H+1)K`` vector for all periods or ``T x (H+1)K``.
    Returns ``(T x (H+1)K values, T x (H+1)K variances)``.
    """
    total = np.asarray(total, float)
    T, K = total.shape
    var = np.asarray(variances, float)
    if var.ndim == 1:
        var = np.broadcast_to(var, (T, var.size))
    out = np.empty((T, (len(domains) + 1) * K))
    vout = np.empty_like(out)
    for t in range(T):
        prob = BenchmarkProblem.from_series(total[t], [d[t] for d in domains], shares, var[t], unit)
        ys, Vs = benchmark_lagrange(prob)
        out[t], vout[t] = ys, np.diag(Vs)
    return out, vout
