"""Structural time series models for compositional series with a redesign.

Each series gets a smooth trend (level plus stochastic slope, no level
disturbance) and an intervention coefficient held in the state vector. The
state order per block is ``(L_1, R_1, ..., L_K, R_K, beta_1, ..., beta_K)``.
Measurement variances are ``sigma_eps^2 / n_t``.

Restricted variants (M2, M4) route the coefficients through the transition
block ``[[I, 0], [-1', 0]]``, so every filtered and smoothed coefficient
vector sums to zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .statespace import StateSpaceModel
from .transforms import TransformedPanel, transform_panel

VARIANTS = ("M1", "M2", "M3", "M4")
KINDS = ("level", "slope", "seasonal")
DIRECTIONS = ("after", "before")


@dataclass(frozen=True)
class CompositionalPanel:
    """Observed K-category proportions with sample sizes and redesign period.

    ``redesign_period`` is the 1-based position of the first period observed
    under the new design. ``unit`` is the row total (100 for percentages).
    ``domains`` optionally holds one sub-panel per subpopulation with
    population ``shares``.
    """

    periods: tuple
    proportions: np.ndarray
    sample_sizes: np.ndarray
    redesign_period: int
    unit: float = 100.0
    categories: tuple = ()
    standard_errors: np.ndarray | None = None
    domains: tuple = ()
    shares: np.ndarray | None = None
    domain_names: tuple = ()

    def __post_init__(self):
        y = np.array(self.proportions, dtype=float)
        if y.ndim != 2 or y.shape[1] < 2:
            raise ValueError("proportions must be a T x K matrix with K >= 2")
        T, K = y.shape
        periods = tuple(self.periods) if len(self.periods) else tuple(range(1, T + 1))
        if len(periods) != T:
            raise ValueError("periods and proportions disagree in length")
        if not np.all(np.isfinite(y)):
            bad = np.argwhere(~np.isfinite(y))[0]
            raise ValueError(f"non-finite proportion at period {periods[bad[0]]}, category {bad[1] + 1}")
        if np.any(y < 0) or np.any(y > self.unit):
            bad = np.argwhere((y < 0) | (y > self.unit))[0]
            raise ValueError(f"proportion out of [0, {self.unit:g}] at period {periods[bad[0]]}, category {bad[1] + 1}")
        sums = y.sum(axis=1)
        off = np.abs(sums - self.unit) > 1e-9 * max(1.0, self.unit)
        if np.any(off):
            t = int(np.argmax(off))
            raise ValueError(f"row for period {periods[t]} sums to {sums[t]!r}, expected {self.unit:g}")
        n = np.array(self.sample_sizes, dtype=float)
        if n.shape != (T,) or np.any(n <= 0):
            raise ValueError("sample_sizes must be T positive numbers")
        if not 1 < int(self.redesign_period) <= T:
            raise ValueError(f"redesign_period must satisfy 1 < T_R <= {T}, got {self.redesign_period}")
        cats = tuple(self.categories) or tuple(f"cat_{k + 1}" for k in range(K))
        if len(cats) != K:
            raise ValueError("categories must have K entries")
        se = None if self.standard_errors is None else np.array(self.standard_errors, dtype=float)
        if se is not None and (se.shape != (T, K) or np.any(se < 0)):
            raise ValueError("standard_errors must be a non-negative T x K matrix")
        shares = None
        if self.domains:
            shares = np.array(self.shares, dtype=float)
            if shares.shape != (len(self.domains),) or np.any(shares < 0):
                raise ValueError("shares must have one non-negative entry per domain")
            if abs(shares.sum() - 1.0) > 1e-12:
                raise ValueError(f"domain shares sum to {shares.sum()!r}, expected 1")
            for d in self.domains:
                if d.proportions.shape != (T, K) or d.redesign_period != self.redesign_period:
                    raise ValueError("domain panels must match the total panel")
        object.__setattr__(self, "proportions", y)
        object.__setattr__(self, "sample_sizes", n)
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "standard_errors", se)
        object.__setattr__(self, "shares", shares)
        object.__setattr__(self, "redesign_period", int(self.redesign_period))
        if self.domains and not self.domain_names:
            object.__setattr__(self, "domain_names", tuple(f"domain_{h + 1}" for h in range(len(self.domains))))

    @property
    def n_periods(self):
        return self.proportions.shape[0]

    @property
    def n_categories(self):
        return self.proportions.shape[1]

    def percent(self):
        return self.proportions * (100.0 / self.unit)

    def fractions(self):
        return self.proportions / self.unit

    def truncate(self, end):
        """Panel restricted to the first ``end`` periods."""
        if not self.redesign_period <= end <= self.n_periods:
            raise ValueError(f"end period index {end} must lie in [{self.redesign_period}, {self.n_periods}]")
        se = None if self.standard_errors is None else self.standard_errors[:end]
        doms = tuple(d.truncate(end) for d in self.domains)
        return CompositionalPanel(self.periods[:end], self.proportions[:end], self.sample_sizes[:end],
                                  self.redesign_period, self.unit, self.categories, se, doms,
                                  self.shares, self.domain_names)


@dataclass(frozen=True)
class InterventionSpec:
    kind: str = "level"
    adjust_direction: str = "after"
    seasonal_period: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"intervention kind must be one of {KINDS}, got {self.kind!r}")
        if self.adjust_direction not in DIRECTIONS:
            raise ValueError(f"adjust_direction must be one of {DIRECTIONS}, got {self.adjust_direction!r}")
        if self.kind == "seasonal" and (self.seasonal_period is None or self.seasonal_period < 2):
            raise ValueError("seasonal intervention needs seasonal_period >= 2")


@dataclass(frozen=True)
class ModelVariant:
    name: str = "M2"
    common_obs_variance: bool = True
    variance_break: bool = False
    reference_category: int | None = None
    use_standard_errors: bool = False

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ValueError(f"model must be one of {VARIANTS}, got {self.name!r}")
        if self.reference_category is not None and self.name != "M3":
            raise ValueError("reference_category only applies to M3")

    @property
    def restricted(self):
        return self.name in ("M2", "M4")

    @property
    def scale(self):
        return {"M1": "original", "M2": "original", "M3": "alr", "M4": "clr"}[self.name]


def build_intervention_regressor(kind, redesign_period, n_periods, adjust_direction="after"):
    """Intervention variable for periods ``t = 1..n``.

    Level and seasonal: 0 before the redesign and 1 from it on. Slope: grows
    as ``1 + t - T_R`` from the redesign when adjusting the later part, and is
    ``t - T_R`` before the redesign (0 after) when adjusting the earlier part.
    """
    TR, n = int(redesign_period), int(n_periods)
    if not 1 < TR <= n:
        raise ValueError(f"redesign period must satisfy 1 < T_R <= {n}, got {TR}")
    t = np.arange(1, n + 1, dtype=float)
    if kind in ("level", "seasonal"):
        return (t >= TR).astype(float)
    if kind == "slope":
        if adjust_direction == "after":
            return np.where(t >= TR, 1.0 + t - TR, 0.0)
        if adjust_direction == "before":
            return np.where(t < TR, t - TR, 0.0)
        raise ValueError(f"unknown adjust direction {adjust_direction!r}")
    raise ValueError(f"unknown intervention kind {kind!r}")


def zero_sum_transition(K):
    """Coefficient transition whose output always sums to zero."""
    Tiv = np.zeros((K, K))
    Tiv[:K - 1, :K - 1] = np.eye(K - 1)
    Tiv[K - 1, :K - 1] = -1.0
    return Tiv


def smooth_trend_transition(K):
    return np.kron(np.eye(K), np.array([[1.0, 1.0], [0.0, 1.0]]))


def dummy_seasonal_transition(s):
    """``(s-1) x (s-1)`` companion matrix with a top row of -1."""
    Ts = np.zeros((s - 1, s - 1))
    Ts[0, :] = -1.0
    Ts[1:, :-1] = np.eye(s - 2)
    return Ts


def _block_diag(*blocks):
    m = sum(b.shape[0] for b in blocks)
    out = np.zeros((m, m))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


@dataclass
class _Layout:
    """Assembles names and parameter indices while a model is built."""

    params: list = field(default_factory=list)

    def add(self, name):
        self.params.append(name)
        return len(self.params) - 1


def _obs_params(layout, n_series, redesign, n_periods, common, vbreak, prefix=""):
    """Index matrix (T x p) of measurement-variance parameters."""
    idx = np.empty((n_periods, n_series), dtype=np.int64)
    pre = np.arange(n_periods) < redesign - 1
    if common:
        if vbreak:
            a, b = layout.add(f"{prefix}log_var_eps[pre]"), layout.add(f"{prefix}log_var_eps[post]")
            idx[pre], idx[~pre] = a, b
        else:
            idx[:] = layout.add(f"{prefix}log_var_eps")
    else:
        for k in range(n_series):
            if vbreak:
                a, b = layout.add(f"{prefix}log_var_eps[{k + 1},pre]"), layout.add(f"{prefix}log_var_eps[{k + 1},post]")
                idx[pre, k], idx[~pre, k] = a, b
            else:
                idx[:, k] = layout.add(f"{prefix}log_var_eps[{k + 1}]")
    return idx


def _trend_coef_model(values, sample_sizes, redesign, spec, variant, coef_transition,
                      series_names, omega=None):
    """Shared construction for M1 to M4."""
    values = np.asarray(values, dtype=float)
    T, p = values.shape
    if spec.kind == "seasonal":
        raise ValueError("use build_seasonal_intervention for seasonal interventions")
    delta = build_intervention_regressor(spec.kind, redesign, T, spec.adjust_direction)
    layout = _Layout()
    slope_idx = [layout.add(f"log_var_slope[{k + 1}]") for k in range(p)]
    obs_idx = _obs_params(layout, p, redesign, T, variant.common_obs_variance, variant.variance_break)

    m = 3 * p
    Z = np.zeros((T, p, m))
    for k in range(p):
        Z[:, k, 2 * k] = 1.0
        Z[:, k, 2 * p + k] = delta
    trans = _block_diag(smooth_trend_transition(p), coef_transition)
    spar = np.full(m, -1, dtype=np.int64)
    spar[1:2 * p:2] = slope_idx
    scale = np.repeat(1.0 / np.asarray(sample_sizes, float)[:, None], p, axis=1)
    if omega is not None:
        scale = scale * np.asarray(omega, float) ** 2
    states = tuple(itertools.chain.from_iterable((f"level[{k + 1}]", f"slope[{k + 1}]") for k in range(p)))
    states += tuple(f"beta[{k + 1}]" for k in range(p))
    return StateSpaceModel(design=Z, transition=trans, obs_var_scale=scale, obs_var_param=obs_idx,
                           state_var_param=spar, param_names=tuple(layout.params),
                           state_names=states, series_names=tuple(series_names))


def _omega(panel, variant):
    if not variant.use_standard_errors:
        return None
    if panel.standard_errors is None:
        raise ValueError("use_standard_errors needs a panel with standard errors")
    return panel.standard_errors * (100.0 / panel.unit)


def build_m1(panel, spec=InterventionSpec(), variant=None):
    """Seemingly unrelated model on the untransformed (percentage) series."""
    variant = variant or ModelVariant("M1")
    K = panel.n_categories
    return _trend_coef_model(panel.percent(), panel.sample_sizes, panel.redesign_period, spec,
                             variant, np.eye(K), panel.categories, _omega(panel, variant))


def build_m2(panel, spec=InterventionSpec(), variant=None):
    """Untransformed series with zero-sum intervention coefficients."""
    variant = variant or ModelVariant("M2")
    K = panel.n_categories
    return _trend_coef_model(panel.percent(), panel.sample_sizes, panel.redesign_period, spec,
                             variant, zero_sum_transition(K), panel.categories, _omega(panel, variant))


def _check_transformed(tp, kind):
    if not isinstance(tp, TransformedPanel) or tp.kind != kind:
        raise ValueError(f"expected a {kind} transformed panel")


def build_m3(transformed_panel, spec=InterventionSpec(), variant=None):
    """Seemingly unrelated model on the K-1 additive logratio series."""
    _check_transformed(transformed_panel, "alr")
    variant = variant or ModelVariant("M3")
    tp = transformed_panel
    p = tp.values.shape[1]
    return _trend_coef_model(tp.values, tp.sample_sizes, tp.redesign_period, spec, variant,
                             np.eye(p), tp.categories)


def build_m4(clr_panel, spec=InterventionSpec(), variant=None):
    """Zero-sum restricted model on the K central logratio series."""
    _check_transformed(clr_panel, "clr")
    variant = variant or ModelVariant("M4")
    tp = clr_panel
    K = tp.values.shape[1]
    return _trend_coef_model(tp.values, tp.sample_sizes, tp.redesign_period, spec, variant,
                             zero_sum_transition(K), tp.categories)


def analysis_data(panel, variant):
    """Observation matrix on the scale the variant models."""
    if variant.name in ("M1", "M2"):
        return panel.percent()
    if variant.name == "M3":
        return transform_panel(panel, "alr", variant.reference_category).values
    return transform_panel(panel, "clr").values


def build_model(panel, variant, spec=InterventionSpec()):
    """Dispatch to the builder for ``variant``; returns ``(model, y)``."""
    if spec.kind == "seasonal":
        model = build_seasonal_intervention(panel, spec.seasonal_period, variant)
        return model, analysis_data(panel, variant)
    if variant.name == "M1":
        return build_m1(panel, spec, variant), panel.percent()
    if variant.name == "M2":
        return build_m2(panel, spec, variant), panel.percent()
    if variant.name == "M3":
        tp = transform_panel(panel, "alr", variant.reference_category)
        return build_m3(tp, spec, variant), tp.values
    tp = transform_panel(panel, "clr")
    return build_m4(tp, spec, variant), tp.values


def build_seasonal_intervention(panel, s, base_variant=None, keep_level=False):
    """Restricted model with a dummy seasonal and a seasonal intervention.

    Each series gets a stochastic dummy-variable seasonal (``s-1`` states).
    The intervention is a fixed seasonal pattern per category, switched on
    at the redesign; its transition is the Kronecker product of the zero-sum
    coefficient transition and the seasonal companion matrix, so the patterns
    sum to zero over categories. ``keep_level`` adds the level intervention
    coefficients as well.
    """
    base_variant = base_variant or ModelVariant("M2")
    if base_variant.name not in ("M2", "M4"):
        raise ValueError("seasonal intervention is built on M2 or M4")
    s = int(s)
    if s < 2:
        raise ValueError("seasonal period must be >= 2")
    y = analysis_data(panel, base_variant)
    T, K = y.shape
    TR = panel.redesign_period
    if T < 2 * s or T - TR + 1 < s - 1 + (1 if keep_level else 0):
        raise ValueError(f"series too short to identify seasonal states with s={s}: "
                         f"need at least {2 * s} periods and {s - 1} after the redesign")
    delta = build_intervention_regressor("level", TR, T)
    ns = s - 1
    layout = _Layout()
    slope_idx = [layout.add(f"log_var_slope[{k + 1}]") for k in range(K)]
    seas_idx = [layout.add(f"log_var_seas[{k + 1}]") for k in range(K)]
    obs_idx = _obs_params(layout, K, TR, T, base_variant.common_obs_variance, base_variant.variance_break)

    n_tr, n_se, n_iv = 2 * K, K * ns, K * ns
    n_lv = K if keep_level else 0
    m = n_tr + n_se + n_iv + n_lv
    zs = np.zeros(ns)
    zs[0] = 1.0
    Z = np.zeros((T, K, m))
    for k in range(K):
        Z[:, k, 2 * k] = 1.0
        Z[:, k, n_tr + k * ns:n_tr + (k + 1) * ns] = zs
        Z[:, k, n_tr + n_se + k * ns:n_tr + n_se + (k + 1) * ns] = delta[:, None] * zs
        if keep_level:
            Z[:, k, n_tr + n_se + n_iv + k] = delta
    Ts = dummy_seasonal_transition(s)
    Tiv = zero_sum_transition(K)
    blocks = [smooth_trend_transition(K), np.kron(np.eye(K), Ts), np.kron(Tiv, Ts)]
    if keep_level:
        blocks.append(Tiv)
    trans = _block_diag(*blocks)
    spar = np.full(m, -1, dtype=np.int64)
    spar[1:n_tr:2] = slope_idx
    spar[n_tr:n_tr + n_se:ns] = seas_idx
    scale = np.repeat(1.0 / panel.sample_sizes[:, None], K, axis=1)
    states = tuple(itertools.chain.from_iterable((f"level[{k + 1}]", f"slope[{k + 1}]") for k in range(K)))
    states += tuple(f"season[{k + 1},{j + 1}]" for k in range(K) for j in range(ns))
    states += tuple(f"season_beta[{k + 1},{j + 1}]" for k in range(K) for j in range(ns))
    if keep_level:
        states += tuple(f"beta[{k + 1}]" for k in range(K))
    return StateSpaceModel(design=Z, transition=trans, obs_var_scale=scale, obs_var_param=obs_idx,
                           state_var_param=spar, param_names=tuple(layout.params),
                           state_names=states, series_names=tuple(panel.categories))


MAX_DOMAIN_STATES = 120


def domain_coefficient_transition(K, shares):
    """Transition for stacked (total, domain 1..H) intervention coefficients.

    The total block is rebuilt every step as the share-weighted sum of the
    zero-sum domain blocks.
    """
    f = np.asarray(shares, dtype=float)
    H = f.size
    Tiv = zero_sum_transition(K)
    out = np.zeros(((H + 1) * K, (H + 1) * K))
    out[:K, K:] = np.kron(f[None, :], Tiv)
    out[K:, K:] = np.kron(np.eye(H), Tiv)
    return out


def build_domain_consistent(panel, spec=InterventionSpec(), variant=None, max_states=MAX_DOMAIN_STATES):
    """Joint untransformed model for the total and its H domains.

    Series are stacked as (total, domain 1, ..., domain H), each with K
    categories, a smooth trend per series, and one measurement variance per
    group. Returns a model whose observations are
    :func:`domain_observations`.
    """
    variant = variant or ModelVariant("M2")
    if not panel.domains:
        raise ValueError("panel has no domain block")
    f = panel.shares
    if abs(f.sum() - 1.0) > 1e-12:
        raise ValueError("domain shares must sum to 1")
    if spec.kind == "seasonal":
        raise ValueError("seasonal interventions are not supported in the domain model")
    groups = (panel,) + tuple(panel.domains)
    G, K, T = len(groups), panel.n_categories, panel.n_periods
    p = G * K
    m = 3 * p
    if m > max_states:
        raise ValueError(f"domain-consistent model needs {m} states (cap {max_states}); "
                         "use the Lagrange benchmarking route instead")
    TR = panel.redesign_period
    delta = build_intervention_regressor(spec.kind, TR, T, spec.adjust_direction)
    layout = _Layout()
    gnames = ("total",) + tuple(panel.domain_names)
    slope_idx = [layout.add(f"{g}:log_var_slope[{k + 1}]") for g in gnames for k in range(K)]
    obs_idx = np.concatenate([
        _obs_params(layout, K, TR, T, True, variant.variance_break, prefix=f"{g}:") for g in gnames], axis=1)
    Z = np.zeros((T, p, m))
    for j in range(p):
        Z[:, j, 2 * j] = 1.0
        Z[:, j, 2 * p + j] = delta
    trans = _block_diag(smooth_trend_transition(p), domain_coefficient_transition(K, f))
    spar = np.full(m, -1, dtype=np.int64)
    spar[1:2 * p:2] = slope_idx
    scale = np.concatenate([np.repeat(1.0 / g.sample_sizes[:, None], K, axis=1) for g in groups], axis=1)
    series = tuple(f"{g}:{c}" for g in gnames for c in panel.categories)
    states = tuple(itertools.chain.from_iterable((f"level[{s}]", f"slope[{s}]") for s in series))
    states += tuple(f"beta[{s}]" for s in series)
    return StateSpaceModel(design=Z, transition=trans, obs_var_scale=scale, obs_var_param=obs_idx,
                           state_var_param=spar, param_names=tuple(layout.params),
                           state_names=states, series_names=series)


def domain_observations(panel):
    return np.concatenate([panel.percent()] + [d.percent() for d in panel.domains], axis=1)
