"""Monte Carlo studies: model-based and multinomial generators.

Every replicate draws from its own PCG64 stream keyed by ``(seed, r)``, so
results do not depend on the order or number of worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adjust import adjust_values
from .estimation import extract_discontinuities, fit_mle
from .models import (CompositionalPanel, InterventionSpec, ModelVariant, build_m3, build_model)
from .statespace import simulate
from .transforms import TransformedPanel, alr_forward

log = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy PCG64, SeedSequence(seed, spawn_key=(replicate,))"
MAX_FAILURE_RATE = 0.2


def replicate_rng(seed, r):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(r),))))


@dataclass(frozen=True)
class ModelScenario:
    """Series drawn from the alr trend model with fixed hyperparameters.

    ``sigma_slope`` and ``sigma_eps`` are standard deviations; measurement
    variances are ``sigma_eps**2 / n_t``. ``sample_size_rule`` is
    ``'actual'`` (use ``sample_sizes`` as given, length must equal
    ``length``) or ``'uniform'`` (integers drawn between their min and max).
    """

    name: str
    length: int
    redesign_period: int
    sigma_slope: tuple
    sigma_eps: float
    beta: tuple
    base_composition: tuple
    sample_sizes: tuple
    sample_size_rule: str = "actual"
    initial_slope: tuple | None = None
    replicates: int = 10000
    seed: int = 0
    n_starts: int = 5

    def __post_init__(self):
        p = len(self.beta)
        if len(self.sigma_slope) != p or len(self.base_composition) != p + 1:
            raise ValueError("sigma_slope and beta need K-1 entries, base_composition K")
        if not 1 < self.redesign_period <= self.length:
            raise ValueError("redesign_period must satisfy 1 < T_R <= length")
        if self.sample_size_rule not in ("actual", "uniform"):
            raise ValueError("sample_size_rule must be 'actual' or 'uniform'")
        if self.sample_size_rule == "actual" and len(self.sample_sizes) != self.length:
            raise ValueError("'actual' sample sizes need one entry per period")
        if min(self.sample_sizes) <= 0:
            raise ValueError("sample sizes must be positive")

    @property
    def kind(self):
        return "model"

    def parameter_names(self):
        p = len(self.beta)
        return [f"hyp{k + 1}" for k in range(p + 1)] + [f"disc{k + 1}" for k in range(p)]

    def true_values(self):
        return np.array(list(self.sigma_slope) + [self.sigma_eps] + list(self.beta), float)


@dataclass(frozen=True)
class MultinomialScenario:
    """Multinomial draws around a base path with injected discontinuities.

    ``base_path`` is ``T x K`` in percent; ``delta`` is either one K-vector
    (constant) or one row per post-redesign period, in percentage points.
    """

    name: str
    redesign_period: int
    base_path: tuple
    sample_sizes: tuple
    delta: tuple
    estimators: tuple = ("M1", "M2", "M3", "M4")
    replicates: int = 10000
    seed: int = 0
    n_starts: int = 5

    def __post_init__(self):
        p = np.asarray(self.base_path, float)
        if p.ndim != 2:
            raise ValueError("base_path must be T x K")
        T, K = p.shape
        if not 1 < self.redesign_period <= T:
            raise ValueError("redesign_period must satisfy 1 < T_R <= T")
        if len(self.sample_sizes) != T or min(self.sample_sizes) <= 0:
            raise ValueError("need one positive sample size per period")
        if np.any(np.abs(p.sum(axis=1) - 100.0) > 1e-9):
            raise ValueError("base_path rows must sum to 100")
        d = self.delta_matrix()
        if np.any(np.abs(d.sum(axis=1)) > 1e-9):
            raise ValueError("discontinuity rows must sum to zero")
        inj = self.injected_path()
        if np.any(inj < 0) or np.any(inj > 100):
            t, k = np.argwhere((inj < 0) | (inj > 100))[0]
            raise ValueError(f"base path plus discontinuity leaves [0, 100] at period {t + 1}, category {k + 1}")
        for e in self.estimators:
            ModelVariant(e)

    @property
    def kind(self):
        return "multinomial"

    @property
    def length(self):
        return len(self.base_path)

    def delta_matrix(self):
        T = self.length
        n_post = T - self.redesign_period + 1
        d = np.atleast_2d(np.asarray(self.delta, float))
        if d.shape[0] == 1:
            d = np.repeat(d, n_post, axis=0)
        if d.shape != (n_post, np.asarray(self.base_path).shape[1]):
            raise ValueError(f"delta must be a K-vector or {n_post} x K")
        return d

    def injected_path(self):
        p = np.array(self.base_path, float)
        p[self.redesign_period - 1:] += self.delta_matrix()
        return p

    def parameter_names(self):
        K = np.asarray(self.base_path).shape[1]
        post = range(self.redesign_period, self.length + 1)
        return [f"{e}:t{t}:cat{k + 1}" for e in self.estimators for t in post for k in range(K)]

    def true_values(self):
        return np.tile(self.delta_matrix().ravel(), len(self.estimators))


def _alr_panel(values, n, TR):
    T = values.shape[0]
    return TransformedPanel("alr", values, np.asarray(n, float), TR, tuple(range(1, T + 1)))


def fix_parameters(model, variances):
    """Copy of ``model`` with hyperparameters replaced by fixed variances.

    ``variances`` follows the order of ``model.param_names``; zeros allowed.
    """
    var = np.append(np.asarray(variances, float), 1.0)
    if var.size != model.n_params + 1 or np.any(var < 0):
        raise ValueError("need one non-negative variance per hyperparameter")
    scale = model.obs_var_scale * var[model.obs_var_param]
    q = np.array(model.state_cov)
    idx = np.nonzero(model.state_var_param >= 0)[0]
    q[idx, idx] += var[model.state_var_param[idx]]
    m, (n, p) = model.num_states, scale.shape
    return replace(model, obs_var_scale=scale, obs_var_param=np.full((n, p), -1),
                   state_var_param=np.full(m, -1), state_cov=q, param_names=())


def simulate_from_model(model, theta, beta, rng, level=None, slope=None):
    """Observations from the unconditional law of ``model`` at ``theta``.

    The pre-sample state carries ``level``, ``slope`` and the coefficients
    ``beta`` as fixed constants. ``theta`` may contain ``-inf`` for zero
    variances. Returns a ``T x p`` matrix.
    """
    fixed = fix_parameters(model, np.exp(np.asarray(theta, float)))
    p = model.num_obs
    a0 = np.zeros(model.num_states)
    names = model.state_names
    lv = np.zeros(p) if level is None else np.asarray(level, float)
    sl = np.zeros(p) if slope is None else np.asarray(slope, float)
    b = np.asarray(beta, float)
    for k in range(p):
        a0[names.index(f"level[{k + 1}]")] = lv[k] - sl[k]
        a0[names.index(f"slope[{k + 1}]")] = sl[k]
    for k, i in enumerate(model.state_index("beta[")):
        a0[i] = b[k]
    _, y = simulate(fixed, (), a0, rng)
    return y


def simulate_multinomial(p_path, n_path, delta, redesign_period, rng):
    """Proportions (fractions) from multinomial draws around ``p_path``.

    ``p_path`` is ``T x K`` in fractions, ``delta`` a K-vector or one row per
    post-redesign period, also in fractions.
    """
    p = np.array(p_path, float)
    T, K = p.shape
    d = np.atleast_2d(np.asarray(delta, float))
    p[redesign_period - 1:] += d if d.shape[0] > 1 else np.repeat(d, T - redesign_period + 1, axis=0)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p + delta leaves [0, 1]")
    n = np.asarray(n_path, dtype=np.int64)
    out = np.empty((T, K))
    for t in range(T):
        pt = p[t] / p[t].sum()
        out[t] = rng.multinomial(n[t], pt) / n[t]
    return out


def _scenario_sizes(sc, rng):
    if sc.sample_size_rule == "actual":
        return np.asarray(sc.sample_sizes, float)
    lo, hi = int(min(sc.sample_sizes)), int(max(sc.sample_sizes))
    return rng.integers(lo, hi + 1, size=sc.length).astype(float)


def _run_model_replicate(sc, r):
    rng = replicate_rng(sc.seed, r)
    n = _scenario_sizes(sc, rng)
    T, TR, p = sc.length, sc.redesign_period, len(sc.beta)
    variant = ModelVariant("M3")
    spec = InterventionSpec("level", "after")
    model = build_m3(_alr_panel(np.zeros((T, p)), n, TR), spec, variant)
    with np.errstate(divide="ignore"):
        theta = np.log(np.array([s ** 2 for s in sc.sigma_slope] + [sc.sigma_eps ** 2]))
    level = alr_forward(np.asarray(sc.base_composition, float))
    y = simulate_from_model(model, theta, sc.beta, rng, level=level, slope=sc.initial_slope)
    fit = fit_mle(model, y, n_starts=sc.n_starts)
    est = extract_discontinuities(fit, spec, variant)
    return np.concatenate([fit.std_devs, est.beta]), fit.converged, fit.grad_norm


def _run_multinomial_replicate(sc, r):
    rng = replicate_rng(sc.seed, r)
    TR = sc.redesign_period
    frac = simulate_multinomial(np.asarray(sc.base_path, float) / 100, sc.sample_sizes,
                                sc.delta_matrix() / 100, TR, rng)
    pct = frac * 100
    pct = pct / pct.sum(axis=1, keepdims=True) * 100
    panel = CompositionalPanel((), pct, np.asarray(sc.sample_sizes, float), TR)
    spec = InterventionSpec("level", "after")
    vals, ok, gnorm = [], True, 0.0
    for name in sc.estimators:
        variant = ModelVariant(name)
        model, y = build_model(panel, variant, spec)
        fit = fit_mle(model, y, n_starts=sc.n_starts)
        ok = ok and fit.converged
        gnorm = max(gnorm, fit.grad_norm)
        est = extract_discontinuities(fit, spec, variant)
        if variant.scale == "original":
            d = np.repeat(est.beta[None, :], sc.length - TR + 1, axis=0)
        else:
            adj = adjust_values(pct, est, "after", 100.0)
            d = (pct - adj)[TR - 1:]
        vals.append(d.ravel())
    return np.concatenate(vals), ok, gnorm


def run_replicate(scenario, r):
    """``(estimates, converged, gradient norm)`` for replicate ``r``.

    Failures give ``(None, False, nan)``; the gradient norm is the largest
    over the fits of the replicate.
    """
    try:
        if scenario.kind == "model":
            return _run_model_replicate(scenario, r)
        return _run_multinomial_replicate(scenario, r)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.debug("replicate %d failed: %s", r, exc)
        return None, False, float("nan")


def _run_chunk(args):
    scenario, rs = args
    return [run_replicate(scenario, r) for r in rs]


@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations; merges pairwise."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x):
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[0] == 0:
            return cls(0, np.zeros(x.shape[1]), np.zeros(x.shape[1]))
        # shifting by the first row keeps identical rows exact
        d = x - x[0]
        dm = d.mean(axis=0)
        return cls(x.shape[0], x[0] + dm, ((d - dm) ** 2).sum(axis=0))

    def merge(self, other):
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * (other.count / n)
        m2 = self.m2 + other.m2 + d * d * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def sd(self):
        if self.count < 2:
            return None
        return np.sqrt(self.m2 / (self.count - 1))


def pairwise_moments(x, leaf=64):
    """Moments of the rows of ``x`` by a balanced merge tree."""
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] <= leaf:
        return Moments.of(x)
    h = x.shape[0] // 2
    return pairwise_moments(x[:h], leaf).merge(pairwise_moments(x[h:], leaf))


@dataclass(frozen=True)
class SimulationSummary:
    scenario: str
    names: tuple
    true_values: np.ndarray
    count: int
    mean: np.ndarray
    sd: np.ndarray | None
    replicates: int
    failures: int
    histograms: dict = field(default_factory=dict)
    seed: int = 0
    rng: str = RNG_ALGORITHM
    samples: np.ndarray | None = field(default=None, repr=False)
    grad_norms: np.ndarray | None = field(default=None, repr=False)

    def mc_se(self):
        if self.sd is None:
            return None
        return self.sd / math.sqrt(self.count)

    def row(self, name):
        i = self.names.index(name)
        return self.mean[i], (None if self.sd is None else self.sd[i])


def summarize_resample(estimates, names=None, bins=30, true_values=None, scenario="",
                       replicates=None, failures=0, seed=0, keep_samples=False):
    """Resample mean and SD per column, plus histogram counts per column."""
    x = np.atleast_2d(np.asarray(estimates, float))
    R, P = x.shape
    names = tuple(names) if names is not None else tuple(f"param{j + 1}" for j in range(P))
    mom = pairwise_moments(x)
    hist = {}
    if R and bins:
        for j, nm in enumerate(names):
            counts, edges = np.histogram(x[:, j], bins=bins)
            hist[nm] = (edges, counts)
    tv = np.full(P, np.nan) if true_values is None else np.asarray(true_values, float)
    return SimulationSummary(scenario=scenario, names=names, true_values=tv, count=R, mean=mom.mean,
                             sd=mom.sd, replicates=R if replicates is None else replicates,
                             failures=failures, histograms=hist, seed=seed,
                             samples=x if keep_samples else None)


def run_study(scenario, replicates=None, seed=None, workers=1, bins=30, chunk=25):
    """Generate, fit and summarize ``replicates`` series for ``scenario``.

    Non-converged or failed replicates are excluded from the summary and
    counted; more than 20% failures is an error.
    """
    R = scenario.replicates if replicates is None else int(replicates)
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    if R < 1:
        raise ValueError("need at least one replicate")
    batches = [(scenario, range(i, min(i + chunk, R))) for i in range(0, R, chunk)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [res for part in ex.map(_run_chunk, batches) for res in part]
    else:
        results = [res for b in batches for res in _run_chunk(b)]
    kept = [(v, g) for v, ok, g in results if ok and v is not None and np.all(np.isfinite(v))]
    good = [v for v, _ in kept]
    failures = R - len(good)
    if failures > MAX_FAILURE_RATE * R:
        raise RuntimeError(f"{failures} of {R} replicates failed (limit {MAX_FAILURE_RATE:.0%})")
    names = scenario.parameter_names()
    est = np.array(good).reshape(len(good), len(names))
    summary = summarize_resample(est, names, bins, scenario.true_values(), scenario.name, R, failures,
                                 scenario.seed, keep_samples=True)
    return replace(summary, grad_norms=np.array([g for _, g in kept]))
