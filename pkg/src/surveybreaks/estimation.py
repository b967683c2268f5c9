"""Maximum likelihood fitting and discontinuity extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .models import build_intervention_regressor
from .statespace import LoglikEvaluator, filter_and_smooth

log = logging.getLogger(__name__)

THETA_MIN = -30.0
THETA_MAX = 25.0
GRAD_STEP = 1e-6
CHECK_STEP = 1e-5
CHECK_TOL = 1e-3
START_MULTIPLIERS = ((1.0, 1.0), (0.1, 0.1), (10.0, 10.0), (0.1, 10.0), (10.0, 0.1))
Z_05 = 1.959963984540054
Z_01 = 2.5758293035489004


@dataclass(frozen=True, eq=False)
class FitResult:
    model: object
    observations: np.ndarray
    theta: np.ndarray
    loglik: float
    converged: bool
    message: str
    iterations: int
    n_evals: int
    gradient: np.ndarray
    at_bound: np.ndarray
    output: object
    starts: tuple = field(default=(), repr=False)

    @property
    def grad_norm(self):
        free = ~self.at_bound
        return float(np.max(np.abs(self.gradient[free]))) if free.any() else 0.0

    @property
    def variances(self):
        v = np.exp(self.theta)
        return np.where(self.at_bound, 0.0, v)

    @property
    def std_devs(self):
        return np.sqrt(self.variances)

    def hyperparameters(self):
        return dict(zip(self.model.param_names, self.std_devs))


def fd_gradient(f, theta, step):
    """Central-difference gradient."""
    theta = np.asarray(theta, float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        g[i] = (f(theta + e) - f(theta - e)) / (2 * step)
    return g


def heuristic_start(model, y):
    """Rough variance scales for each hyperparameter from the data.

    Measurement variances: half the variance of first differences times the
    mean multiplier inverse; slope and seasonal variances: a tenth of the
    first-difference variance. Only pre-redesign periods are used when the
    design marks them (all-zero intervention columns).
    """
    y = np.asarray(y, float).reshape(model.n_periods, model.num_obs)
    names = model.param_names
    coef = [i for i, s in enumerate(model.state_names) if "beta" in s]
    if coef:
        active = np.any(model.design[:, :, coef] != 0, axis=(1, 2))
        pre = np.nonzero(~active)[0]
        if pre.size >= 3:
            y = y[pre[0]:pre[-1] + 1]
    dy = np.diff(y, axis=0)
    dvar = np.nanvar(dy, axis=0) if dy.shape[0] > 1 else np.ones(y.shape[1])
    dvar = np.where(np.isfinite(dvar) & (dvar > 0), dvar, 1.0)
    out = np.empty(len(names))
    for j in range(len(names)):
        obs_mask = model.obs_var_param == j
        if obs_mask.any():
            cols = np.nonzero(obs_mask.any(axis=0))[0]
            scale = model.obs_var_scale[obs_mask].mean()
            out[j] = 0.5 * dvar[cols].mean() / scale
        else:
            out[j] = 0.1 * dvar.mean()
    return np.log(np.maximum(out, 1e-12))


def _start_points(model, y, n_starts):
    base = heuristic_start(model, y)
    is_obs = np.array([np.any(model.obs_var_param == j) for j in range(model.n_params)])
    starts = []
    for ms, mo in START_MULTIPLIERS[:max(1, n_starts)]:
        mult = np.where(is_obs, mo, ms)
        starts.append(np.clip(base + np.log(mult), THETA_MIN + 1, THETA_MAX - 1))
    return starts


def _optimize(evaluator, theta0, maxiter):
    n_evals = [0]

    def negll(th):
        n_evals[0] += 1
        v = evaluator(th)
        return -v if np.isfinite(v) else 1e100

    def fun(th):
        f = negll(th)
        if f >= 1e100:
            return f, np.zeros_like(th)
        g = fd_gradient(negll, th, GRAD_STEP)
        g = np.where(np.abs(g) < 1e90, g, 0.0)
        return f, g

    bounds = [(THETA_MIN, THETA_MAX)] * len(theta0)
    res = optimize.minimize(fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": maxiter, "gtol": 1e-6, "ftol": 1e-10, "maxcor": 20})
    return res, n_evals[0]


def fit_mle(model, observations, init=None, n_starts=5, maxiter=500):
    """Maximize the exact diffuse log-likelihood over log-variances.

    Uses a bounded quasi-Newton method (L-BFGS-B) with central-difference
    gradients. Log-variances are bounded below at ``THETA_MIN`` (reported
    as a zero variance). Starts are tried in order and the best optimum kept;
    ties go to the earlier start.
    """
    y = np.asarray(observations, float)
    evaluator = LoglikEvaluator(model, y)
    if model.n_params == 0:
        theta = np.zeros(0)
        out = filter_and_smooth(model, y, theta)
        return FitResult(model, y, theta, out.loglik, True, "no free parameters", 0, 1,
                         np.zeros(0), np.zeros(0, bool), out)
    if init is not None:
        starts = [np.clip(np.asarray(init, float), THETA_MIN, THETA_MAX)]
        if not np.isfinite(evaluator(starts[0])):
            raise ValueError("log-likelihood cannot be evaluated at the initial theta")
    else:
        starts = _start_points(model, y, n_starts)

    best = None
    tried = []
    total_evals = 0
    for i, th0 in enumerate(starts):
        res, nev = _optimize(evaluator, th0, maxiter)
        total_evals += nev
        ll = -float(res.fun)
        tried.append((th0, ll, np.array(res.x)))
        if best is None or ll > best[1]:
            best = (res, ll, i)
    res, ll, _ = best
    if not np.isfinite(ll) or ll <= -1e99:
        raise ValueError("log-likelihood could not be evaluated at any start point")
    theta = np.array(res.x)
    at_bound = (theta <= THETA_MIN + 1e-8) | (theta >= THETA_MAX - 1e-8)
    grad = fd_gradient(evaluator, theta, CHECK_STEP)
    free = ~at_bound
    gnorm = float(np.max(np.abs(grad[free]))) if free.any() else 0.0
    converged = bool(np.isfinite(gnorm) and gnorm < CHECK_TOL)
    if not converged:
        log.warning("optimizer stopped with gradient norm %.3g (%s)", gnorm, res.message)
    out = filter_and_smooth(model, y, theta)
    return FitResult(model, y, theta, out.loglik, converged, str(res.message), int(res.nit),
                     total_evals, grad, at_bound, out, tuple(tried))


def significance_flag(z):
    z = abs(z)
    if z > Z_01:
        return "**"
    if z > Z_05:
        return "*"
    return ""


@dataclass(frozen=True, eq=False)
class DiscontinuityEstimate:
    """Intervention coefficients with standard errors on the analysis scale.

    ``shift`` holds, per period and series, the amount to subtract from the
    observed series (on the analysis scale) to adjust it in ``direction``.
    """

    beta: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    scale: str
    kind: str
    direction: str
    delta: np.ndarray
    shift: np.ndarray
    redesign_period: int
    categories: tuple = ()
    reference: int | None = None
    variant: str = ""

    @property
    def z(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.beta / self.se, np.inf * np.sign(self.beta))

    @property
    def flags(self):
        return tuple(significance_flag(z) for z in self.z)

    def implied_shift(self):
        """``beta_k * delta_t`` for every period (level and slope kinds)."""
        return self.delta[:, None] * self.beta[None, :]


def extract_discontinuities(fit, spec, variant=None):
    """Intervention effects from the smoothed states of a fitted model.

    ``variant`` (a :class:`ModelVariant`) sets the analysis scale and alr
    reference; without it the scale is taken as untransformed.
    """
    model, out = fit.model, fit.output
    scale = variant.scale if variant is not None else "original"
    reference = None
    if scale == "alr":
        K = model.num_obs + 1
        reference = K - 1 if variant.reference_category is None else int(variant.reference_category)
    T = model.n_periods
    if spec.kind == "seasonal":
        idx = model.state_index("season_beta")
    else:
        idx = model.state_index("beta[")
    if not idx:
        raise ValueError("model has no intervention states")
    idx = np.array(idx)
    last = out.smoothed_mean[-1]
    if spec.kind == "seasonal":
        # coefficients are the current seasonal intervention pattern states
        beta = last[idx]
        cov = out.smoothed_cov[-1][np.ix_(idx, idx)]
        effect = np.einsum("tpm,tm->tp", model.design[:, :, idx], out.smoothed_mean[:, idx])
        TR_mask = np.any(model.design[:, :, idx] != 0, axis=(1, 2))
        delta = TR_mask.astype(float)
        TR = int(np.argmax(TR_mask)) + 1
        # pattern each period would carry under the new design
        pattern = np.zeros_like(effect)
        for t in range(T):
            zt = model.design[t][:, idx]
            if not TR_mask[t]:
                zt = _seasonal_loading(model, idx)
            pattern[t] = zt @ out.smoothed_mean[t, idx]
        shift = effect if spec.adjust_direction == "after" else -(pattern * (1 - delta[:, None]))
    else:
        beta = last[idx]
        cov = out.smoothed_cov[-1][np.ix_(idx, idx)]
        TR = _redesign_from_design(model, idx)
        delta = build_intervention_regressor(spec.kind, TR, T, spec.adjust_direction)
        if spec.kind == "level" and spec.adjust_direction == "before":
            shift = (delta - 1.0)[:, None] * beta[None, :]
        else:
            shift = delta[:, None] * beta[None, :]
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    cats = tuple(model.series_names)
    return DiscontinuityEstimate(beta=beta, se=se, cov=cov, scale=scale, kind=spec.kind,
                                 direction=spec.adjust_direction, delta=delta, shift=shift,
                                 redesign_period=TR, categories=cats, reference=reference,
                                 variant=variant.name if variant is not None else "")


def _seasonal_loading(model, idx):
    # loading of the intervention states with delta = 1: the seasonal part of
    # the design for the ordinary seasonal block has the same pattern
    K = model.num_obs
    ns = len(idx) // K
    zt = np.zeros((K, len(idx)))
    for k in range(K):
        zt[k, k * ns] = 1.0
    return zt


def _redesign_from_design(model, idx):
    active = np.any(model.design[:, :, idx] != 0, axis=(1, 2))
    if active.any():
        first = int(np.argmax(active))
        # slope/before regressor is nonzero only before the redesign
        if first == 0:
            return int(np.argmin(active)) + 1
        return first + 1
    raise ValueError("intervention regressor is zero everywhere")


@dataclass(frozen=True)
class NaiveDifference:
    difference: np.ndarray
    se: np.ndarray
    categories: tuple

    @property
    def z(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, self.difference / self.se, 0.0)

    @property
    def flags(self):
        return tuple(significance_flag(z) for z in self.z)


def naive_difference(panel, standard_errors=None):
    """Change between the last old-design and first new-design period.

    Works on the percentage scale. Standard errors come from
    ``standard_errors`` (or the panel's), else from the binomial formula
    ``sqrt(y (100 - y) / n)``.
    """
    TR = panel.redesign_period
    if TR < 2:
        raise ValueError("need a period before the redesign")
    y = panel.percent()
    before, after = y[TR - 2], y[TR - 1]
    se = standard_errors if standard_errors is not None else panel.standard_errors
    if se is not None:
        se = np.asarray(se, float) * (100.0 / panel.unit if standard_errors is None else 1.0)
        se_b, se_a = se[TR - 2], se[TR - 1]
    else:
        n = panel.sample_sizes
        if n is None:
            raise ValueError("need standard errors or sample sizes")
        se_b = np.sqrt(before * (100 - before) / n[TR - 2])
        se_a = np.sqrt(after * (100 - after) / n[TR - 1])
    return NaiveDifference(after - before, np.sqrt(se_b ** 2 + se_a ** 2), tuple(panel.categories))
