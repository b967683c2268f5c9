"""Linear Gaussian state-space models with exact diffuse initialization.

The measurement equation is ``y_t = Z_t a_t + eps_t`` and the transition is
``a_t = T a_{t-1} + eta_t``. The diffuse prior is placed on the pre-sample
state ``a_0``, so the first state is ``a_1 = T a_0 + eta_1``; this keeps
restrictions that live in a singular transition matrix (zero-sum intervention
coefficients) valid from the first period on.

Variances are mapped from a vector of free log-variances ``theta``: every
measurement variance is ``scale[t, i] * exp(theta[j])`` (or just ``scale``
when the entry is fixed) and every diagonal state variance is ``exp(theta[j])``
added to a fixed covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels


class StateSpaceError(ValueError):
    """Base class for filter failures."""


class NonFiniteObservationError(StateSpaceError):
    def __init__(self, period, element):
        super().__init__(f"non-finite observation at period {period}, element {element}")
        self.period = period
        self.element = element


class SingularInnovationError(StateSpaceError):
    def __init__(self, period):
        super().__init__(f"innovation covariance numerically singular at period {period}")
        self.period = period


class DiffuseUnresolvedError(StateSpaceError):
    def __init__(self):
        super().__init__("diffuse initialization not resolved by the end of the series")


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Time-varying design, time-invariant transition, diagonal noise.

    Parameters
    ----------
    design : (n, p, m) array
        Measurement design ``Z_t`` for every period.
    transition : (m, m) array
    obs_var_scale : (n, p) array
        Multiplier of the mapped measurement variance (``1/n_t`` times an
        optional squared standard error). For fixed entries it is the variance.
    obs_var_param : (n, p) int array
        Index into ``theta`` for each measurement variance, ``-1`` for fixed.
    state_var_param : (m,) int array
        Index into ``theta`` for each diagonal state variance, ``-1`` for none.
    state_cov : (m, m) array, optional
        Fixed part of the state disturbance covariance.
    diffuse_states : (m,) bool array, optional
        Pre-sample states with a diffuse prior. Defaults to all.
    initial_mean, initial_cov : optional
        Proper prior of the non-diffuse pre-sample states.
    """

    design: np.ndarray
    transition: np.ndarray
    obs_var_scale: np.ndarray
    obs_var_param: np.ndarray
    state_var_param: np.ndarray
    state_cov: np.ndarray | None = None
    diffuse_states: np.ndarray | None = None
    initial_mean: np.ndarray | None = None
    initial_cov: np.ndarray | None = None
    param_names: tuple = ()
    state_names: tuple = ()
    series_names: tuple = ()

    def __post_init__(self):
        design = _frozen(self.design)
        if design.ndim != 3:
            raise ValueError("design must have shape (n_periods, num_obs, num_states)")
        n, p, m = design.shape
        trans = _frozen(self.transition)
        if trans.shape != (m, m):
            raise ValueError(f"transition must be {m}x{m}, got {trans.shape}")
        scale = _frozen(self.obs_var_scale)
        if scale.shape != (n, p):
            raise ValueError(f"obs_var_scale must be {(n, p)}, got {scale.shape}")
        if np.any(scale < 0) or not np.all(np.isfinite(scale)):
            raise ValueError("obs_var_scale must be finite and non-negative")
        opar = _frozen(self.obs_var_param, dtype=np.int64)
        if opar.shape != (n, p):
            raise ValueError(f"obs_var_param must be {(n, p)}, got {opar.shape}")
        spar = _frozen(self.state_var_param, dtype=np.int64)
        if spar.shape != (m,):
            raise ValueError(f"state_var_param must have length {m}")
        qfix = _frozen(np.zeros((m, m)) if self.state_cov is None else self.state_cov)
        if qfix.shape != (m, m):
            raise ValueError("state_cov has wrong shape")
        _check_psd(qfix, "state_cov")
        mask = _frozen(np.ones(m, bool) if self.diffuse_states is None
                       else self.diffuse_states, dtype=bool)
        if mask.shape != (m,):
            raise ValueError("diffuse_states must have length num_states")
        a0 = _frozen(np.zeros(m) if self.initial_mean is None else self.initial_mean)
        p0 = _frozen(np.zeros((m, m)) if self.initial_cov is None else self.initial_cov)
        if a0.shape != (m,) or p0.shape != (m, m):
            raise ValueError("initial_mean/initial_cov have wrong shape")
        _check_psd(p0, "initial_cov")

        used = np.concatenate([opar.ravel(), spar])
        k = len(self.param_names) if self.param_names else (int(used.max()) + 1 if used.size and used.max() >= 0 else 0)
        if used.size and used.max() >= k:
            raise ValueError("hyperparameter index out of range")
        if np.any(used < -1):
            raise ValueError("hyperparameter indices must be >= -1")
        names = tuple(self.param_names) or tuple(f"theta[{i}]" for i in range(k))

        for name, val in [("design", design), ("transition", trans), ("obs_var_scale", scale),
                          ("obs_var_param", opar), ("state_var_param", spar),
                          ("state_cov", qfix), ("diffuse_states", mask),
                          ("initial_mean", a0), ("initial_cov", p0), ("param_names", names)]:
            object.__setattr__(self, name, val)

    @property
    def n_periods(self):
        return self.design.shape[0]

    @property
    def num_obs(self):
        return self.design.shape[1]

    @property
    def num_states(self):
        return self.design.shape[2]

    @property
    def n_params(self):
        return len(self.param_names)

    def state_index(self, prefix):
        """Indices of states whose name starts with ``prefix``."""
        return [i for i, s in enumerate(self.state_names) if s.startswith(prefix)]

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have length {self.n_params}, got {theta.shape[0]}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        return theta

    def obs_variances(self, theta):
        theta = self._check_theta(theta)
        var = np.append(np.exp(theta), 1.0)
        # index -1 picks the trailing 1.0
        return self.obs_var_scale * var[self.obs_var_param]

    def state_noise_cov(self, theta):
        theta = self._check_theta(theta)
        var = np.exp(theta)
        q = np.array(self.state_cov)
        idx = np.nonzero(self.state_var_param >= 0)[0]
        q[idx, idx] += var[self.state_var_param[idx]]
        return q

    def initial_moments(self, theta):
        """Mean, proper covariance and diffuse covariance of ``a_1``."""
        T = self.transition
        q = self.state_noise_cov(theta)
        d = np.diag(self.diffuse_states.astype(float))
        a1 = T @ self.initial_mean
        pstar1 = T @ self.initial_cov @ T.T + q
        pinf1 = T @ d @ T.T
        return a1, pstar1, pinf1

    def truncate(self, n):
        """Same model restricted to the first ``n`` periods."""
        return replace(self, design=self.design[:n], obs_var_scale=self.obs_var_scale[:n],
                       obs_var_param=self.obs_var_param[:n])


def _check_psd(a, name):
    if not np.allclose(a, a.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if a.size and np.linalg.eigvalsh(a).min() < -1e-10 * max(1.0, np.abs(a).max()):
        raise ValueError(f"{name} must be positive semidefinite")


@dataclass(frozen=True, eq=False)
class FilterSmootherOutput:
    """Filter and (optionally) smoother output for one model and data set.

    ``filtered_cov`` is the proper part of the filtered covariance; while the
    diffuse prior is still active (``t < diffuse_periods``) some directions
    have infinite variance and are tracked in ``predicted_diffuse_cov``.
    ``innovation_cov`` likewise excludes the diffuse part.
    """

    filtered_mean: np.ndarray
    filtered_cov: np.ndarray
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    predicted_diffuse_cov: np.ndarray
    innovations: np.ndarray
    innovation_cov: np.ndarray
    loglik: float
    diffuse_periods: int
    n_diffuse_obs: int
    smoothed_mean: np.ndarray | None = None
    smoothed_cov: np.ndarray | None = None
    _elements: tuple = field(default=(), repr=False)

    @property
    def n_periods(self):
        return self.filtered_mean.shape[0]


def _prepare(model, observations, theta):
    y = np.asarray(observations, dtype=float)
    if y.ndim == 1 and model.num_obs == 1:
        y = y[:, None]
    if y.shape != (model.n_periods, model.num_obs):
        raise ValueError(f"observations must have shape {(model.n_periods, model.num_obs)}, got {y.shape}")
    bad = np.argwhere(np.isinf(y))
    if bad.size:
        raise NonFiniteObservationError(int(bad[0, 0]), int(bad[0, 1]))
    h = model.obs_variances(theta)
    q = model.state_noise_cov(theta)
    a1, pstar1, pinf1 = model.initial_moments(theta)
    return y, h, q, a1, pstar1, pinf1


def _raise_status(status, t):
    if status == _kernels.SINGULAR:
        raise SingularInnovationError(int(t))
    if status == _kernels.UNRESOLVED:
        raise DiffuseUnresolvedError()


def kalman_filter(model, observations, theta=()):
    """Exact diffuse Kalman filter.

    ``observations`` has one row per period (shape ``(n, p)``); ``nan`` marks a
    missing element. Returns the filtered part of the output together with the
    exact diffuse log-likelihood.
    """
    y, h, q, a1, pstar1, pinf1 = _prepare(model, observations, theta)
    Z = np.ascontiguousarray(model.design)
    T = np.ascontiguousarray(model.transition)
    (status, bad_t, loglik, d, ndiff, a_pred, ps_pred, pi_pred, a_filt, p_filt,
     v, fstar, finf, mstar, minf, kind, order) = _kernels.diffuse_filter(
        y, Z, h, T, q, a1, pstar1, pinf1, True)
    _raise_status(status, bad_t)

    innov = y - np.einsum("tpm,tm->tp", Z, a_pred)
    fcov = np.einsum("tpm,tmk,tqk->tpq", Z, ps_pred, Z)
    idx = np.arange(model.num_obs)
    fcov[:, idx, idx] += h
    miss = np.isnan(y)
    fcov[np.broadcast_to(miss[:, :, None], fcov.shape)] = np.nan
    fcov[np.broadcast_to(miss[:, None, :], fcov.shape)] = np.nan

    return FilterSmootherOutput(
        filtered_mean=a_filt, filtered_cov=p_filt, predicted_mean=a_pred,
        predicted_cov=ps_pred, predicted_diffuse_cov=pi_pred, innovations=innov,
        innovation_cov=fcov, loglik=float(loglik), diffuse_periods=int(d),
        n_diffuse_obs=int(ndiff), _elements=(v, fstar, finf, mstar, minf, kind, order))


def fixed_interval_smoother(model, filter_output):
    """Smoothed state means and covariances given the whole series."""
    out = filter_output
    if out.filtered_mean.shape != (model.n_periods, model.num_states) or not out._elements:
        raise ValueError("filter output does not match the model dimensions")
    v, fstar, finf, mstar, minf, kind, order = out._elements
    if v.shape != (model.n_periods, model.num_obs):
        raise ValueError("filter output does not match the model dimensions")
    mean, cov = _kernels.diffuse_smoother(
        np.ascontiguousarray(model.design), np.ascontiguousarray(model.transition),
        out.predicted_mean, out.predicted_cov, out.predicted_diffuse_cov,
        v, fstar, finf, mstar, minf, kind, order)
    # at the last period smoothing adds no information
    mean[-1] = out.filtered_mean[-1]
    cov[-1] = out.filtered_cov[-1]
    return replace(out, smoothed_mean=mean, smoothed_cov=cov)


def filter_and_smooth(model, observations, theta=()):
    return fixed_interval_smoother(model, kalman_filter(model, observations, theta))


def diffuse_loglik(model, observations, theta=()):
    """Exact diffuse log-likelihood; raises on filter failure."""
    y, h, q, a1, pstar1, pinf1 = _prepare(model, observations, theta)
    res = _kernels.diffuse_filter(y, np.ascontiguousarray(model.design), h,
                                  np.ascontiguousarray(model.transition),
                                  q, a1, pstar1, pinf1, False)
    _raise_status(res[0], res[1])
    return float(res[2])


class LoglikEvaluator:
    """Fast repeated likelihood evaluation for one model and data set.

    Used by the optimizer: failures give ``-inf`` instead of raising.
    """

    def __init__(self, model, observations):
        self.model = model
        self.y, *_ = _prepare(model, observations, np.zeros(model.n_params))
        self.Z = np.ascontiguousarray(model.design)
        self.T = np.ascontiguousarray(model.transition)

    def __call__(self, theta):
        m = self.model
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            return -np.inf
        h = m.obs_variances(theta)
        a1, pstar1, pinf1 = m.initial_moments(theta)
        q = m.state_noise_cov(theta)
        res = _kernels.diffuse_filter(self.y, self.Z, h, self.T, q, a1, pstar1, pinf1, False)
        if res[0] != _kernels.OK or not np.isfinite(res[2]):
            return -np.inf
        return float(res[2])


def simulate(model, theta, initial_state, rng):
    """Draw states and observations by forward recursion.

    ``initial_state`` is the pre-sample state ``a_0`` treated as a fixed
    constant (a diffuse prior cannot be sampled). Returns ``(states, y)``
    with shapes ``(n, m)`` and ``(n, p)``.
    """
    theta = model._check_theta(theta) if model.n_params else np.zeros(0)
    h = model.obs_variances(theta)
    q = model.state_noise_cov(theta)
    n, p, m = model.design.shape
    qchol = _psd_factor(q)
    a = np.asarray(initial_state, dtype=float).copy()
    if a.shape != (m,):
        raise ValueError(f"initial_state must have length {m}")
    states = np.empty((n, m))
    y = np.empty((n, p))
    for t in range(n):
        a = model.transition @ a + qchol @ rng.standard_normal(qchol.shape[1])
        states[t] = a
        y[t] = model.design[t] @ a + np.sqrt(h[t]) * rng.standard_normal(p)
    return states, y


def _psd_factor(q):
    # factor F with F F' = q that tolerates zero variances
    if np.allclose(q, np.diag(np.diag(q))):
        return np.diag(np.sqrt(np.clip(np.diag(q), 0.0, None)))
    w, u = np.linalg.eigh(q)
    return u * np.sqrt(np.clip(w, 0.0, None))
