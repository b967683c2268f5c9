"""Compiled recursions for the exact diffuse Kalman filter and smoother.

Observations are processed one element at a time (the univariate treatment),
which needs a diagonal measurement covariance and handles partially diffuse
periods without special cases. Two state covariances are carried: ``pstar``
for the proper part and ``pinf`` for the diffuse part.
"""

import numpy as np
from numba import njit

LOG2PI = np.log(2.0 * np.pi)

# element kinds recorded by the forward pass
MISSING = 0
REGULAR = 1
DIFFUSE = 2

# status codes
OK = 0
SINGULAR = 1
UNRESOLVED = 2

DIFFUSE_TOL = 1e-8
SINGULAR_RTOL = 1e-12


@njit(cache=True)
def _symmetrize(P):
    m = P.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (P[i, j] + P[j, i])
            P[i, j] = v
            P[j, i] = v


@njit(cache=True)
def _max_abs(P):
    out = 0.0
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            v = abs(P[i, j])
            if v > out:
                out = v
    return out


@njit(cache=True)
def _matvec(P, z, out):
    m = P.shape[0]
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += P[i, j] * z[j]
        out[i] = s


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def _sandwich(T, P, work, Q, add_q):
    # P <- T P T' (+ Q), using work as scratch
    m = P.shape[0]
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(m):
                s += T[i, k] * P[k, j]
            work[i, j] = s
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(m):
                s += work[i, k] * T[j, k]
            P[i, j] = s + Q[i, j] if add_q else s


@njit(cache=True)
def _max_innovation_var(z_t, h_t, y_t, pstar, buf):
    # largest diagonal entry of Z P Z' + H over observed elements
    p = z_t.shape[0]
    out = 0.0
    for i in range(p):
        if np.isnan(y_t[i]):
            continue
        _matvec(pstar, z_t[i], buf)
        f = _dot(z_t[i], buf) + h_t[i]
        if f > out:
            out = f
    return out


@njit(cache=True)
def _next_element(z_t, pinf, done, diffuse, buf):
    # pivot on the largest diffuse variance; natural order otherwise
    p = z_t.shape[0]
    first = -1
    best = -1
    best_v = DIFFUSE_TOL
    for j in range(p):
        if done[j]:
            continue
        if first < 0:
            first = j
            if not diffuse:
                return j
        _matvec(pinf, z_t[j], buf)
        rel = _dot(z_t[j], buf)
        if rel > best_v:
            best_v = rel
            best = j
    return best if best >= 0 else first


@njit(cache=True)
def diffuse_filter(y, Z, h, T, Q, a1, pstar1, pinf1, store):
    """Run the exact diffuse filter.

    Returns ``(status, bad_t, loglik, d, n_diffuse_obs, a_pred, pstar_pred,
    pinf_pred, a_filt, p_filt, v, fstar, finf, mstar, minf, kind, order)``.
    When ``store`` is false the per-period arrays have zero length. While the
    prior is still diffuse, elements are taken in order of decreasing
    diffuse variance; ``order[t]`` records the sequence used.
    """
    n, p = y.shape
    m = T.shape[0]
    ns = n if store else 0
    a_pred = np.zeros((ns, m))
    pstar_pred = np.zeros((ns, m, m))
    pinf_pred = np.zeros((ns, m, m))
    a_filt = np.zeros((ns, m))
    p_filt = np.zeros((ns, m, m))
    v_out = np.full((ns, p), np.nan)
    fstar_out = np.full((ns, p), np.nan)
    finf_out = np.zeros((ns, p))
    mstar_out = np.zeros((ns, p, m))
    minf_out = np.zeros((ns, p, m))
    kind = np.zeros((ns, p), dtype=np.int8)
    order = np.full((ns, p), -1, dtype=np.int64)

    a = a1.copy()
    pstar = pstar1.copy()
    pinf = pinf1.copy()
    diffuse = _max_abs(pinf) > DIFFUSE_TOL
    if not diffuse:
        pinf[:, :] = 0.0
    loglik = 0.0
    d = 0
    n_diffuse_obs = 0
    ms = np.zeros(m)
    mi = np.zeros(m)
    work = np.zeros((m, m))
    abuf = np.zeros(m)
    done = np.zeros(p, dtype=np.bool_)

    for t in range(n):
        if store:
            a_pred[t] = a
            pstar_pred[t] = pstar
            pinf_pred[t] = pinf
        fscale = _max_innovation_var(Z[t], h[t], y[t], pstar, ms)
        for j in range(p):
            done[j] = np.isnan(y[t, j])
        for step in range(p):
            i = _next_element(Z[t], pinf, done, diffuse, mi)
            if i < 0:
                break
            done[i] = True
            if store:
                order[t, step] = i
            yi = y[t, i]
            z = Z[t, i]
            vi = yi - _dot(z, a)
            _matvec(pstar, z, ms)
            fs = _dot(z, ms) + h[t, i]
            if diffuse:
                _matvec(pinf, z, mi)
                fi = _dot(z, mi)
            else:
                fi = 0.0
            if diffuse and fi > DIFFUSE_TOL * (1.0 + _dot(z, z)):
                # diffuse element update
                c = fs / (fi * fi)
                for r in range(m):
                    a[r] += mi[r] / fi * vi
                    for q in range(m):
                        pstar[r, q] += (mi[r] * mi[q] * c
                                        - (ms[r] * mi[q] + mi[r] * ms[q]) / fi)
                        pinf[r, q] -= mi[r] * mi[q] / fi
                loglik -= 0.5 * (LOG2PI + np.log(fi))
                n_diffuse_obs += 1
                if store:
                    kind[t, i] = DIFFUSE
                    finf_out[t, i] = fi
                    minf_out[t, i] = mi
            else:
                if fs <= SINGULAR_RTOL * fscale or fs <= 0.0:
                    return (SINGULAR, t, loglik, d, n_diffuse_obs, a_pred,
                            pstar_pred, pinf_pred, a_filt, p_filt, v_out,
                            fstar_out, finf_out, mstar_out, minf_out, kind, order)
                # expanded Joseph form: (I - k z') P (I - k z')' + k h k'
                for r in range(m):
                    kr = ms[r] / fs
                    a[r] += kr * vi
                    for q in range(m):
                        kq = ms[q] / fs
                        pstar[r, q] += fs * kr * kq - kr * ms[q] - ms[r] * kq
                loglik -= 0.5 * (LOG2PI + np.log(fs) + vi * vi / fs)
                if store:
                    kind[t, i] = REGULAR
            if store:
                v_out[t, i] = vi
                fstar_out[t, i] = fs
                mstar_out[t, i] = ms
        _symmetrize(pstar)
        if store:
            a_filt[t] = a
            p_filt[t] = pstar
        if diffuse:
            _symmetrize(pinf)
            d = t + 1
            if _max_abs(pinf) <= DIFFUSE_TOL:
                pinf[:, :] = 0.0
                diffuse = False
        _matvec(T, a, abuf)
        a[:] = abuf
        _sandwich(T, pstar, work, Q, True)
        _symmetrize(pstar)
        if diffuse:
            _sandwich(T, pinf, work, Q, False)

    status = UNRESOLVED if diffuse else OK
    return (status, n, loglik, d, n_diffuse_obs, a_pred, pstar_pred,
            pinf_pred, a_filt, p_filt, v_out, fstar_out, finf_out,
            mstar_out, minf_out, kind, order)


@njit(cache=True)
def diffuse_smoother(Z, T, a_pred, pstar_pred, pinf_pred, v, fstar, finf,
                     mstar, minf, kind, order):
    """Backward pass matching :func:`diffuse_filter` output.

    Carries the exact initial smoothing quantities r0, r1, N0, N1, N2; in the
    non-diffuse periods r1, N1 and N2 stay zero.
    """
    n, p = v.shape
    m = T.shape[0]
    mean = np.zeros((n, m))
    cov = np.zeros((n, m, m))
    r0 = np.zeros(m)
    r1 = np.zeros(m)
    N0 = np.zeros((m, m))
    N1 = np.zeros((m, m))
    N2 = np.zeros((m, m))
    eye = np.eye(m)
    for t in range(n - 1, -1, -1):
        for step in range(p - 1, -1, -1):
            i = order[t, step]
            if i < 0:
                continue
            kd = kind[t, i]
            if kd == MISSING:
                continue
            z = Z[t, i]
            zz = np.outer(z, z)
            if kd == DIFFUSE:
                fi = finf[t, i]
                fs = fstar[t, i]
                k0 = minf[t, i] / fi
                k1 = mstar[t, i] / fi - minf[t, i] * (fs / (fi * fi))
                L0 = eye - np.outer(k0, z)
                L1 = -np.outer(k1, z)
                r1_new = z * (v[t, i] / fi) + L0.T @ r1 + L1.T @ r0
                r0 = L0.T @ r0
                r1 = r1_new
                N2 = (-zz * (fs / (fi * fi)) + L0.T @ N2 @ L0
                      + L0.T @ N1 @ L1 + L1.T @ N1 @ L0 + L1.T @ N0 @ L1)
                N1 = (zz / fi + L0.T @ N1 @ L0 + L1.T @ N0 @ L0
                      + L0.T @ N0 @ L1)
                N0 = L0.T @ N0 @ L0
            else:
                fs = fstar[t, i]
                k = mstar[t, i] / fs
                L = eye - np.outer(k, z)
                r0 = z * (v[t, i] / fs) + L.T @ r0
                r1 = L.T @ r1
                N0 = zz / fs + L.T @ N0 @ L
                N1 = L.T @ N1 @ L
                N2 = L.T @ N2 @ L
        Ps = pstar_pred[t]
        Pi = pinf_pred[t]
        mean[t] = a_pred[t] + Ps @ r0 + Pi @ r1
        PiN1Ps = Pi @ N1 @ Ps
        V = Ps - Ps @ N0 @ Ps - PiN1Ps - PiN1Ps.T - Pi @ N2 @ Pi
        _symmetrize(V)
        cov[t] = V
        r0 = T.T @ r0
        r1 = T.T @ r1
        N0 = T.T @ N0 @ T
        N1 = T.T @ N1 @ T
        N2 = T.T @ N2 @ T
    return mean, cov
