"""Numba interior-point kernels for check-loss (pinball) regression.

The primal problem solved by :func:`ipm_fit` is

    min_theta  sum_i rho_{tau_i}(y_i - x_i' theta) + sum_j dpen_j * theta_j**2

with a per-row quantile vector ``tau`` (all entries equal for a plain fit;
mixed entries are used to fold L1 penalty rows into the design) and an
optional diagonal quadratic penalty ``dpen`` (the squared-L2 path).

The algorithm is a Mehrotra predictor-corrector on the bounded-dual LP
formulation: the dual variable d_i lives in [tau_i - 1, tau_i] and equals the
loss subgradient psi_tau(r_i) at the optimum.  Each iteration solves one p x p
normal-equation system (Cholesky), so a fit costs O(n p^2) per iteration.
Everything here is deterministic and allocation-local, hence thread-safe.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Fraction of the max feasible step actually taken (Koenker's beta).
_STEP_SHRINK = 0.99995


@njit(cache=True)
def _chol_factor(M, ridge, flag_tol):
    """In-place lower Cholesky of M + ridge*I.

    Returns 1 if any ridge-free pivot fell at or below ``flag_tol`` (the
    rank-deficiency signal; pass a negative flag_tol to disable).  Pivots are
    clamped positive so the factorization always completes.
    """
    p = M.shape[0]
    flagged = 0
    for j in range(p):
        s0 = M[j, j]
        for t in range(j):
            s0 -= M[j, t] * M[j, t]
        if s0 <= flag_tol:
            flagged = 1
        s = s0 + ridge
        if s <= 0.0:
            s = ridge if ridge > 0.0 else 1e-30
        M[j, j] = np.sqrt(s)
        for i in range(j + 1, p):
            s2 = M[i, j]
            for t in range(j):
                s2 -= M[i, t] * M[j, t]
            M[i, j] = s2 / M[j, j]
    return flagged


@njit(cache=True)
def _chol_solve(L, b, out):
    """Solve L L' out = b given the lower factor L."""
    p = L.shape[0]
    for i in range(p):
        s = b[i]
        for t in range(i):
            s -= L[i, t] * out[t]
        out[i] = s / L[i, i]
    for i in range(p - 1, -1, -1):
        s = out[i]
        for t in range(i + 1, p):
            s -= L[t, i] * out[t]
        out[i] = s / L[i, i]


@njit(cache=True)
def _max_step(x, dx, n):
    """Largest alpha in (0, 1] with x + alpha*dx >= 0 componentwise."""
    a = 1.0 / _STEP_SHRINK
    for i in range(n):
        if dx[i] < 0.0:
            r = -x[i] / dx[i]
            if r < a:
                a = r
    a *= _STEP_SHRINK
    if a > 1.0:
        a = 1.0
    return a


@njit(cache=True)
def ipm_fit(X, y, tau, dpen, tol, max_iter, ridge_eps):
    """Fit one check-loss regression.

    Parameters: X (n,p) C-contiguous, y (n,), tau (n,) per-row quantiles in
    (0,1), dpen (p,) nonnegative quadratic penalty weights, tol relative
    duality-gap target, max_iter iteration cap, ridge_eps normal-equation
    diagonal stabilizer.

    Returns (theta, objective_sum, iterations, converged, ridged) where
    objective_sum is the minimized criterion on the summed (not mean) scale.
    """
    n, p = X.shape
    quad = False
    for j in range(p):
        if dpen[j] > 0.0:
            quad = True
            break

    M = np.zeros((p, p))
    rhs = np.zeros(p)
    theta = np.zeros(p)

    # Least-squares start: cheap and scale-free enough for an interior point.
    for i in range(n):
        for a in range(p):
            xa = X[i, a]
            rhs[a] += xa * y[i]
            for b in range(a + 1):
                M[a, b] += xa * X[i, b]
    tr = 0.0
    for a in range(p):
        tr += M[a, a]
    init_ridge = 1e-8 * (tr / p + 1.0)
    for a in range(p):
        M[a, a] += dpen[a]
    # rank deficiency is judged on the Gram matrix here (the weighted systems
    # below are ill-conditioned by design near convergence); earlier ridged
    # pivots leak ~init_ridge into later ones, hence the 16x flag margin
    ridged = _chol_factor(M, init_ridge, 16.0 * init_ridge)
    _chol_solve(M, rhs, theta)

    ymax = 0.0
    for i in range(n):
        ay = abs(y[i])
        if ay > ymax:
            ymax = ay

    r = np.empty(n)
    u = np.empty(n)
    v = np.empty(n)
    d = np.zeros(n)
    z = np.empty(n)
    w = np.empty(n)
    qinv = np.empty(n)
    rhs1 = np.empty(n)
    dtheta = np.empty(p)
    dd = np.empty(n)
    du = np.empty(n)
    dv = np.empty(n)
    r3 = np.empty(n)
    r4 = np.empty(n)
    r2 = np.empty(p)
    rhs_t = np.empty(p)

    sabs = 0.0
    for i in range(n):
        s = y[i]
        for j in range(p):
            s -= X[i, j] * theta[j]
        r[i] = s
        sabs += abs(s)
    delta = 0.5 * sabs / n + 1e-3 * (1.0 + ymax)
    for i in range(n):
        u[i] = (r[i] if r[i] > 0.0 else 0.0) + delta
        v[i] = (-r[i] if r[i] < 0.0 else 0.0) + delta
        z[i] = tau[i]
        w[i] = 1.0 - tau[i]

    converged = 0
    it = 0
    while it < max_iter:
        it += 1
        gap = 0.0
        obj = 0.0
        for i in range(n):
            gap += u[i] * z[i] + v[i] * w[i]
            obj += tau[i] * u[i] + (1.0 - tau[i]) * v[i]
        for j in range(p):
            obj += dpen[j] * theta[j] * theta[j]
        if gap <= tol * (1.0 + abs(obj)):
            converged = 1
            break

        mu = gap / (2.0 * n)

        # residuals of the linearized KKT rows
        for i in range(n):
            s = y[i]
            for j in range(p):
                s -= X[i, j] * theta[j]
            rhs1[i] = s  # r1 + u - v collapses to y - X theta
        for j in range(p):
            s = -2.0 * dpen[j] * theta[j]
            for i in range(n):
                s += X[i, j] * d[i]
            r2[j] = s

        big = 1e14
        for i in range(n):
            q = u[i] / z[i] + v[i] / w[i]
            qi = 1.0 / q
            if qi > big:
                qi = big
            qinv[i] = qi

        for a in range(p):
            for b in range(a + 1):
                s = 0.0
                for i in range(n):
                    s += qinv[i] * X[i, a] * X[i, b]
                M[a, b] = s
            M[a, a] += 2.0 * dpen[a]
        _chol_factor(M, ridge_eps, -1.0)

        # affine (predictor) direction
        for j in range(p):
            s = r2[j]
            for i in range(n):
                s += X[i, j] * qinv[i] * rhs1[i]
            rhs_t[j] = s
        _chol_solve(M, rhs_t, dtheta)
        for i in range(n):
            s = rhs1[i]
            for j in range(p):
                s -= X[i, j] * dtheta[j]
            dd[i] = qinv[i] * s
            du[i] = -u[i] + u[i] * dd[i] / z[i]
            dv[i] = -v[i] - v[i] * dd[i] / w[i]

        ap = _max_step(u, du, n)
        a2 = _max_step(v, dv, n)
        if a2 < ap:
            ap = a2
        # dual: z moves by -dd, w moves by +dd
        ad = 1.0 / _STEP_SHRINK
        for i in range(n):
            if dd[i] > 0.0:
                rr = z[i] / dd[i]
                if rr < ad:
                    ad = rr
            elif dd[i] < 0.0:
                rr = -w[i] / dd[i]
                if rr < ad:
                    ad = rr
        ad *= _STEP_SHRINK
        if ad > 1.0:
            ad = 1.0

        gap_aff = 0.0
        for i in range(n):
            gap_aff += (u[i] + ap * du[i]) * (z[i] - ad * dd[i]) + (
                v[i] + ap * dv[i]
            ) * (w[i] + ad * dd[i])
        sig = gap_aff / gap
        sig = sig * sig * sig
        mu_t = sig * mu

        # corrector direction (reuses the factorization)
        for i in range(n):
            r3[i] = mu_t - u[i] * z[i] + du[i] * dd[i]
            r4[i] = mu_t - v[i] * w[i] - dv[i] * dd[i]
            s = y[i] - u[i] + v[i]
            for j in range(p):
                s -= X[i, j] * theta[j]
            rhs1[i] = s - r3[i] / z[i] + r4[i] / w[i]
        for j in range(p):
            s = r2[j]
            for i in range(n):
                s += X[i, j] * qinv[i] * rhs1[i]
            rhs_t[j] = s
        _chol_solve(M, rhs_t, dtheta)
        for i in range(n):
            s = rhs1[i]
            for j in range(p):
                s -= X[i, j] * dtheta[j]
            dd[i] = qinv[i] * s
            du[i] = (r3[i] + u[i] * dd[i]) / z[i]
            dv[i] = (r4[i] - v[i] * dd[i]) / w[i]

        ap = _max_step(u, du, n)
        a2 = _max_step(v, dv, n)
        if a2 < ap:
            ap = a2
        ad = 1.0 / _STEP_SHRINK
        for i in range(n):
            if dd[i] > 0.0:
                rr = z[i] / dd[i]
                if rr < ad:
                    ad = rr
            elif dd[i] < 0.0:
                rr = -w[i] / dd[i]
                if rr < ad:
                    ad = rr
        ad *= _STEP_SHRINK
        if ad > 1.0:
            ad = 1.0
        if quad:
            # the L2 term couples theta and d, so keep one common step
            ap = ap if ap < ad else ad
            ad = ap

        for j in range(p):
            theta[j] += ap * dtheta[j]
        for i in range(n):
            u[i] += ap * du[i]
            v[i] += ap * dv[i]
            d[i] += ad * dd[i]
            z[i] = tau[i] - d[i]
            w[i] = 1.0 - tau[i] + d[i]

    # exact criterion value at the returned point
    obj = 0.0
    for i in range(n):
        s = y[i]
        for j in range(p):
            s -= X[i, j] * theta[j]
        obj += s * (tau[i] - (1.0 if s <= 0.0 else 0.0))
    for j in range(p):
        obj += dpen[j] * theta[j] * theta[j]
    return theta, obj, it, converged, ridged


@njit(cache=True)
def fit_subsets(X, y, flat, offs, tau, tol, max_iter, ridge_eps):
    """Full-sample fits for a ragged list of column subsets.

    flat/offs encode subsets: subset m is flat[offs[m]:offs[m+1]].
    Returns (thetas padded (M,kmax), obj_sum (M,), iters, conv, ridged).
    """
    n = X.shape[0]
    m_count = offs.shape[0] - 1
    kmax = 0
    for m in range(m_count):
        k = offs[m + 1] - offs[m]
        if k > kmax:
            kmax = k
    thetas = np.zeros((m_count, kmax))
    objs = np.empty(m_count)
    iters = np.empty(m_count, np.int64)
    convs = np.empty(m_count, np.int64)
    ridged = np.empty(m_count, np.int64)
    taus = np.full(n, tau)
    for m in range(m_count):
        k = offs[m + 1] - offs[m]
        Xm = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                Xm[i, j] = X[i, flat[offs[m] + j]]
        dpen = np.zeros(k)
        th, ob, itn, cv, rd = ipm_fit(Xm, y, taus, dpen, tol, max_iter, ridge_eps)
        for j in range(k):
            thetas[m, j] = th[j]
        objs[m] = ob
        iters[m] = itn
        convs[m] = cv
        ridged[m] = rd
    return thetas, objs, iters, convs, ridged


@njit(cache=True)
def cv_predictions(X, y, flat, offs, tau, fold_ids, n_folds, tol, max_iter, ridge_eps):
    """Held-out predictions for every (subset, observation) pair.

    For subset m and fold f, fits on rows with fold_ids != f and predicts the
    rows of fold f; preds[m, i] is the prediction of y_i by the fit that
    excludes i's fold.  fold_ids == arange(n) gives the leave-one-out path.
    Returns (preds (M,n), n_nonconverged).
    """
    n = X.shape[0]
    m_count = offs.shape[0] - 1
    preds = np.empty((m_count, n))
    taus = np.full(n, tau)
    bad = 0
    for m in range(m_count):
        k = offs[m + 1] - offs[m]
        Xm = np.empty((n, k))
        for i in range(n):
            for j in range(k):
                Xm[i, j] = X[i, flat[offs[m] + j]]
        Xtr = np.empty((n, k))
        ytr = np.empty(n)
        dpen = np.zeros(k)
        for f in range(n_folds):
            ntr = 0
            for i in range(n):
                if fold_ids[i] != f:
                    for j in range(k):
                        Xtr[ntr, j] = Xm[i, j]
                    ytr[ntr] = y[i]
                    ntr += 1
            th, ob, itn, cv, rd = ipm_fit(
                Xtr[:ntr], ytr[:ntr], taus[:ntr], dpen, tol, max_iter, ridge_eps
            )
            if cv == 0:
                bad += 1
            for i in range(n):
                if fold_ids[i] == f:
                    s = 0.0
                    for j in range(k):
                        s += Xm[i, j] * th[j]
                    preds[m, i] = s
    return preds, bad


@njit(cache=True)
def fit_bootstrap(X, y, idx, tau, tol, max_iter, ridge_eps):
    """Full-model fits on bootstrap resamples given by idx (B,n) row indices.

    Returns (thetas (B,p), conv (B,), ridged (B,)).
    """
    n, p = X.shape
    B = idx.shape[0]
    thetas = np.empty((B, p))
    convs = np.empty(B, np.int64)
    ridged = np.empty(B, np.int64)
    taus = np.full(n, tau)
    Xb = np.empty((n, p))
    yb = np.empty(n)
    dpen = np.zeros(p)
    for b in range(B):
        for i in range(n):
            ii = idx[b, i]
            for j in range(p):
                Xb[i, j] = X[ii, j]
            yb[i] = y[ii]
        th, ob, itn, cv, rd = ipm_fit(Xb, yb, taus, dpen, tol, max_iter, ridge_eps)
        for j in range(p):
            thetas[b, j] = th[j]
        convs[b] = cv
        ridged[b] = rd
    return thetas, convs, ridged
