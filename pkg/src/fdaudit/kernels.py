"""Hot inner loops: Lasso coordinate descent, MLP gradient descent, cluster sums.

Each kernel exists twice: an explicit-loop version compiled with numba and a
vectorised numpy version. The module-level names (``lasso_cd``, ``mlp_train``,
``cluster_sums``) point at the numba build when it is available; see
:mod:`fdaudit._accel` for the environment switch. Both versions are importable
through :data:`IMPLEMENTATIONS` so tests and benchmarks can compare them.
"""
import math

import numpy as np

from fdaudit._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# Lasso coordinate descent
#
# Minimises  F(b) = 0.5 * sum_i v_i (y_i - x_i b)^2 + sum_j pen_j |b_j|
# on centred data (the intercept is handled by the caller). The stopping rule
# is the duality gap relative to F(0).
# ---------------------------------------------------------------------------


def _lasso_cd_loops(X, y, v, pen, beta, tol, max_sweeps, history_len):
    n, p = X.shape
    beta = beta.copy()
    history = np.full(history_len, np.nan)
    col_sq = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += v[i] * X[i, j] * X[i, j]
        col_sq[j] = acc
    r = np.empty(n)
    for i in range(n):
        acc = y[i]
        for j in range(p):
            acc -= X[i, j] * beta[j]
        r[i] = acc
    null_obj = 0.0
    for i in range(n):
        null_obj += 0.5 * v[i] * y[i] * y[i]

    gap_rel = np.inf
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        for j in range(p):
            if col_sq[j] <= 0.0:
                beta[j] = 0.0
                continue
            old = beta[j]
            z = 0.0
            for i in range(n):
                z += v[i] * X[i, j] * r[i]
            z += col_sq[j] * old
            if z > pen[j]:
                new = (z - pen[j]) / col_sq[j]
            elif z < -pen[j]:
                new = (z + pen[j]) / col_sq[j]
            else:
                new = 0.0
            if new != old:
                delta = new - old
                for i in range(n):
                    r[i] -= X[i, j] * delta
                beta[j] = new

        primal = 0.0
        for i in range(n):
            primal += 0.5 * v[i] * r[i] * r[i]
        scale = 1.0
        for j in range(p):
            primal += pen[j] * abs(beta[j])
            if pen[j] > 0.0:
                c = 0.0
                for i in range(n):
                    c += v[i] * X[i, j] * r[i]
                if abs(c) > pen[j]:
                    scale = min(scale, pen[j] / abs(c))
        dual = 0.0
        for i in range(n):
            d = y[i] - scale * r[i]
            dual += 0.5 * v[i] * (y[i] * y[i] - d * d)
        if sweep < history_len:
            history[sweep] = primal
        if null_obj > 0.0:
            gap_rel = max(primal - dual, 0.0) / null_obj
        else:
            gap_rel = 0.0
        if gap_rel <= tol:
            break
    return beta, sweeps, gap_rel, history


def _lasso_cd_numpy(X, y, v, pen, beta, tol, max_sweeps, history_len):
    p = X.shape[1]
    beta = beta.copy()
    history = np.full(history_len, np.nan)
    vX = X * v[:, None]
    col_sq = np.einsum("ij,ij->j", vX, X)
    r = y - X @ beta
    null_obj = 0.5 * float(np.dot(v * y, y))
    penalised = pen > 0.0

    gap_rel = np.inf
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        for j in range(p):
            if col_sq[j] <= 0.0:
                beta[j] = 0.0
                continue
            old = beta[j]
            z = float(vX[:, j] @ r) + col_sq[j] * old
            if z > pen[j]:
                new = (z - pen[j]) / col_sq[j]
            elif z < -pen[j]:
                new = (z + pen[j]) / col_sq[j]
            else:
                new = 0.0
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new

        primal = 0.5 * float(np.dot(v * r, r)) + float(np.dot(pen, np.abs(beta)))
        corr = np.abs(vX.T @ r)
        scale = 1.0
        over = penalised & (corr > pen)
        if over.any():
            scale = min(1.0, float(np.min(pen[over] / corr[over])))
        d = y - scale * r
        dual = 0.5 * float(np.dot(v, y * y - d * d))
        if sweep < history_len:
            history[sweep] = primal
        gap_rel = max(primal - dual, 0.0) / null_obj if null_obj > 0.0 else 0.0
        if gap_rel <= tol:
            break
    return beta, sweeps, gap_rel, history


# ---------------------------------------------------------------------------
# Single-hidden-layer sigmoid network, full-batch gradient descent
#
# Loss is 0.5 * sum_i v_i (f_i - y_i)^2 / sum_i v_i.
# Returns the per-iteration loss (evaluated before each update) and a flag set
# when the loss stops being finite.
# ---------------------------------------------------------------------------


def _mlp_train_loops(X, y, v, W1, b1, W2, b2, rate, iters):
    n, q = X.shape
    h = W1.shape[1]
    W1 = W1.copy()
    b1 = b1.copy()
    W2 = W2.copy()
    losses = np.full(iters, np.nan)
    vsum = 0.0
    for i in range(n):
        vsum += v[i]
    act = np.empty(h)
    gW1 = np.empty((q, h))
    gb1 = np.empty(h)
    gW2 = np.empty(h)
    diverged = False
    for it in range(iters):
        gW1[:, :] = 0.0
        gb1[:] = 0.0
        gW2[:] = 0.0
        gb2 = 0.0
        loss = 0.0
        for i in range(n):
            f = b2
            for k in range(h):
                a = b1[k]
                for m in range(q):
                    a += X[i, m] * W1[m, k]
                s = 1.0 / (1.0 + math.exp(-a))
                act[k] = s
                f += s * W2[k]
            e = f - y[i]
            loss += 0.5 * v[i] * e * e
            g = v[i] * e / vsum
            gb2 += g
            for k in range(h):
                gW2[k] += act[k] * g
                da = g * W2[k] * act[k] * (1.0 - act[k])
                gb1[k] += da
                for m in range(q):
                    gW1[m, k] += X[i, m] * da
        loss /= vsum
        losses[it] = loss
        if not math.isfinite(loss):
            diverged = True
            break
        for k in range(h):
            W2[k] -= rate * gW2[k]
            b1[k] -= rate * gb1[k]
            for m in range(q):
                W1[m, k] -= rate * gW1[m, k]
        b2 -= rate * gb2
    return W1, b1, W2, b2, losses, diverged


def _mlp_train_numpy(X, y, v, W1, b1, W2, b2, rate, iters):
    W1 = W1.copy()
    b1 = b1.copy()
    W2 = W2.copy()
    b2 = float(b2)
    losses = np.full(iters, np.nan)
    vn = v / v.sum()
    diverged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(iters):
            act = 1.0 / (1.0 + np.exp(-(X @ W1 + b1)))
            e = act @ W2 + b2 - y
            loss = 0.5 * float(np.dot(vn, e * e))
            losses[it] = loss
            if not math.isfinite(loss):
                diverged = True
                break
            g = vn * e
            da = np.outer(g, W2) * act * (1.0 - act)
            W2 -= rate * (act.T @ g)
            b2 -= rate * float(g.sum())
            W1 -= rate * (X.T @ da)
            b1 -= rate * da.sum(axis=0)
    return W1, b1, W2, b2, losses, diverged


# ---------------------------------------------------------------------------
# Per-cluster column sums of a score matrix (the "meat" of a sandwich).
# ---------------------------------------------------------------------------


def _cluster_sums_loops(scores, codes, n_clusters):
    n, k = scores.shape
    out = np.zeros((n_clusters, k))
    for i in range(n):
        c = codes[i]
        for j in range(k):
            out[c, j] += scores[i, j]
    return out


def _cluster_sums_numpy(scores, codes, n_clusters):
    out = np.empty((n_clusters, scores.shape[1]))
    for j in range(scores.shape[1]):
        out[:, j] = np.bincount(codes, weights=scores[:, j], minlength=n_clusters)
    return out


IMPLEMENTATIONS = {
    "numpy": {
        "lasso_cd": _lasso_cd_numpy,
        "mlp_train": _mlp_train_numpy,
        "cluster_sums": _cluster_sums_numpy,
    }
}

if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "lasso_cd": njit(_lasso_cd_loops),
        "mlp_train": njit(_mlp_train_loops),
        "cluster_sums": njit(_cluster_sums_loops),
    }
    _active = IMPLEMENTATIONS["numba"]
else:
    _active = IMPLEMENTATIONS["numpy"]


def lasso_cd(X, y, v, pen, beta, tol=1e-8, max_sweeps=100_000, history_len=0):
    """Weighted Lasso by cyclic coordinate descent on centred data.

    Returns ``(beta, n_sweeps, relative_gap, objective_history)``.
    """
    return _active["lasso_cd"](
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(pen, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        float(tol),
        int(max_sweeps),
        int(history_len),
    )


def mlp_train(X, y, v, W1, b1, W2, b2, rate, iters):
    """Full-batch gradient descent for a one-hidden-layer sigmoid network.

    Returns ``(W1, b1, W2, b2, losses, diverged)``.
    """
    W1, b1, W2, b2, losses, diverged = _active["mlp_train"](
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(W1, dtype=np.float64),
        np.ascontiguousarray(b1, dtype=np.float64),
        np.ascontiguousarray(W2, dtype=np.float64),
        float(b2),
        float(rate),
        int(iters),
    )
    return W1, b1, W2, float(b2), losses, bool(diverged)


def cluster_sums(scores, codes, n_clusters):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    return _active["cluster_sums"](scores, np.ascontiguousarray(codes, dtype=np.int64), int(n_clusters))
