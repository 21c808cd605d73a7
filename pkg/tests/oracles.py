"""Independent reference implementations used by the tests."""

import numpy as np


def impulse_response(lags, horizon, j):
    """Deterministic response of a zero-noise VAR to a unit shock in series ``j``."""
    lags = np.asarray(lags, dtype=float)
    p, d, _ = lags.shape
    history = [np.zeros(d) for _ in range(p)]
    shock = np.zeros(d)
    shock[j] = 1.0
    out = []
    for u in range(horizon):
        y = sum(lags[l] @ history[-1 - l] for l in range(p)) + (shock if u == 0 else 0)
        history.append(y)
        out.append(y)
    return np.array(out)                                  # (horizon, d)


def mc_gfevd(params, horizon, n=100_000, seed=0):
    """Generalized FEVD by simulation.

    Draws ``n`` sets of future shocks, propagates them through the VAR to
    get the ``horizon``-step forecast error, then measures the share of its
    variance explained by the path of shocks to series ``j`` (linear
    projection, which is the conditional expectation under Gaussianity).
    Rows are normalised to one.
    """
    rng = np.random.default_rng(seed)
    d, p = params.d, params.p
    chol = np.linalg.cholesky(params.sigma)
    eps = rng.standard_normal((n, horizon, d)) @ chol.T
    state = np.zeros((n, p, d))
    for s in range(horizon):
        new = eps[:, horizon - 1 - s] + sum(state[:, l] @ params.lags[l].T for l in range(p))
        state = np.concatenate([new[:, None], state[:, :-1]], axis=1)
    fe = state[:, 0]
    share = np.zeros((d, d))
    for i in range(d):
        total = fe[:, i].var()
        for j in range(d):
            X = eps[:, :, j]
            beta, *_ = np.linalg.lstsq(X, fe[:, i], rcond=None)
            share[i, j] = np.var(X @ beta) / total
    return share / share.sum(axis=1, keepdims=True)
