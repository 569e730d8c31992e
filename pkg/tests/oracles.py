"""Independent scalar re-implementations used as test oracles."""

from __future__ import annotations

import math


def qnbm_scalar(x, w1, w2, b2, W, V, beta):
    """Literal loops over the basis / shape / head equations.

    Shapes: w1 [n_u], w2 [n_z][n_u], b2 [n_z], W [n_z][n_f], V [H][G][n_f],
    beta [H][G]. Inputs ``x`` are already normalised.
    """
    relu = lambda v: v if v > 0 else 0.0
    n_u, n_z, n_f = len(w1), len(b2), len(x)
    f = []
    for i in range(n_f):
        z = []
        for k in range(n_z):
            s = 0.0
            for j in range(n_u):
                s += w2[k][j] * relu(w1[j] * x[i])
            z.append(relu(s + b2[k]))
        f.append(sum(W[k][i] * z[k] for k in range(n_z)))
    return [
        [beta[h][g] + sum(V[h][g][i] * f[i] for i in range(n_f)) for g in range(len(beta[0]))]
        for h in range(len(beta))
    ]


def pinball_scalar(y, q, gamma):
    if y > q:
        return (y - q) * gamma
    return (q - y) * (1 - gamma)


def kupiec_scalar(x, n, p, mp):
    """Kupiec LR in arbitrary precision (mpmath module passed in)."""
    mp.mp.dps = 50
    x, n, p = mp.mpf(x), mp.mpf(n), mp.mpf(p)

    def xlog(a, b):
        return mp.mpf(0) if a == 0 else a * mp.log(b)

    pi = x / n
    lr = -2 * (xlog(n - x, 1 - p) + xlog(x, p)) + 2 * (xlog(n - x, 1 - pi) + xlog(x, pi))
    return float(lr)


def norm_cdf(z):
    return 0.5 * (1 + math.erf(z / math.sqrt(2)))
