"""Pure NumPy/SciPy implementations of the hot kernels.

These are the reference semantics; the compiled module in ``_speed.pyx``
must match them (exactly for the integer-valued ordering kernel, to
floating-point accuracy for the banded solver).
"""

import numpy as np
from scipy.linalg import solveh_banded

IMPLEMENTATION = "python"


def maximin_order(dist, m):
    """Greedy max-min ordering of ``m`` points from a full distance matrix.

    The first two points are the pair with the largest distance; every
    following point maximises its minimum distance to the already selected
    set. All ties break toward the lowest index, which makes the ordering
    deterministic and platform independent.
    """
    n = dist.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    if not 1 <= m <= n:
        raise ValueError(f"m={m} out of range for n={n}")
    iu = np.triu_indices(n, 1)
    flat = dist[iu]
    best = int(np.argmax(flat))
    if not flat[best] > 0.0:
        raise ValueError("all pairwise distances are zero")
    i0 = int(iu[0][best])
    j0 = int(iu[1][best])
    order = np.empty(m, dtype=np.int64)
    order[0] = i0
    if m == 1:
        return order
    order[1] = j0
    mind = np.minimum(dist[i0], dist[j0])
    mind[i0] = -1.0
    mind[j0] = -1.0
    for k in range(2, m):
        nxt = int(np.argmax(mind))
        order[k] = nxt
        np.minimum(mind, dist[nxt], out=mind)
        mind[nxt] = -1.0
    return order


def _second_diff_bands(p):
    # upper banded form (solveh_banded layout) of D2' D2 for p features
    main = np.full(p, 6.0)
    main[0] = main[-1] = 1.0
    main[1] = main[-2] = 5.0
    sup1 = np.full(p, -4.0)
    sup1[1] = sup1[-1] = -2.0  # stored shifted: sup1[j] pairs (j-1, j)
    sup2 = np.ones(p)
    return main, sup1, sup2


def asls_baselines(X, lam, p_asym, iters):
    """Asymmetric-least-squares baseline for every row of ``X``.

    Each round solves (W + lam * D2'D2) z = W x with the pentadiagonal
    second-difference penalty, then reweights: p_asym above the baseline,
    1 - p_asym below. Returns the baselines, one row per input row.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    if p < 5:
        raise ValueError("need at least 5 points for second differences")
    main, sup1, sup2 = _second_diff_bands(p)
    ab = np.zeros((3, p))
    ab[0, 2:] = lam * sup2[:-2]
    ab[1, 1:] = lam * sup1[1:]
    Z = np.empty_like(X)
    for i in range(n):
        x = X[i]
        w = np.ones(p)
        z = x
        for _ in range(iters):
            ab[2] = lam * main + w
            z = solveh_banded(ab, w * x, lower=False)
            w = np.where(x > z, p_asym, 1.0 - p_asym)
        Z[i] = z
    return Z
