"""Independent brute-force reference implementations used by the tests.

None of these import solver internals; they search or enumerate directly.
"""

import itertools

import numpy as np


def gnss_cost(x, sats, pr):
    return float(np.sum((np.linalg.norm(sats - x[:3], axis=1) + x[3] - pr) ** 2))


def grid_refine(cost, center, half_width, points=9, levels=40, shrink=0.5):
    """Coordinate-free grid refinement: search a box, recenter on the best point, shrink."""
    c = np.asarray(center, dtype=float)
    h = np.asarray(half_width, dtype=float)
    axes = np.linspace(-1.0, 1.0, points)
    for _ in range(levels):
        best, best_val = c, cost(c)
        for offs in itertools.product(axes, repeat=len(c)):
            p = c + h * np.array(offs)
            v = cost(p)
            if v < best_val:
                best, best_val = p, v
        c = best
        h = h * shrink
    return c


def grid_argmin_2d(cost, lo, hi, n):
    """Best point of an ``n x n`` grid; ``cost`` maps (m, 2) points to m values."""
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    best = pts[int(np.argmin(cost(pts)))]
    return best, max((hi[0] - lo[0]) / (n - 1), (hi[1] - lo[1]) / (n - 1))


def monte_carlo_intersection(anchors, radii, n, rng):
    """Centroid of uniform samples falling inside every circle."""
    a = np.asarray(anchors, dtype=float)[:, :2]
    r = np.asarray(radii, dtype=float)
    lo = (a - r[:, None]).max(axis=0)
    hi = (a + r[:, None]).min(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 2))
    keep = np.all(np.linalg.norm(pts[:, None, :] - a[None], axis=2) <= r, axis=1)
    return pts[keep].mean(axis=0)


def fingerprint_exhaustive(query, subset, entries, K, d_min):
    """Score every stored entry with plain loops; keep the top K by (score desc, index asc)."""
    scored = []
    for idx, (rssi, pos) in enumerate(entries):
        s = 0.0
        for j in subset:
            if j in query and j in rssi:
                s += 1.0 / max(abs(query[j] - rssi[j]), d_min)
        scored.append((-s, idx, pos))
    scored.sort(key=lambda t: (t[0], t[1]))
    top = scored[:K]
    w = np.array([-t[0] for t in top])
    pos = sum(wi * np.asarray(t[2], float) for wi, t in zip(w, top)) / w.sum()
    return pos, w


def exhaustive_counts(n_min, n_anc, n_adv):
    """Benign and adversarial subset counts by enumerating all anchor subsets.

    Anchors ``0..n_adv-1`` are adversarial. A subset of at least ``n_min``
    anchors is benign without adversarial members and adversarial when it has
    some adversarial members and between 1 and ``n_min - 1`` benign ones.
    """
    benign = adv = 0
    for size in range(n_min, n_anc + 1):
        for s in itertools.combinations(range(n_anc), size):
            i = sum(1 for x in s if x < n_adv)
            j = size - i
            if i == 0:
                benign += 1
            elif 1 <= j <= n_min - 1:
                adv += 1
    return benign, adv


def projected_gradient(grad, project, x0, step, iters=20000, tol=1e-13):
    """Projected gradient descent for a smooth convex objective over a convex set."""
    x = project(np.asarray(x0, dtype=float))
    for _ in range(iters):
        nx = project(x - step * grad(x))
        if np.max(np.abs(nx - x)) < tol:
            return nx
        x = nx
    return x
