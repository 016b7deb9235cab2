"""Independent reference implementations used to check the package.

These are deliberately naive (linear scans, O(n^2) neighborhoods,
python loops) and share no code with the package under test.
"""

import math

import numpy as np


def naive_scaling(levels, thresholds, d):
    """Linear interval scan; intervals are closed on the right."""
    for level, thr in zip(levels, thresholds):
        if d <= thr:
            return level
    return levels[-1]


def naive_scaling_array(levels, thresholds, distances):
    return np.asarray([naive_scaling(levels, thresholds, float(d)) for d in distances])


def scan_scaling_array(levels, thresholds, distances):
    """Vectorized interval scan (per-threshold masks, lowest wins)."""
    d = np.asarray(distances, dtype=np.float64)
    out = np.full(d.shape, levels[-1], dtype=np.float64)
    for level, thr in zip(reversed(levels[:-1]), reversed(thresholds)):
        out[d <= thr] = level
    return out


def random_staircase(rng, max_p=6):
    """A valid random staircase: strictly increasing levels in [0, 1]."""
    p = int(rng.integers(2, max_p + 1))
    gaps = rng.uniform(0.05, 1.0, p)
    lv = np.cumsum(gaps)
    lv = (lv - lv[0]) / (lv[-1] - lv[0])
    th = np.cumsum(rng.uniform(0.1, 1.0, p - 1)) + rng.uniform(0.0, 0.5)
    return tuple(float(x) for x in lv), tuple(float(x) for x in th)


def brute_dbscan_1d(values, eps, min_pts):
    """Quadratic density clustering on a line.

    Returns each cluster's member values in ascending order.  A border
    point joins the cluster whose nearest core is closest; an exact tie
    goes to the lower cluster.
    """
    vs = sorted(float(v) for v in values)
    core = [sum(1 for u in vs if abs(u - v) <= eps) >= min_pts for v in vs]
    comps = []
    for v, c in zip(vs, core):
        if not c:
            continue
        if comps and v - comps[-1][-1] <= eps:
            comps[-1].append(v)
        else:
            comps.append([v])
    members = [[] for _ in comps]
    for v in vs:
        best = None
        best_d = None
        for j, comp in enumerate(comps):
            d = min(abs(v - c) for c in comp)
            if d <= eps and (best_d is None or d < best_d):
                best, best_d = j, d
        if best is not None:
            members[best].append(v)
    return members


def brute_centroids(values, eps, min_pts):
    members = brute_dbscan_1d(values, eps, min_pts)
    return [math.fsum(m) / len(m) for m in members]


def naive_window_targets(s, w, mode):
    """Per-episode target list for n_step / average windowing."""
    s = [float(v) for v in s]
    n = len(s)
    if n < w + 1:
        return []
    if mode == "n_step":
        return [s[i + w] for i in range(n - w)]
    if mode == "average":
        return [math.fsum(s[i : i + w + 1]) / (w + 1) for i in range(n - w)]
    raise ValueError(mode)
