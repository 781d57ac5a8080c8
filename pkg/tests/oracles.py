"""Independent reference implementations used as test oracles.

Each oracle is deliberately naive (quadratic scans, exhaustive
enumeration, grid search, finite differences) and shares no code with the
production paths it checks.
"""

import math

import numpy as np


def naive_components(centers, d):
    """Quadratic seeded-region clustering: pop the first remaining point,
    then repeatedly sweep the remaining points, absorbing every point
    within distance d of any component member, until the component stops
    growing; repeat until no points remain."""
    centers = list(centers)
    components = []
    while centers:
        component = [centers[0]]
        centers = centers[1:]
        i = 0
        while i < len(component):
            cx, cy = component[i]
            remaining = []
            for point in centers:
                if math.dist((cx, cy), point) <= d:
                    component.append(point)
                else:
                    remaining.append(point)
            centers = remaining
            i += 1
        components.append(component)
    return components


def as_partition(components):
    return frozenset(frozenset(c) for c in components)


def line_sse(ys, m, b):
    return sum((y - (m * x + b)) ** 2 for x, y in enumerate(ys))


def grid_refine_line(ys, rounds=14, span=2.0, grid=41):
    """Brute-force SSE minimizer: shrinking grid search over the line's
    slope and its height at the abscissa centroid. Searching in centered
    coordinates makes the two axes independent, so the search cannot stall
    in the correlated (slope, intercept) valley; the intercept is read off
    the found line afterwards.
    """
    xs = np.arange(len(ys), dtype=float)
    ys = np.asarray(ys, dtype=float)
    x_center = xs.mean()
    u = xs - x_center
    best_m, best_c = 0.0, 0.0  # c = line height at x_center
    s = span
    for _ in range(rounds):
        ms = np.linspace(best_m - s, best_m + s, grid)
        cs = np.linspace(best_c - s, best_c + s, grid)
        pred = ms[:, None, None] * u[None, None, :] + cs[None, :, None]
        sse = ((ys[None, None, :] - pred) ** 2).sum(axis=2)
        i, j = np.unravel_index(np.argmin(sse), sse.shape)
        best_m, best_c = float(ms[i]), float(cs[j])
        s = 4.0 * s / (grid - 1)  # keep the optimum safely interior
    return best_m, best_c - best_m * x_center


def pairwise_auc(scores, labels, positive=1):
    """AUC by exhaustive enumeration of all positive x negative pairs,
    counting ties as half a win. Exact (integer numerator over 2)."""
    pos = [s for s, lab in zip(scores, labels) if lab == positive]
    neg = [s for s, lab in zip(scores, labels) if lab != positive]
    doubled_wins = 0
    for p in pos:
        for n in neg:
            if p > n:
                doubled_wins += 2
            elif p == n:
                doubled_wins += 1
    return doubled_wins / (2 * len(pos) * len(neg))


def finite_difference_gradients(net, inputs, labels, step=1e-5):
    """Central finite differences of the loss over every parameter entry."""
    from slidescreen.netcore import loss_and_gradients

    grads = []
    for param in net.parameter_arrays():
        grad = np.zeros_like(param)
        flat_p = param.ravel()
        flat_g = grad.ravel()
        for idx in range(flat_p.size):
            orig = flat_p[idx]
            flat_p[idx] = orig + step
            loss_plus, _ = loss_and_gradients(net, inputs, labels)
            flat_p[idx] = orig - step
            loss_minus, _ = loss_and_gradients(net, inputs, labels)
            flat_p[idx] = orig
            flat_g[idx] = (loss_plus - loss_minus) / (2.0 * step)
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """Worst per-entry relative disagreement; entries below the floor are
    compared absolutely (floor guards against FD roundoff noise)."""
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst


def knn_proba(train_x, train_y, query, k, positive=1):
    """Brute-force k-nearest-neighbors vote; distance ties break toward
    the smaller training index."""
    d2 = [float(((x - query) ** 2).sum()) for x in train_x]
    order = sorted(range(len(train_x)), key=lambda i: (d2[i], i))[:k]
    return sum(1 for i in order if train_y[i] == positive) / k
