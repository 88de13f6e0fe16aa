"""Plain recursive CART regressor (all features, no bootstrap) used as a test oracle."""

import numpy as np


def build(X, y, max_depth=None, min_split=2, depth=0):
    lo = y.min()
    acc = 0.0
    for v in y:
        acc += v - lo
    node = {"value": lo + acc / len(y)}
    if len(y) < 2 or y.max() == y.min():
        return node
    if (max_depth is not None and depth >= max_depth) or len(y) < min_split:
        return node
    best = None
    yc = y - node["value"]
    tot = 0.0
    for v in yc:
        tot += v
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="mergesort")
        xs, ys = X[order, f], yc[order]
        sl = 0.0
        for k in range(len(y) - 1):
            sl += ys[k]
            if xs[k] == xs[k + 1]:
                continue
            nl = k + 1
            sr = tot - sl
            score = sl * sl / nl + sr * sr / (len(y) - nl)
            if best is None or score > best[0]:  # features ascending: ties keep the lowest
                best = (score, f, 0.5 * (xs[k] + xs[k + 1]))
    if best is None:
        return node
    _, f, t = best
    m = X[:, f] <= t
    node.update(feature=f, threshold=t,
                left=build(X[m], y[m], max_depth, min_split, depth + 1),
                right=build(X[~m], y[~m], max_depth, min_split, depth + 1))
    return node


def predict(node, x):
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["value"]
