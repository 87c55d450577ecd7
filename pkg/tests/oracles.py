"""Independent reference implementations used only by the tests.

These deliberately avoid the package's code paths: high-precision mpmath
summation for information quantities, O(N*M) pair counting and exhaustive
threshold sweeps for the metrics, explicit loops for the network.
"""
import math

import numpy as np
from mpmath import mp, mpf, log

mp.dps = 40


def _log2(x):
    return log(x, 2)


def entropy_bits(p):
    return float(-mp.fsum(mpf(x) * _log2(mpf(x)) for x in p if x > 0))


def kl_bits(p, q):
    return float(mp.fsum(mpf(a) * _log2(mpf(a) / mpf(b)) for a, b in zip(p, q) if a > 0))


def js_bits(p, q):
    m = [(mpf(a) + mpf(b)) / 2 for a, b in zip(p, q)]
    kl_p = mp.fsum(mpf(a) * _log2(mpf(a) / c) for a, c in zip(p, m) if a > 0)
    kl_q = mp.fsum(mpf(b) * _log2(mpf(b) / c) for b, c in zip(q, m) if b > 0)
    return float((kl_p + kl_q) / 2)


def auroc_pairs(known, unknown):
    wins = 0.0
    for k in known:
        for u in unknown:
            if k > u:
                wins += 1.0
            elif k == u:
                wins += 0.5
    return wins / (len(known) * len(unknown))


def fpr_at_tpr_sweep(known, unknown, target):
    """Try every candidate threshold; keep the largest reaching the TPR target."""
    candidates = sorted(set(known) | set(unknown) | {math.inf}, reverse=True)
    for t in candidates:
        tpr = sum(1 for k in known if k >= t) / len(known)
        if tpr >= target:
            return sum(1 for u in unknown if u >= t) / len(unknown)
    raise AssertionError("no threshold reached the target")


def aupr_sweep(known, unknown, positives="IN"):
    if positives == "IN":
        pos, neg = list(known), list(unknown)
    else:
        pos, neg = [-u for u in unknown], [-k for k in known]
    points = [(0.0, 1.0)]
    for t in sorted(set(pos) | set(neg), reverse=True):
        tp = sum(1 for s in pos if s >= t)
        fp = sum(1 for s in neg if s >= t)
        points.append((tp / len(pos), tp / (tp + fp)))
    terms = [(r1 - r0) * (p1 + p0) / 2.0 for (r0, p0), (r1, p1) in zip(points, points[1:])]
    return math.fsum(terms)


def mlp_logits(x, w1, b1, w2, b2):
    h, d = w1.shape
    n = w2.shape[0]
    hidden = [0.0] * h
    for i in range(h):
        acc = b1[i]
        for j in range(d):
            acc += w1[i, j] * x[j]
        hidden[i] = max(acc, 0.0)
    out = np.zeros(n)
    for c in range(n):
        acc = b2[c]
        for i in range(h):
            acc += w2[c, i] * hidden[i]
        out[c] = acc
    return out


def softmax(values):
    m = max(values)
    e = [math.exp(v - m) for v in values]
    s = sum(e)
    return np.array([x / s for x in e])


def random_distribution(rng, n, sparsity=0.0):
    """Dirichlet-ish vector; with ``sparsity`` some entries are exactly zero."""
    p = rng.gamma(rng.uniform(0.1, 2.0), size=n)
    if sparsity:
        p[rng.random(n) < sparsity] = 0.0
        if p.sum() == 0:
            p[rng.integers(n)] = 1.0
    return p / p.sum()


# Broadcast versions of the metric oracles for large score sets. Same
# definitions, evaluated by comparing every score against every threshold
# rather than by sorting.

def auroc_pairs_np(known, unknown):
    k = np.asarray(known)[:, None]
    u = np.asarray(unknown)[None, :]
    wins = np.count_nonzero(k > u) + 0.5 * np.count_nonzero(k == u)
    return wins / (k.size * u.size)


def fpr_at_tpr_sweep_np(known, unknown, target):
    known, unknown = np.asarray(known), np.asarray(unknown)
    candidates = np.unique(np.concatenate([known, unknown]))[::-1]
    tpr = (known[None, :] >= candidates[:, None]).sum(axis=1) / known.size
    t = candidates[np.argmax(tpr >= target)]
    return np.count_nonzero(unknown >= t) / unknown.size


def aupr_sweep_np(known, unknown, positives="IN"):
    known, unknown = np.asarray(known), np.asarray(unknown)
    pos, neg = (known, unknown) if positives == "IN" else (-unknown, -known)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tp = (pos[None, :] >= thresholds[:, None]).sum(axis=1)
    fp = (neg[None, :] >= thresholds[:, None]).sum(axis=1)
    recall = [0.0] + [t / pos.size for t in tp.tolist()]
    precision = [1.0] + [t / (t + f) for t, f in zip(tp.tolist(), fp.tolist())]
    terms = [(recall[i + 1] - recall[i]) * (precision[i + 1] + precision[i]) / 2.0
             for i in range(len(recall) - 1)]
    return math.fsum(terms)
