"""Softmax, entropy and divergence kernels.

All information quantities are in bits, so normalised entropy and the
Jensen-Shannon divergence both live in [0, 1]. ``0 * log 0`` is taken as 0.

The scalar functions work on a single distribution and sum with
:func:`math.fsum`; the ``*_rows`` variants operate on the rows of a 2-D array
and rely on numpy's pairwise summation. They share validation rules.
"""
import math

import numpy as np

from .errors import DivergenceUndefinedError, InvalidInputError, InvalidParameterError

#: Distributions off by at most this much are renormalised instead of rejected.
PROB_TOL = 1e-9


def _as_vector(values, name="values"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < 2:
        raise InvalidInputError(f"{name} must have length >= 2, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def as_distribution(p, name="p"):
    """Validate ``p`` as a probability vector and return it as float64.

    Entries down to ``-PROB_TOL`` are clipped to zero and a total within
    ``PROB_TOL`` of one is renormalised; anything worse raises
    :class:`InvalidInputError`.
    """
    arr = _as_vector(p, name)
    if arr.min() < -PROB_TOL:
        raise InvalidInputError(f"{name} has a negative entry {arr.min()!r}")
    total = math.fsum(arr)
    if abs(total - 1.0) > PROB_TOL:
        raise InvalidInputError(f"{name} sums to {total!r}, not 1")
    if arr.min() < 0.0:
        arr = np.clip(arr, 0.0, None)
        total = math.fsum(arr)
    if total != 1.0:
        arr = arr / total
    return arr


def as_distribution_rows(P, name="P"):
    """Row-wise version of :func:`as_distribution` for an ``(m, n)`` array."""
    arr = np.asarray(P, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise InvalidInputError(f"{name} must be (m, n>=2), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if arr.size and arr.min() < -PROB_TOL:
        raise InvalidInputError(f"{name} has a negative entry")
    totals = arr.sum(axis=1)
    if np.any(np.abs(totals - 1.0) > PROB_TOL):
        bad = int(np.argmax(np.abs(totals - 1.0)))
        raise InvalidInputError(f"{name} row {bad} sums to {totals[bad]!r}, not 1")
    if arr.size and arr.min() < 0.0:
        arr = np.clip(arr, 0.0, None)
        totals = arr.sum(axis=1)
    if np.any(totals != 1.0):
        arr = arr / totals[:, None]
    return arr


def _check_temperature(temperature):
    if not (isinstance(temperature, (int, float, np.floating)) and temperature > 0
            and math.isfinite(temperature)):
        raise InvalidParameterError(f"temperature must be a finite positive number, got {temperature!r}")


def stable_softmax(values, temperature=1.0):
    """Softmax of ``values / temperature`` with max-subtraction.

    >>> stable_softmax([0.0, math.log(3.0)]).round(12).tolist()
    [0.25, 0.75]
    """
    _check_temperature(temperature)
    v = _as_vector(values)
    # Shift before scaling so huge inputs never overflow in the division.
    z = (v - v.max()) / temperature
    e = np.exp(z)
    return e / math.fsum(e)


def softmax_rows(values, temperature=1.0):
    """Apply :func:`stable_softmax` to every row of a 2-D array."""
    _check_temperature(temperature)
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] < 2:
        raise InvalidInputError(f"values must be (m, n>=2), got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values contain non-finite entries")
    z = (v - v.max(axis=1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _plogp_terms(p):
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz])
    return out


def entropy_bits(p):
    """Shannon entropy of ``p`` in bits, clamped to ``[0, log2 n]``."""
    p = as_distribution(p)
    n = p.size
    if p.max() == p.min():
        return math.log2(n)
    h = -math.fsum(_plogp_terms(p))
    return min(max(h, 0.0), math.log2(n))


def entropy_bits_rows(P):
    P = as_distribution_rows(P)
    n = P.shape[1]
    h = -_plogp_terms(P).sum(axis=1)
    h = np.clip(h, 0.0, math.log2(n))
    uniform = P.max(axis=1) == P.min(axis=1)
    h[uniform] = math.log2(n)
    return h


def normalized_entropy(p):
    """Entropy divided by its maximum ``log2 n``; 0 for one-hot, 1 for uniform."""
    p = as_distribution(p)
    return entropy_bits(p) / math.log2(p.size)


def _kl_terms(p, q):
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz] / q[nz])
    return out


def kl_bits(p, q):
    """Kullback-Leibler divergence ``D(p || q)`` in bits.

    Raises :class:`DivergenceUndefinedError` if ``p`` puts mass where ``q``
    has none.
    """
    p = as_distribution(p, "p")
    q = as_distribution(q, "q")
    if p.size != q.size:
        raise InvalidInputError(f"length mismatch: {p.size} vs {q.size}")
    if np.any((p > 0) & (q == 0)):
        raise DivergenceUndefinedError("p has support outside q")
    return max(math.fsum(_kl_terms(p, q)), 0.0)


def _js_terms(p, q):
    # p * log2(p / m) with m = (p + q) / 2, written as 2p / (p + q) so a
    # subnormal p cannot underflow the midpoint to zero.
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(2.0 * p[nz] / (p[nz] + q[nz]))
    return out


def js_bits(p, q):
    """Jensen-Shannon divergence in bits: mean KL of each input to the midpoint."""
    p = as_distribution(p, "p")
    q = as_distribution(q, "q")
    if p.size != q.size:
        raise InvalidInputError(f"length mismatch: {p.size} vs {q.size}")
    # Summing both halves in one fsum keeps the result symmetric in (p, q).
    js = 0.5 * math.fsum(np.concatenate([_js_terms(p, q), _js_terms(q, p)]))
    return min(max(js, 0.0), 1.0)


def js_bits_rows(P, Q):
    P = as_distribution_rows(P, "P")
    Q = as_distribution_rows(Q, "Q")
    if P.shape != Q.shape:
        raise InvalidInputError(f"shape mismatch: {P.shape} vs {Q.shape}")
    # Elementwise add is commutative, so swapping P and Q is bit-identical.
    js = 0.5 * (_js_terms(P, Q) + _js_terms(Q, P)).sum(axis=1)
    return np.clip(js, 0.0, 1.0)
