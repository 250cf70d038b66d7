"""Quadrature and root bracketing used by the monotone transformer."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import BracketingFailed, NonFiniteValue


@lru_cache(maxsize=None)
def _clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError("Clenshaw-Curtis needs at least one interval")
    theta = np.pi * np.arange(n + 1) / n
    nodes = np.cos(theta)
    weights = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        weights[0] = weights[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        weights[0] = weights[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    weights[inner] = 2.0 * v / n
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``n``-interval rule on ``[-1, 1]`` (``n + 1`` points)."""
    return _clenshaw_curtis(int(n))


def clenshaw_curtis_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """The same rule mapped onto ``[0, 1]``."""
    nodes, weights = clenshaw_curtis(n)
    return (nodes + 1.0) / 2.0, weights / 2.0


def integrate(f, a, b, n: int = 20):
    """Integrate a vectorised ``f`` over ``[a, b]`` with the ``n``-interval rule."""
    s, w = clenshaw_curtis_unit(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = a[..., None] + (b - a)[..., None] * s
    return (b - a) * (f(t) @ w)


def bisect_increasing(f, target, tol: float = 1e-6, max_iter: int = 200, max_doublings: int = 60):
    """Solve ``f(x) = target`` elementwise for an increasing vectorised ``f``.

    The bracket starts at ``[-1, 1]`` and doubles outward until it contains
    the root; bisection then runs until every bracket is narrower than ``tol``.
    """
    target = np.asarray(target, dtype=float)
    lo = -np.ones_like(target)
    hi = np.ones_like(target)
    for _ in range(max_doublings):
        f_lo, f_hi = f(lo), f(hi)
        if not (np.all(np.isfinite(f_lo)) and np.all(np.isfinite(f_hi))):
            raise NonFiniteValue("non-finite function value while bracketing")
        low_bad = f_lo > target
        high_bad = f_hi < target
        if not (low_bad.any() or high_bad.any()):
            break
        lo = np.where(low_bad, 2.0 * lo, lo)
        hi = np.where(high_bad, 2.0 * hi, hi)
    else:
        raise BracketingFailed(f"no bracket found within +-2^{max_doublings}")
    for _ in range(max_iter):
        if np.all(hi - lo < tol):
            break
        mid = 0.5 * (lo + hi)
        below = f(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)
