"""L_p geometry: Hölder conjugates, generalized standard deviation, dual vectors
and samplers for the zero-sum direction set K and the radius set B.

    K = {k in R^S : ||k||_p <= 1, sum(k) = 0}
    B = {b in R_+^{S x A} : ||b||_p <= beta}
"""
from __future__ import annotations

import numpy as np
from scipy import optimize


def conjugate(p: float) -> float:
    """Hölder conjugate q with 1/p + 1/q = 1 (1 <-> inf)."""
    p = float(p)
    if p < 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def parse_order(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "oo"):
        return np.inf
    p = float(text)
    conjugate(p)
    return p


def lp_norm(x, p: float) -> float:
    return float(np.linalg.norm(np.ravel(x), ord=p))


def p_mean(v, p: float) -> float:
    """A minimizer w of ||v - w 1||_p (the p-mean)."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return float(lo)
    if p == 2:
        return float(v.mean())
    if np.isinf(p):
        return 0.5 * (lo + hi)
    if p == 1:
        return float(np.median(v))

    # the optimality condition sum sign(r)|r|^(p-1) = 0 is decreasing in w
    def slope(w):
        r = v - w
        return np.sum(np.sign(r) * np.abs(r) ** (p - 1.0))

    return float(optimize.brentq(slope, lo, hi, xtol=1e-15 * max(1.0, abs(lo), abs(hi)),
                                 rtol=4 * np.finfo(float).eps))


def gstd(v, p: float) -> float:
    """Generalized standard deviation ``min_w ||v - w 1||_p``."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("gstd of an empty vector")
    if p == 2:
        return float(np.linalg.norm(v - v.mean()))
    if np.isinf(p):
        return float(0.5 * (v.max() - v.min()))
    if p == 1:
        # top half minus bottom half of the descending sort; an odd middle cancels
        s = np.sort(v)[::-1]
        n = s.size
        return float(s[: (n + 1) // 2].sum() - s[n // 2:].sum())
    return lp_norm(v - p_mean(v, p), p)


def mean_project(x) -> np.ndarray:
    """Apply ``I - 11^T/S``; the result sums to zero."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=-1, keepdims=True)


def dual_vector(c, p: float):
    """Maximize ``k @ c`` over K.

    Returns ``(k, value)`` with ``value == gstd(c, q)``. A constant ``c`` gives
    ``k = 0``.
    """
    c = np.asarray(c, dtype=float)
    S = c.size
    scale = max(np.abs(c).max(initial=0.0), 1e-300)
    if S < 2 or c.max() - c.min() <= 1e-15 * scale:
        return np.zeros(S), 0.0
    if p == 2:
        r = mean_project(c)
        norm = np.linalg.norm(r)
        return r / norm, float(norm)
    if np.isinf(p):
        order = np.argsort(-c, kind="stable")
        k = np.zeros(S)
        half = S // 2
        k[order[:half]] = 1.0
        k[order[S - half:]] = -1.0
    elif p == 1:
        k = np.zeros(S)
        k[np.argmax(c)] += 0.5
        k[np.argmin(c)] -= 0.5
    else:
        q = conjugate(p)
        r = c - p_mean(c, q)
        k = np.sign(r) * np.abs(r) ** (q - 1.0)
        k = mean_project(k)
        k /= lp_norm(k, p)
    return k, float(k @ c)


def _radial(rng, size, dim):
    # radius density proportional to r^(dim-1): uniform volume coverage
    return rng.random(size) ** (1.0 / max(dim, 1))


def sample_K(num_states: int, p: float, rng, size=None) -> np.ndarray:
    """Random direction in K: Gaussian, mean-projected, scaled into the unit p-ball."""
    shape = (num_states,) if size is None else (size, num_states)
    g = mean_project(rng.standard_normal(shape))
    if num_states < 2:
        return np.zeros(shape)
    norms = np.linalg.norm(g, ord=p, axis=-1, keepdims=True)
    r = _radial(rng, () if size is None else (size, 1), num_states - 1)
    k = g / norms * r
    return mean_project(k)


def sample_B(num_states: int, num_actions: int, p: float, beta: float, rng, size=None) -> np.ndarray:
    """Random nonnegative radius matrix with ``||b||_p <= beta``."""
    shape = (num_states, num_actions) if size is None else (size, num_states, num_actions)
    g = np.abs(rng.standard_normal(shape))
    flat = g.reshape(g.shape[:-2] + (-1,))
    norms = np.linalg.norm(flat, ord=p, axis=-1)[..., None, None]
    r = _radial(rng, () if size is None else (size, 1, 1), num_states * num_actions)
    return beta * g / norms * r


def in_K(k, p: float, tol: float = 1e-10) -> bool:
    k = np.asarray(k, dtype=float)
    return bool(lp_norm(k, p) <= 1.0 + tol and abs(k.sum()) <= tol)


def in_B(b, p: float, beta: float, tol: float = 1e-10) -> bool:
    b = np.asarray(b, dtype=float)
    return bool(b.min() >= -tol and lp_norm(b, p) <= beta + tol)


def in_B_per_state(b, p: float, beta_s, tol: float = 1e-10) -> bool:
    """Membership in the state-wise set ``{b >= 0 : ||b[s]||_p <= beta_s[s]}``."""
    b = np.asarray(b, dtype=float)
    norms = np.linalg.norm(b, ord=p, axis=1)
    return bool(b.min() >= -tol and np.all(norms <= np.asarray(beta_s) + tol))
