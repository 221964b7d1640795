"""Maximize ``||A x||_2`` over the nonnegative part of the 2-ball of radius beta.

The spectral heuristic works from the eigenpairs of ``A^T A``: each
eigenvector is sign-normalized so its positive part dominates, and the
normalized positive parts ``u_i`` are candidate maximizers. Orders:

* ``zero``: ``u_1`` only (at least half-good: ``||A u_1||^2 >= lambda_1 / 2``)
* ``first``: best ``u_i`` over all i
* ``second``: additionally the positive parts of ``t v_i + (1-t) v_j`` on a t-grid
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ORDERS = ("zero", "first", "second")


class DegenerateMatrix(ValueError):
    """``A^T A`` has no strictly positive eigenvalue."""

    def __init__(self, solution):
        self.solution = solution
        super().__init__("matrix has no strictly positive eigenvalue (A = 0)")


@dataclass(eq=False)
class SpectralSolution:
    x: np.ndarray
    value: float
    order: str
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eigenvectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    score_index: int | None = None  # argmax of lambda_i <v_i, u_i>
    steps: int = 0


class SpectralBounds(NamedTuple):
    lower: float
    upper_zero: float
    upper_first: float


def _eigenpairs(A):
    """Eigenpairs of ``A^T A`` with strictly positive eigenvalues, descending.

    For wide matrices the smaller Gram matrix ``A A^T`` is decomposed and its
    eigenvectors lifted; the omitted eigenvalues are exactly zero and their
    candidates would score zero.
    """
    m, n = A.shape
    if m < n:
        w, U = np.linalg.eigh(A @ A.T)
        order = np.argsort(w)[::-1]
        w, U = w[order], U[:, order]
        keep = w > w[0] * 1e-13 if w[0] > 0 else np.zeros_like(w, dtype=bool)
        w, U = w[keep], U[:, keep]
        V = (A.T @ U) / np.sqrt(w)
        V /= np.linalg.norm(V, axis=0)
    else:
        w, V = np.linalg.eigh(A.T @ A)
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
        keep = w > w[0] * 1e-13 if w[0] > 0 else np.zeros_like(w, dtype=bool)
        w, V = w[keep], V[:, keep]
    # sign convention: ||v+|| >= ||v-||; exact ties keep the solver's sign
    pos = np.linalg.norm(np.maximum(V, 0.0), axis=0)
    neg = np.linalg.norm(np.minimum(V, 0.0), axis=0)
    V = V * np.where(neg > pos, -1.0, 1.0)
    return w, V


def _positive_parts(V):
    """Columns ``v^+ / ||v^+||``; all-nonpositive columns become NaN."""
    Vp = np.maximum(V, 0.0)
    norms = np.linalg.norm(Vp, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = Vp / norms
    U[:, norms == 0] = np.nan
    return U, norms


def _scores(A, cands):
    """``||A u||`` per candidate column; NaN columns score -inf."""
    vals = np.linalg.norm(A @ np.nan_to_num(cands), axis=0)
    vals[np.isnan(cands).any(axis=0)] = -np.inf
    return vals


def _best(A, cands):
    """Highest ``||A u||`` over candidate columns, lowest index on ties."""
    vals = _scores(A, cands)
    j = int(np.argmax(vals))
    return j, float(vals[j])


def spectral_solve(A, beta: float = 1.0, order: str = "first", t_points: int = 33,
                   pair_rank: int = 16) -> SpectralSolution:
    """Spectral lower bound for ``max ||A x||_2`` s.t. ``x >= 0, ||x||_2 <= beta``.

    ``pair_rank`` caps the second-order pair search to the leading
    eigenvectors; the first-order candidates are always included, so orders
    are monotone: zero <= first <= second.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    if beta <= 0:
        raise ValueError("beta must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if not np.any(A):
        x = np.zeros(n)
        x[0] = beta
        raise DegenerateMatrix(SpectralSolution(x=x, value=0.0, order=order))

    w, V = _eigenpairs(A)
    U, pos_norms = _positive_parts(V)
    scores = w * pos_norms  # lambda_i <v_i, u_i> = lambda_i ||v_i^+||
    score_index = int(np.argmax(scores))

    # one product for all single candidates keeps zero <= first exact in floating point
    vals = _scores(A, U)
    j = 0 if order == "zero" else int(np.argmax(vals))
    u, value = U[:, j], float(vals[j])
    if order == "second" and V.shape[1] > 1:
        r = min(V.shape[1], pair_rank)
        t = np.linspace(0.0, 1.0, t_points)[1:-1]
        blocks = []
        for i in range(r):
            for jj in range(i + 1, r):
                for sign in (1.0, -1.0):
                    blocks.append(np.outer(V[:, i], t) + np.outer(sign * V[:, jj], 1.0 - t))
        C = np.maximum(np.concatenate(blocks, axis=1), 0.0)
        norms = np.linalg.norm(C, axis=0)
        C = C[:, norms > 0] / norms[norms > 0]
        if C.shape[1]:
            jc, vc = _best(A, C)
            if vc > value:
                u, value = C[:, jc], vc
    return SpectralSolution(x=beta * u, value=beta * value, order=order, eigenvalues=w,
                            eigenvectors=V, score_index=score_index)


def spectral_bounds(A, beta: float = 1.0) -> SpectralBounds:
    """Certified bracket on the optimum.

    ``lower`` is the half-good guarantee; ``upper_first`` caps each squared
    overlap ``<x, v_i>^2`` by ``||v_i^+||^2`` and fills the unit budget
    greedily in order of decreasing eigenvalue.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.any(A):
        return SpectralBounds(0.0, 0.0, 0.0)
    w, V = _eigenpairs(A)
    caps = np.linalg.norm(np.maximum(V, 0.0), axis=0) ** 2
    c = np.zeros_like(caps)
    used = 0.0
    for i, cap in enumerate(caps):
        if used + cap <= 1.0:
            c[i] = cap
            used += cap
        else:
            c[i] = 1.0 - used
            break
    upper_first = beta * np.sqrt(float(w @ c))
    upper_zero = beta * np.sqrt(w[0])
    return SpectralBounds(beta * np.sqrt(w[0] / 2.0), upper_zero, min(upper_first, upper_zero))


def local_refine(A, beta: float, x0, max_steps: int = 500, rtol: float = 1e-10) -> SpectralSolution:
    """Projected power iteration ``x <- beta * (A^T A x)^+ / ||(A^T A x)^+||``.

    Each step maximizes the linearization of the convex objective over the
    feasible set, so ``||A x||`` never decreases.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x = np.asarray(x0, dtype=float).copy()
    f = float(np.linalg.norm(A @ x))
    steps = 0
    for steps in range(1, max_steps + 1):
        g = np.maximum(A.T @ (A @ x), 0.0)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        y = beta * g / gn
        fy = float(np.linalg.norm(A @ y))
        if fy < f:
            break
        gain = fy - f
        x, f = y, fy
        if gain <= rtol * f:
            break
    return SpectralSolution(x=x, value=f, order="refined", steps=steps)


def random_search(A, beta: float, num_samples: int, rng, chunk: int = 2048):
    """Best of ``num_samples`` uniform draws from [0,1)^n scaled to norm beta.

    Draws are consumed sequentially, so a larger budget with the same seed
    sees a superset of the samples.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    best, best_x = -np.inf, None
    done = 0
    while done < num_samples:
        c = min(chunk, num_samples - done)
        X = rng.random((c, n))
        X *= beta / np.linalg.norm(X, axis=1, keepdims=True)
        vals = np.linalg.norm(X @ A.T, axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_x = float(vals[j]), X[j].copy()
        done += c
    return best, best_x
