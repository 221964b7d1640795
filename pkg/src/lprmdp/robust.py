"""Robust policy evaluation over a non-rectangular L_p ball of kernels.

For ``U = {P : ||P - P_hat||_p <= beta, rows sum to 1}`` the worst kernel is
``P_hat - b k^T`` with ``b`` in B and ``k`` in K, and the robust return is
``J - lambda*`` where the penalty lambda* is the largest value of

    gamma <k, v> <d, b^pi> / (1 + gamma <k, v_b>)

(``v_b = D b^pi``). lambda* is the fixed point of

    F(lam) = max_{b in B} sigma_q(E_lam b),
    E_lam = gamma (I - 11^T/S) [v d^T - lam D] H^pi,

and ``F(lam) > lam`` exactly when ``lam < lambda*``, which drives a bisection.
"""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .lp import conjugate, dual_vector, gstd, lp_norm, mean_project, sample_B, sample_K
from .mdp import (Mdp, NominalEval, RankOnePerturbation, apply_perturbation, nominal_eval,
                  policy_average)
from .spectral import DegenerateMatrix, local_refine, spectral_solve

SHAPES = ("non_rectangular", "sa_rect", "s_rect")
MAX_BISECTIONS = 52  # normalized bracket endpoints stay exact dyadic floats


class NonBracketed(RuntimeError):
    pass


class ConsistencyFailure(RuntimeError):
    pass


class InvalidDenominator(ValueError):
    pass


class SamplingExhausted(RuntimeError):
    pass


class NonContractionWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class UncertaintySpec:
    """Norm order, radius and shape of the kernel uncertainty set.

    ``radii`` holds the S x A radius matrix for ``sa_rect`` or the length-S
    radius vector for ``s_rect``; ``beta`` is the global radius otherwise.
    """

    p: float = 2.0
    beta: float = 0.01
    shape: str = "non_rectangular"
    radii: np.ndarray | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        conjugate(self.p)
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.shape != "non_rectangular":
            if self.radii is None:
                raise ValueError(f"{self.shape} needs a radius array")
            r = np.array(self.radii, dtype=float)
            if r.min(initial=0.0) < 0:
                raise ValueError("radii must be nonnegative")
            object.__setattr__(self, "radii", r)

    @property
    def q(self) -> float:
        return conjugate(self.p)

    @classmethod
    def sa_rect(cls, p, radii):
        return cls(p=p, beta=float(np.max(radii, initial=0.0)), shape="sa_rect", radii=radii)

    @classmethod
    def s_rect(cls, p, radii):
        return cls(p=p, beta=float(np.max(radii, initial=0.0)), shape="s_rect", radii=radii)


@dataclass(eq=False)
class PenaltyCertificate:
    penalty: float
    bracket: tuple
    b: np.ndarray
    k: np.ndarray
    robust_return: float
    nominal_return: float
    iterations: int
    trace: list
    residual: float  # F(penalty) - penalty
    tol: float
    p: float
    beta: float
    heuristic: bool = False
    timings: dict = field(default_factory=dict)
    span: float = 0.0
    unit_bracket: tuple = (0.0, 1.0)  # bracket / span, exact dyadic endpoints

    def to_dict(self) -> dict:
        return {
            "penalty": self.penalty,
            "bracket": list(self.bracket),
            "span": self.span,
            "iterations": self.iterations,
            "robust_return": self.robust_return,
            "nominal_return": self.nominal_return,
            "residual": self.residual,
            "tol": self.tol,
            "p": "inf" if np.isinf(self.p) else self.p,
            "beta": self.beta,
            "heuristic": self.heuristic,
            "b": self.b.tolist(),
            "k": self.k.tolist(),
            "trace": [list(t) for t in self.trace],
            "wall_ms": dict(self.timings),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(eq=False)
class BaselineResult:
    robust_return: float
    penalty: float
    argmin: object  # kernel tensor or RankOnePerturbation
    evaluated: int
    skipped: int = 0
    wall_ms: float = 0.0


# ------------------------------------------------------------ penalty operator

def penalty_matrix(m: Mdp, pi, lam: float, ev: NominalEval | None = None) -> np.ndarray:
    """``E_lam`` as an S x (S*A) matrix acting on ``b.ravel()``."""
    ev = ev or nominal_eval(m, pi)
    M = m.gamma * (np.outer(ev.value, ev.occupation) - lam * ev.occupancy)
    M = mean_project(M.T).T  # Phi applied from the left
    S, A = m.R.shape
    return (M[:, :, None] * np.asarray(pi)[None, :, :]).reshape(S, S * A)


def _ball_lmo(g, p, beta):
    """argmax of <g, b> over {b >= 0, ||b||_p <= beta}."""
    gp = np.maximum(g, 0.0)
    out = np.zeros_like(gp)
    if not gp.any():
        return out
    if p == 1:
        out[np.argmax(gp)] = beta
    elif np.isinf(p):
        out[gp > 0] = beta
    else:
        y = gp ** (conjugate(p) - 1.0)
        out = beta * y / lp_norm(y, p)
    return out


def _refine_general(E, p, beta, x, max_steps=500, rtol=1e-10):
    q = conjugate(p)
    f = gstd(E @ x, q)
    for _ in range(max_steps):
        k, _ = dual_vector(E @ x, p)
        y = _ball_lmo(E.T @ k, p, beta)
        fy = gstd(E @ y, q)
        if fy < f:
            break
        gain = fy - f
        x, f = y, fy
        if gain <= rtol * max(f, 1e-300):
            break
    return x, f


def penalty_operator(m: Mdp, pi, spec: UncertaintySpec, lam: float, ev: NominalEval | None = None,
                     order: str = "first", refine: bool = True, candidates=None):
    """Evaluate ``F(lam)`` and a maximizing radius matrix ``b``.

    p = 2 uses the spectral solver followed by projected power iteration.
    Other orders start from the best of ``candidates`` (samples from B, shape
    (N, S, A)) and climb with the matching linear-maximization step; this
    path is heuristic.
    """
    S, A = m.R.shape
    if spec.beta == 0:
        return 0.0, np.zeros((S, A))
    E = penalty_matrix(m, pi, lam, ev)
    if spec.p == 2:
        try:
            sol = spectral_solve(E, spec.beta, order=order)
        except DegenerateMatrix:
            return 0.0, np.zeros((S, A))
        x, value = sol.x, sol.value
        if refine:
            ref = local_refine(E, spec.beta, x)
            x, value = ref.x, ref.value
        return float(value), x.reshape(S, A)

    if candidates is None:
        candidates = sample_B(S, A, spec.p, spec.beta, np.random.Generator(np.random.Philox(0)), size=256)
    flat = candidates.reshape(len(candidates), -1)
    q = spec.q
    vals = [gstd(E @ c, q) for c in flat]
    j = int(np.argmax(vals))
    x, value = flat[j], vals[j]
    if refine:
        x, value = _refine_general(E, spec.p, spec.beta, x)
    return float(value), x.reshape(S, A)


def binary_search_evaluate(m: Mdp, pi, spec: UncertaintySpec, tol: float = 1e-6, order: str = "first",
                           refine: bool = True, rng=None, num_candidates: int = 256) -> PenaltyCertificate:
    """Bisection on ``F(lam) - lam`` over ``[0, (max R - min R)/(1 - gamma)]``.

    The bracket is tracked in normalized coordinates, so after n steps its
    width is exactly ``span * 2**-n``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if spec.shape != "non_rectangular":
        raise ValueError("bisection evaluation handles the non-rectangular ball only; use rect_robust_eval")
    pi = np.asarray(pi, dtype=float)
    t0 = time.perf_counter()
    ev = nominal_eval(m, pi)
    t1 = time.perf_counter()
    span = float(m.R.max() - m.R.min()) / (1.0 - m.gamma)

    candidates = None
    if spec.p != 2 and spec.beta > 0:
        rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
        candidates = sample_B(m.num_states, m.num_actions, spec.p, spec.beta, rng, size=num_candidates)

    def F(lam):
        return penalty_operator(m, pi, spec, lam, ev, order=order, refine=refine, candidates=candidates)

    f0, _ = F(0.0)
    if f0 < 0:
        raise NonBracketed(f"F(0) = {f0} < 0")
    lo, hi = 0.0, 1.0
    trace = []
    n = 0
    while span * (hi - lo) > tol and n < MAX_BISECTIONS:
        mid = 0.5 * (lo + hi)
        lam = span * mid
        f, _ = F(lam)
        trace.append((lam, f))
        if f > lam:
            lo = mid
        else:
            hi = mid
        n += 1
    t2 = time.perf_counter()

    penalty = span * 0.5 * (lo + hi)
    f_star, b = F(penalty)
    c = _penalty_image(m, ev, pi, b, penalty)
    k, _ = dual_vector(c, spec.p)
    t3 = time.perf_counter()
    return PenaltyCertificate(
        penalty=penalty, bracket=(span * lo, span * hi), b=b, k=k,
        robust_return=ev.ret - penalty, nominal_return=ev.ret, iterations=n, trace=trace,
        residual=f_star - penalty, tol=tol, p=spec.p, beta=spec.beta, heuristic=spec.p != 2,
        timings={"nominal": 1e3 * (t1 - t0), "bisection": 1e3 * (t2 - t1), "recovery": 1e3 * (t3 - t2)},
        span=span, unit_bracket=(lo, hi),
    )


def _penalty_image(m, ev, pi, b, lam):
    """``gamma [v d^T - lam D] H^pi b``: the vector the adversary's k pairs with."""
    bpi = policy_average(pi, b)
    return m.gamma * (ev.value * (ev.occupation @ bpi) - lam * (ev.occupancy @ bpi))


def recover_worst_kernel(m: Mdp, pi, cert: PenaltyCertificate, spec: UncertaintySpec,
                         check_tol: float | None = None):
    """Worst rank-one perturbation and the perturbed MDP for a certificate.

    Raises NegativeKernelEntry when the radius is too large for the kernel,
    and ConsistencyFailure when re-evaluating the worst kernel disagrees with
    the certificate by more than ``check_tol`` (default ``10 * cert.tol``).
    """
    pi = np.asarray(pi, dtype=float)
    ev = nominal_eval(m, pi)
    b = np.asarray(cert.b, dtype=float)
    k, _ = dual_vector(_penalty_image(m, ev, pi, b, cert.penalty), spec.p)
    delta = RankOnePerturbation(b=b, k=k)
    worst = apply_perturbation(m, delta)
    j_worst = nominal_eval(worst, pi).ret
    check_tol = 10 * cert.tol if check_tol is None else check_tol
    if abs(j_worst - cert.robust_return) > check_tol:
        raise ConsistencyFailure(
            f"worst kernel return {j_worst:.10g} differs from certified {cert.robust_return:.10g} "
            f"by {abs(j_worst - cert.robust_return):.3g} > {check_tol:.3g}")
    return delta, worst


def dual_penalty_direct(m: Mdp, pi, b, k, ev: NominalEval | None = None) -> float:
    """Return gap ``J - J(P_hat - b k^T)`` from nominal quantities (Sherman-Morrison)."""
    ev = ev or nominal_eval(m, pi)
    bpi = policy_average(pi, b)
    k = np.asarray(k, dtype=float)
    den = 1.0 + m.gamma * (k @ (ev.occupancy @ bpi))
    if den <= 1e-12:
        raise InvalidDenominator(f"1 + gamma <k, v_b> = {den:.3g}; the perturbed kernel is not valid")
    return float(m.gamma * (k @ ev.value) * (ev.occupation @ bpi) / den)


# ------------------------------------------------------------ rectangular sets

def rect_robust_eval(m: Mdp, pi, spec: UncertaintySpec, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Robust return for sa- or s-rectangular L_p balls.

    Iterates ``v <- R^pi + gamma P^pi v - gamma w sigma_q(v)`` where ``w`` is
    the policy-averaged radius (sa) or ``beta_s ||pi_s||_q`` (s).
    """
    return float(m.mu @ rect_robust_value(m, pi, spec, tol, max_iter))


def rect_robust_value(m: Mdp, pi, spec: UncertaintySpec, tol: float = 1e-10, max_iter: int = 100_000):
    pi = np.asarray(pi, dtype=float)
    q = spec.q
    if spec.shape == "sa_rect":
        w = policy_average(pi, np.broadcast_to(spec.radii, pi.shape))
    elif spec.shape == "s_rect":
        w = np.asarray(spec.radii, dtype=float) * np.linalg.norm(pi, ord=q, axis=1)
    else:
        raise ValueError("rect_robust_eval needs an sa_rect or s_rect spec")
    ev = nominal_eval(m, pi)
    v = ev.value.copy()
    growth, last, warned = 0, np.inf, False
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            v_new = ev.R_pi + m.gamma * (ev.P_pi @ v) - m.gamma * w * gstd(v, q)
        if not np.all(np.isfinite(v_new)):
            return np.full_like(v, np.nan)
        res = np.abs(v_new - v).max()
        v = v_new
        if res <= tol:
            break
        growth = growth + 1 if res > last else 0
        last = res
        if growth >= 5 and not warned:
            warnings.warn("rectangular robust iteration is not contracting; radii too large?",
                          NonContractionWarning, stacklevel=3)
            warned = True
    return v


# ------------------------------------------------------------------ baselines

def _kernel_deltas(rng, n, S, A, spec: UncertaintySpec, boundary: bool):
    g = mean_project(rng.standard_normal((n, S, A, S)))
    p = spec.p
    if spec.shape == "non_rectangular":
        norms = np.linalg.norm(g.reshape(n, -1), ord=p, axis=1)[:, None, None, None]
        radius = spec.beta if boundary else spec.beta * rng.random((n, 1, 1, 1)) ** (1.0 / (S * A * (S - 1)))
    elif spec.shape == "sa_rect":
        norms = np.linalg.norm(g, ord=p, axis=3)[..., None]
        u = 1.0 if boundary else rng.random((n, S, A, 1)) ** (1.0 / (S - 1))
        radius = np.broadcast_to(spec.radii, (S, A))[None, :, :, None] * u
    else:
        norms = np.linalg.norm(g.reshape(n, S, -1), ord=p, axis=2)[:, :, None, None]
        u = 1.0 if boundary else rng.random((n, S, 1, 1)) ** (1.0 / (A * (S - 1)))
        radius = np.asarray(spec.radii, dtype=float)[None, :, None, None] * u
    return g / np.where(norms > 0, norms, 1.0) * radius


def _returns(m: Mdp, pi, kernels):
    P_pi = np.einsum("sa,nsat->nst", pi, kernels)
    R_pi = policy_average(pi, m.R)
    S = m.num_states
    v = np.linalg.solve(np.eye(S)[None] - m.gamma * P_pi, np.broadcast_to(R_pi, (len(kernels), S))[..., None])
    return v[..., 0] @ m.mu


def baseline_random_kernel(m: Mdp, pi, spec: UncertaintySpec, num_samples: int, rng, max_retries: int = 100,
                           boundary: bool = False, time_budget: float | None = None,
                           chunk: int = 128) -> BaselineResult:
    """Empirical minimum of the return over kernels sampled from the set.

    Samples are drawn in fixed-size chunks, invalid kernels are redrawn (up to
    ``max_retries`` rounds), so the first N samples do not depend on the total
    budget. ``boundary`` puts every sample on the sphere of the set.
    """
    t0 = time.perf_counter()
    pi = np.asarray(pi, dtype=float)
    S, A = m.R.shape
    j_nom = nominal_eval(m, pi).ret
    best, best_kernel, done = j_nom, m.P.copy(), 0
    if S < 2 or spec.beta == 0 and spec.shape == "non_rectangular":
        return BaselineResult(j_nom, 0.0, best_kernel, num_samples, 0, 1e3 * (time.perf_counter() - t0))
    while done < num_samples:
        deltas = _kernel_deltas(rng, chunk, S, A, spec, boundary)
        for _ in range(max_retries):
            bad = (m.P[None] + deltas).reshape(chunk, -1).min(axis=1) < -1e-12
            if not bad.any():
                break
            deltas[bad] = _kernel_deltas(rng, int(bad.sum()), S, A, spec, boundary)
        else:
            raise SamplingExhausted(f"no valid kernel after {max_retries} redraws; radius too large")
        use = min(chunk, num_samples - done)
        kernels = m.P[None] + deltas[:use]
        rets = _returns(m, pi, kernels)
        j = int(np.argmin(rets))
        if rets[j] < best:
            best, best_kernel = float(rets[j]), kernels[j]
        done += use
        if time_budget is not None and time.perf_counter() - t0 >= time_budget:
            break
    return BaselineResult(best, j_nom - best, best_kernel, done, 0, 1e3 * (time.perf_counter() - t0))


def baseline_random_rank_one(m: Mdp, pi, spec: UncertaintySpec, num_samples: int, rng,
                             time_budget: float | None = None, chunk: int = 512) -> BaselineResult:
    """Best penalty over random ``(b, k)`` pairs from B x K; invalid kernels are skipped."""
    t0 = time.perf_counter()
    pi = np.asarray(pi, dtype=float)
    S, A = m.R.shape
    ev = nominal_eval(m, pi)
    best_pen, best_arg, done, skipped = 0.0, RankOnePerturbation(np.zeros((S, A)), np.zeros(S)), 0, 0
    while done < num_samples:
        b = sample_B(S, A, spec.p, spec.beta, rng, size=chunk)
        k = sample_K(S, spec.p, rng, size=chunk)
        use = min(chunk, num_samples - done)
        b, k = b[:use], k[:use]
        bpi = np.einsum("sa,nsa->ns", pi, b)
        den = 1.0 + m.gamma * np.einsum("ns,ns->n", k, bpi @ ev.occupancy.T)
        pen = m.gamma * (k @ ev.value) * (bpi @ ev.occupation) / np.where(den > 1e-12, den, 1.0)
        valid = (den > 1e-12) & ((m.P[None] - b[..., None] * k[:, None, None, :]).reshape(use, -1).min(axis=1)
                                 >= -1e-12)
        skipped += int((~valid).sum())
        pen = np.where(valid, pen, -np.inf)
        j = int(np.argmax(pen))
        if pen[j] > best_pen:
            best_pen, best_arg = float(pen[j]), RankOnePerturbation(b[j].copy(), k[j].copy())
        done += use
        if time_budget is not None and time.perf_counter() - t0 >= time_budget:
            break
    return BaselineResult(ev.ret - best_pen, best_pen, best_arg, done, skipped, 1e3 * (time.perf_counter() - t0))


def baseline_local_bk(m: Mdp, pi, spec: UncertaintySpec, rng, restarts: int = 5,
                      time_budget: float | None = None) -> BaselineResult:
    """Local maximization of the rank-one penalty over ``(b, k)`` with SLSQP from random starts."""
    t0 = time.perf_counter()
    pi = np.asarray(pi, dtype=float)
    S, A = m.R.shape
    ev = nominal_eval(m, pi)
    p, beta = spec.p, spec.beta
    best_pen, best_arg, done, skipped = 0.0, RankOnePerturbation(np.zeros((S, A)), np.zeros(S)), 0, 0
    if beta == 0 or S < 2:
        return BaselineResult(ev.ret, 0.0, best_arg, 0)

    def split(z):
        return z[:S * A].reshape(S, A), z[S * A:]

    def neg_pen(z):
        b, k = split(z)
        bpi = policy_average(pi, b)
        den = 1.0 + m.gamma * (k @ (ev.occupancy @ bpi))
        return -m.gamma * (k @ ev.value) * (ev.occupation @ bpi) / max(den, 1e-12)

    cons = [
        {"type": "ineq", "fun": lambda z: beta ** 2 - np.sum(split(z)[0] ** 2) if p == 2
         else beta - lp_norm(split(z)[0], p)},
        {"type": "ineq", "fun": lambda z: 1.0 - np.sum(split(z)[1] ** 2) if p == 2
         else 1.0 - lp_norm(split(z)[1], p)},
        {"type": "eq", "fun": lambda z: np.sum(split(z)[1])},
    ]
    bounds = [(0.0, None)] * (S * A) + [(None, None)] * S
    while done < restarts:
        if time_budget is not None and done and time.perf_counter() - t0 >= time_budget:
            break
        z0 = np.concatenate([sample_B(S, A, p, beta, rng).ravel(), sample_K(S, p, rng)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize.minimize(neg_pen, z0, method="SLSQP", bounds=bounds, constraints=cons,
                                    options={"maxiter": 500, "ftol": 1e-12})
        done += 1
        b, k = split(res.x)
        b = np.maximum(b, 0.0)
        b *= min(1.0, beta / max(lp_norm(b, p), 1e-300))
        k = mean_project(k)
        k /= max(1.0, lp_norm(k, p))
        try:
            pen = dual_penalty_direct(m, pi, b, k, ev)
            apply_perturbation(m, RankOnePerturbation(b, k))
        except ValueError:
            skipped += 1
            continue
        if pen > best_pen:
            best_pen, best_arg = pen, RankOnePerturbation(b, k)
    return BaselineResult(ev.ret - best_pen, best_pen, best_arg, done, skipped, 1e3 * (time.perf_counter() - t0))
