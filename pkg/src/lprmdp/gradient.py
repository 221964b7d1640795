"""Robust policy gradient at a fixed rank-one worst kernel and projected ascent."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .mdp import Mdp, RankOnePerturbation, nominal_eval, policy_average, q_value, validate_policy
from .robust import InvalidDenominator, UncertaintySpec, binary_search_evaluate, recover_worst_kernel

TRACE_COLUMNS = ("iter", "robust_return", "penalty", "step", "eval_iters", "wall_ms")


@dataclass(eq=False)
class GradientReport:
    gradient: np.ndarray
    terms: tuple  # nominal, value-coupling, occupancy-coupling, second-order
    denominator: float


def policy_gradient(m: Mdp, pi, delta: RankOnePerturbation) -> GradientReport:
    """Gradient of the return under ``P_hat - b k^T`` with respect to ``pi(a|s)``.

    Everything is assembled from nominal quantities: with ``den = 1 + gamma k.D b^pi``,
    the perturbed return is ``J - gamma (k.v)(d.b^pi) / den`` and each factor
    differentiates to an occupancy-weighted Q-function.
    """
    pi = np.asarray(pi, dtype=float)
    b, k = np.asarray(delta.b, dtype=float), np.asarray(delta.k, dtype=float)
    g = m.gamma
    ev = nominal_eval(m, pi)
    D, d = ev.occupancy, ev.occupation
    q_r = q_value(m, pi, m.R, ev)
    q_b = q_value(m, pi, b, ev)
    d_k = k @ D
    k_v = float(k @ ev.value)
    j_b = float(d @ policy_average(pi, b))
    den = 1.0 + g * float(d_k @ policy_average(pi, b))
    if den <= 1e-12:
        raise InvalidDenominator(f"1 + gamma <k, v_b> = {den:.3g}")
    terms = (
        d[:, None] * q_r,
        -g * k_v / den * d[:, None] * q_b,
        -g * j_b / den * d_k[:, None] * q_r,
        g * g * j_b * k_v / den ** 2 * d_k[:, None] * q_b,
    )
    return GradientReport(gradient=terms[0] + terms[1] + terms[2] + terms[3], terms=terms, denominator=den)


def simplex_project(x) -> np.ndarray:
    """Row-wise Euclidean projection onto the probability simplex (sort-based)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, n + 1)
    rho = np.count_nonzero(u - css / idx > 0, axis=1)
    theta = css[np.arange(len(x)), rho - 1] / rho
    return np.maximum(x - theta[:, None], 0.0)


class RpgInterrupted(RuntimeError):
    """An evaluation failed mid-run; ``trace`` holds the iterations completed so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(eq=False)
class RpgTrace:
    rows: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    final_policy: np.ndarray | None = None

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in TRACE_COLUMNS})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def default_step(gamma: float):
    a0 = 0.1 * (1.0 - gamma)
    return lambda n: a0 / np.sqrt(n)


def rpg_run(m: Mdp, spec: UncertaintySpec, pi0, max_iters: int = 100, step_schedule=None,
            tol0: float = 1e-4, tol_floor: float = 1e-8, order: str = "first") -> RpgTrace:
    """Projected ascent on the robust return.

    Iteration n evaluates the current policy to tolerance
    ``max(gamma**n * tol0, tol_floor)``, recovers the worst kernel, takes a
    gradient step of size ``step_schedule(n)`` and projects each row back onto
    the simplex. Row n of the trace describes the policy entering iteration n.
    """
    pi = np.array(pi0, dtype=float)
    bad = validate_policy(pi, m.num_states, m.num_actions)
    if bad:
        raise ValueError("; ".join(map(str, bad)))
    step = step_schedule or default_step(m.gamma)
    trace = RpgTrace()
    for n in range(1, max_iters + 1):
        t0 = time.perf_counter()
        tol = max(m.gamma ** n * tol0, tol_floor)
        try:
            cert = binary_search_evaluate(m, pi, spec, tol=tol, order=order)
            delta, _ = recover_worst_kernel(m, pi, cert, spec)
            grad = policy_gradient(m, pi, delta).gradient
        except (ValueError, RuntimeError) as exc:
            trace.final_policy = pi
            raise RpgInterrupted(f"iteration {n}: {exc}", trace) from exc
        alpha = float(step(n))
        trace.policies.append(pi.copy())
        trace.rows.append({"iter": n, "robust_return": cert.robust_return, "penalty": cert.penalty,
                           "step": alpha, "eval_iters": cert.iterations,
                           "wall_ms": 1e3 * (time.perf_counter() - t0)})
        pi = simplex_project(pi + alpha * grad)
    trace.final_policy = pi
    return trace
