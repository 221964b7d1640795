"""Tabular MDPs: validation, exact nominal evaluation and JSON file I/O.

Arrays follow the (state, action, next_state) layout throughout:
``P[s, a, s']``, ``R[s, a]``, ``pi[s, a]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

ROW_SUM_TOL = 1e-9
NEG_TOL = 1e-12


class MdpFormatError(ValueError):
    """Malformed MDP or policy document."""


class MdpValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class NegativeKernelEntry(ValueError):
    """A perturbed kernel has an entry below -1e-12.

    ``max_feasible_scale`` is the largest factor t such that ``P - t*b k^T``
    stays nonnegative, so ``t * beta`` is the largest usable radius along
    this perturbation direction.
    """

    def __init__(self, message, index, entry, max_feasible_scale):
        self.index = index
        self.entry = entry
        self.max_feasible_scale = max_feasible_scale
        super().__init__(message)


@dataclass(frozen=True)
class Violation:
    field: str
    index: tuple
    magnitude: float
    message: str

    def __str__(self):
        return f"{self.field}{list(self.index)}: {self.message} (magnitude {self.magnitude:.3g})"


@dataclass(frozen=True, eq=False)
class Mdp:
    P: np.ndarray
    R: np.ndarray
    gamma: float
    mu: np.ndarray
    name: str | None = None

    def __post_init__(self):
        for attr in ("P", "R", "mu"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    @property
    def num_actions(self) -> int:
        return self.P.shape[1]

    def replace(self, **changes) -> "Mdp":
        fields = dict(P=self.P, R=self.R, gamma=self.gamma, mu=self.mu, name=self.name)
        fields.update(changes)
        return Mdp(**fields)


@dataclass(frozen=True, eq=False)
class NominalEval:
    value: np.ndarray       # v = D R^pi
    occupancy: np.ndarray   # D = (I - gamma P^pi)^-1
    occupation: np.ndarray  # d = mu^T D
    ret: float              # J = <mu, v>
    P_pi: np.ndarray
    R_pi: np.ndarray


@dataclass(frozen=True, eq=False)
class RankOnePerturbation:
    """Kernel perturbation ``P(s'|s,a) = P_hat(s'|s,a) - b(s,a) k(s')``."""

    b: np.ndarray
    k: np.ndarray

    def delta(self) -> np.ndarray:
        return -self.b[:, :, None] * self.k[None, None, :]


def validate_mdp(m: Mdp) -> list[Violation]:
    out = []
    P, R, mu = m.P, m.R, m.mu
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        return [Violation("P", (), 0.0, f"kernel must have shape (S, A, S), got {P.shape}")]
    S, A, _ = P.shape
    if S < 1 or A < 1:
        out.append(Violation("P", (), 0.0, "need at least one state and one action"))
    if R.shape != (S, A):
        out.append(Violation("R", (), 0.0, f"reward must have shape {(S, A)}, got {R.shape}"))
    if mu.shape != (S,):
        out.append(Violation("mu", (), 0.0, f"initial distribution must have shape {(S,)}, got {mu.shape}"))
    if not (0.0 <= m.gamma < 1.0):
        out.append(Violation("gamma", (), m.gamma, "discount must lie in [0, 1)"))
    for name, arr in (("P", P), ("R", R), ("mu", mu)):
        if not np.all(np.isfinite(arr)):
            idx = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            out.append(Violation(name, idx, float("nan"), "non-finite entry"))
    if out:
        return out

    sums = P.sum(axis=2)
    for s, a in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
        out.append(Violation("P", (int(s), int(a)), abs(sums[s, a] - 1.0),
                             f"row sums to {sums[s, a]!r}, expected 1"))
    for idx in np.argwhere(P < -NEG_TOL):
        idx = tuple(int(i) for i in idx)
        out.append(Violation("P", idx, float(-P[idx]), "negative transition probability"))
    if abs(mu.sum() - 1.0) > ROW_SUM_TOL:
        out.append(Violation("mu", (), abs(mu.sum() - 1.0), f"sums to {mu.sum()!r}, expected 1"))
    for (s,) in np.argwhere(mu < 0):
        out.append(Violation("mu", (int(s),), float(-mu[s]), "negative probability"))
    return out


def validate_policy(pi, num_states=None, num_actions=None) -> list[Violation]:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 2:
        return [Violation("pi", (), 0.0, f"policy must be a matrix, got shape {pi.shape}")]
    out = []
    if num_states is not None and num_actions is not None and pi.shape != (num_states, num_actions):
        out.append(Violation("pi", (), 0.0, f"expected shape {(num_states, num_actions)}, got {pi.shape}"))
        return out
    sums = pi.sum(axis=1)
    for (s,) in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
        out.append(Violation("pi", (int(s),), abs(sums[s] - 1.0), f"row sums to {sums[s]!r}"))
    for idx in np.argwhere(pi < 0):
        idx = tuple(int(i) for i in idx)
        out.append(Violation("pi", idx, float(-pi[idx]), "negative probability"))
    return out


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def _check_shapes(m: Mdp, pi):
    pi = np.asarray(pi, dtype=float)
    if pi.shape != m.R.shape:
        raise ValueError(f"policy shape {pi.shape} does not match MDP (S, A) = {m.R.shape}")
    return pi


def policy_average(pi, x) -> np.ndarray:
    """Apply the policy-averaging operator: ``out(s) = sum_a pi(a|s) x(s, a)``."""
    pi = np.asarray(pi, dtype=float)
    x = np.asarray(x, dtype=float)
    if pi.shape != x.shape:
        raise ValueError(f"shape mismatch: policy {pi.shape} vs input {x.shape}")
    return np.einsum("sa,sa->s", pi, x)


def policy_matrix(pi) -> np.ndarray:
    """The averaging operator as an explicit S x (S*A) matrix acting on ``x.ravel()``."""
    pi = np.asarray(pi, dtype=float)
    S, A = pi.shape
    H = np.zeros((S, S * A))
    for s in range(S):
        H[s, s * A:(s + 1) * A] = pi[s]
    return H


def policy_matrices(m: Mdp, pi):
    pi = _check_shapes(m, pi)
    P_pi = np.einsum("sa,sat->st", pi, m.P)
    R_pi = policy_average(pi, m.R)
    return P_pi, R_pi


def nominal_eval(m: Mdp, pi) -> NominalEval:
    """Exact value, occupancy and return of ``pi`` under the nominal kernel.

    One LU factorization of ``I - gamma P^pi`` serves all three solves.
    """
    P_pi, R_pi = policy_matrices(m, pi)
    S = m.num_states
    lu = linalg.lu_factor(np.eye(S) - m.gamma * P_pi)
    value = linalg.lu_solve(lu, R_pi)
    occupation = linalg.lu_solve(lu, m.mu, trans=1)
    occupancy = linalg.lu_solve(lu, np.eye(S))
    return NominalEval(value=value, occupancy=occupancy, occupation=occupation,
                       ret=float(m.mu @ value), P_pi=P_pi, R_pi=R_pi)


def q_value(m: Mdp, pi, x, ev: NominalEval | None = None) -> np.ndarray:
    """Q-values of ``pi`` for the reward-like matrix ``x`` under the nominal kernel."""
    pi = _check_shapes(m, pi)
    x = np.asarray(x, dtype=float)
    if x.shape != m.R.shape:
        raise ValueError(f"reward shape {x.shape} does not match (S, A) = {m.R.shape}")
    if ev is None:
        ev = nominal_eval(m, pi)
    v = ev.occupancy @ policy_average(pi, x)
    return x + m.gamma * np.einsum("sat,t->sa", m.P, v)


def apply_perturbation(m: Mdp, delta: RankOnePerturbation) -> Mdp:
    b = np.asarray(delta.b, dtype=float)
    k = np.asarray(delta.k, dtype=float)
    if b.shape != m.R.shape or k.shape != (m.num_states,):
        raise ValueError(f"perturbation shapes b{b.shape}, k{k.shape} do not match MDP")
    P = m.P - b[:, :, None] * k[None, None, :]
    if P.min() < -NEG_TOL:
        idx = tuple(int(i) for i in np.unravel_index(np.argmin(P), P.shape))
        raise NegativeKernelEntry(
            f"perturbed kernel entry P{list(idx)} = {P[idx]:.3e} is negative; "
            f"radius too large (largest feasible scale {max_feasible_scale(m, delta):.4g})",
            idx, float(P[idx]), max_feasible_scale(m, delta))
    return m.replace(P=P)


def max_feasible_scale(m: Mdp, delta: RankOnePerturbation) -> float:
    """Largest t >= 0 with ``P_hat - t * b k^T >= 0`` entrywise."""
    bk = np.asarray(delta.b)[:, :, None] * np.asarray(delta.k)[None, None, :]
    mask = bk > 0
    if not mask.any():
        return float("inf")
    return float(np.min(m.P[mask] / bk[mask]))


# ---------------------------------------------------------------- file I/O

def _as_array(doc, key, ndim, path):
    if key not in doc:
        raise MdpFormatError(f"{path}: missing key {key!r}")
    val = doc[key]

    def walk(node, depth, where):
        if depth == ndim:
            if isinstance(node, bool) or not isinstance(node, (int, float)):
                raise MdpFormatError(f"{path}: {where} must be a number, got {node!r}")
            return
        if not isinstance(node, list):
            raise MdpFormatError(f"{path}: {where} must be an array")
        for i, child in enumerate(node):
            walk(child, depth + 1, f"{where}[{i}]")

    walk(val, 0, key)
    # ragged rows: report the first row whose length disagrees with its siblings
    def check_lengths(node, depth, where):
        if depth >= ndim - 1:
            return
        lens = [len(c) for c in node]
        for i, n in enumerate(lens):
            if n != lens[0]:
                raise MdpFormatError(f"{path}: row {where}[{i}] has length {n}, expected {lens[0]}")
        for i, c in enumerate(node):
            check_lengths(c, depth + 1, f"{where}[{i}]")

    check_lengths(val, 0, key)
    return np.array(val, dtype=float)


def _read_json(path):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MdpFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise MdpFormatError(f"{path}: top level must be an object")
    return doc


def mdp_to_dict(m: Mdp) -> dict:
    doc = {"gamma": m.gamma, "mu": m.mu.tolist(), "R": m.R.tolist(), "P": m.P.tolist()}
    if m.name is not None:
        doc["name"] = m.name
    return doc


def load_mdp(path) -> Mdp:
    doc = _read_json(path)
    gamma = doc.get("gamma")
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)):
        raise MdpFormatError(f"{path}: 'gamma' must be a number")
    m = Mdp(P=_as_array(doc, "P", 3, path), R=_as_array(doc, "R", 2, path), gamma=gamma,
            mu=_as_array(doc, "mu", 1, path), name=doc.get("name"))
    violations = validate_mdp(m)
    if violations:
        raise MdpValidationError(violations)
    return m


def save_mdp(m: Mdp, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(mdp_to_dict(m)) + "\n")


def load_policy(path) -> np.ndarray:
    doc = _read_json(path)
    pi = _as_array(doc, "pi", 2, path)
    violations = validate_policy(pi)
    if violations:
        raise MdpValidationError(violations)
    return pi


def save_policy(pi, path) -> None:
    Path(path).write_text(json.dumps({"pi": np.asarray(pi, dtype=float).tolist()}) + "\n")


def random_mdp(num_states: int, num_actions: int, gamma: float, rng, name=None) -> Mdp:
    """Random instance: positive normalized kernel rows, rewards in [0, 1), uniform mu."""
    P = rng.random((num_states, num_actions, num_states)) + 1e-12
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((num_states, num_actions))
    mu = np.full(num_states, 1.0 / num_states)
    return Mdp(P=P, R=R, gamma=gamma, mu=mu, name=name)
