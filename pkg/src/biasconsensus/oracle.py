"""Exact analysis of the opinion chain on tiny graphs.

States are n-bit integers: bit ``u`` is the opinion of vertex ``u``. Agents
flip independently given the current state, so every transition row is a
product distribution over flip patterns. Up to ``DENSE_LIMIT`` vertices the
full transition matrix is formed and the first-step equations are solved
directly; above it rows are produced on demand and the equations are solved
by Gauss-Seidel sweeps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import BiasParams, OpinionState, Rule
from .errors import CapacityError, ConsistencyError, ParameterError, StructureError
from .graph import Graph

MAX_ORACLE_N = 14
DENSE_LIMIT = 11
GS_TOL = 1e-12


def _capacity(g: Graph):
    if g.n > MAX_ORACLE_N:
        raise CapacityError(f"exact chain analysis limited to n <= {MAX_ORACLE_N}, got {g.n}")


def all_states(n: int) -> np.ndarray:
    """Boolean matrix of shape (2^n, n); row ``s`` is the state with code ``s``."""
    codes = np.arange(1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def flip_table(g: Graph, b: BiasParams, rule) -> np.ndarray:
    """Per-state, per-agent flip probabilities, shape (2^n, n)."""
    rule = Rule.parse(rule)
    bits = all_states(g.n)
    ones = bits[:, g.table].sum(axis=2)
    opposite = np.where(bits, g.d - ones, ones) / g.d
    q = np.where(bits, b.q1, b.q0)
    return q * (opposite if rule is Rule.VOTER else opposite**2)


def pattern_probabilities(p: np.ndarray) -> np.ndarray:
    """Law of the flip pattern for independent flip probabilities ``p``.

    ``p`` has shape (..., n); the result has shape (..., 2^n) and entry ``f``
    is the probability that exactly the agents in bitmask ``f`` flip.
    """
    out = np.ones(p.shape[:-1] + (1,))
    for u in range(p.shape[-1]):
        pu = p[..., u : u + 1]
        out = np.concatenate([out * (1.0 - pu), out * pu], axis=-1)
    return out


def _code(s, n: int) -> int:
    if isinstance(s, OpinionState):
        if s.n != n:
            raise ParameterError(f"state length {s.n} does not match n={n}")
        return s.to_int()
    code = int(s)
    if not 0 <= code < (1 << n):
        raise ParameterError(f"state code {code} outside [0, 2^{n})")
    return code


def transition_probability(g: Graph, s_from, s_to, b: BiasParams, rule) -> float:
    """P(X(t+1) = s_to | X(t) = s_from), a product over agents."""
    _capacity(g)
    rule = Rule.parse(rule)
    src = OpinionState.from_int(g.n, _code(s_from, g.n))
    dst = OpinionState.from_int(g.n, _code(s_to, g.n))
    ones = src.bits[g.table].sum(axis=1)
    opposite = np.where(src.bits, g.d - ones, ones) / g.d
    q = np.where(src.bits, b.q1, b.q0)
    flip = q * (opposite if rule is Rule.VOTER else opposite**2)
    changed = src.bits != dst.bits
    return float(np.prod(np.where(changed, flip, 1.0 - flip)))


def transition_row(g: Graph, s_from, b: BiasParams, rule) -> np.ndarray:
    """Full row P(s_from -> .) over all 2^n targets."""
    _capacity(g)
    code = _code(s_from, g.n)
    src = OpinionState.from_int(g.n, code)
    ones = src.bits[g.table].sum(axis=1)
    opposite = np.where(src.bits, g.d - ones, ones) / g.d
    q = np.where(src.bits, b.q1, b.q0)
    flip = q * (opposite if Rule.parse(rule) is Rule.VOTER else opposite**2)
    patterns = pattern_probabilities(flip)
    return patterns[np.arange(1 << g.n) ^ code]


def transition_matrix(g: Graph, b: BiasParams, rule) -> np.ndarray:
    if g.n > DENSE_LIMIT:
        raise CapacityError(f"dense transition matrix limited to n <= {DENSE_LIMIT}")
    patterns = pattern_probabilities(flip_table(g, b, rule))
    codes = np.arange(1 << g.n)
    return np.take_along_axis(patterns, codes[:, None] ^ codes[None, :], axis=1)


@dataclass(frozen=True, eq=False)
class ChainSolution:
    """Absorption probability at all-ones and expected absorption time per state."""

    n: int
    rule: Rule
    bias: BiasParams
    absorb_prob_one: np.ndarray
    expected_time: np.ndarray

    def counts(self) -> np.ndarray:
        return all_states(self.n).sum(axis=1)

    def by_count(self, a: int) -> tuple[float, float]:
        """Average over uniformly placed starts with ``a`` ones."""
        mask = self.counts() == a
        return float(self.absorb_prob_one[mask].mean()), float(self.expected_time[mask].mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state_bits", "absorb_prob_one", "expected_time"])
        for code in range(1 << self.n):
            w.writerow([
                state_bits(code, self.n),
                repr(float(self.absorb_prob_one[code])),
                repr(float(self.expected_time[code])),
            ])
        return buf.getvalue()


def state_bits(code: int, n: int) -> str:
    """Bit string with vertex 0 first."""
    return "".join("1" if (code >> u) & 1 else "0" for u in range(n))


def _solve_direct(g, b, rule):
    size = 1 << g.n
    full = size - 1
    t = transition_matrix(g, b, rule)
    transient = np.arange(1, full)
    sub = t[np.ix_(transient, transient)]
    system = np.eye(transient.size) - sub
    rhs = np.stack([t[transient, full], np.ones(transient.size)], axis=1)
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise StructureError("first-step system is singular; chain is not absorbing") from exc
    if not np.all(np.isfinite(sol)) or np.linalg.norm(system @ sol - rhs) > 1e-8 * size:
        raise StructureError("first-step system is numerically singular")
    return sol[:, 0], sol[:, 1]


def _solve_gauss_seidel(g, b, rule, tol=GS_TOL, max_sweeps=100000):
    size = 1 << g.n
    full = size - 1
    flips = flip_table(g, b, rule)
    codes = np.arange(size)
    prob = np.zeros(size)
    prob[full] = 1.0
    time = np.zeros(size)
    for _ in range(max_sweeps):
        change = 0.0
        for s in range(1, full):
            row = pattern_probabilities(flips[s])[codes ^ s]
            stay = row[s]
            if stay >= 1.0:
                raise StructureError("state has no exit; chain is not absorbing")
            # row @ x includes the diagonal term, removed and re-solved for x[s]
            new_p = (row @ prob - stay * prob[s]) / (1.0 - stay)
            new_t = (1.0 + row @ time - stay * time[s]) / (1.0 - stay)
            change = max(change, abs(new_p - prob[s]), abs(new_t - time[s]) / max(1.0, new_t))
            prob[s] = new_p
            time[s] = new_t
        if change <= tol:
            return prob[1:full], time[1:full]
    raise ConsistencyError(f"Gauss-Seidel did not converge in {max_sweeps} sweeps")


def solve_absorption(g: Graph, b: BiasParams, rule, method: str = "auto") -> ChainSolution:
    """Absorption probabilities at all-ones and expected consensus times.

    ``method`` is ``direct``, ``gauss-seidel`` or ``auto`` (direct up to
    ``DENSE_LIMIT`` vertices).
    """
    _capacity(g)
    rule = Rule.parse(rule)
    if not g.connected:
        raise StructureError("chain analysis requires a connected graph")
    if b.q0 == 0.0 and b.q1 == 0.0:
        raise StructureError("q0 = q1 = 0: no agent ever updates, chain is not absorbing")
    if method == "auto":
        method = "direct" if g.n <= DENSE_LIMIT else "gauss-seidel"
    if method == "direct":
        p, t = _solve_direct(g, b, rule)
    elif method == "gauss-seidel":
        p, t = _solve_gauss_seidel(g, b, rule)
    else:
        raise ParameterError(f"unknown method {method!r}")
    size = 1 << g.n
    prob = np.empty(size)
    time = np.zeros(size)
    prob[0], prob[-1] = 0.0, 1.0
    prob[1:-1] = np.clip(p, 0.0, 1.0)
    time[1:-1] = t
    return ChainSolution(g.n, rule, b, prob, time)


def monotonicity_violations(sol: ChainSolution, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Pairs (s, s | bit) where flipping one agent 0 -> 1 lowers the win probability."""
    bad = []
    codes = np.arange(1 << sol.n)
    for u in range(sol.n):
        low = codes[(codes >> u) & 1 == 0]
        high = low | (1 << u)
        drop = sol.absorb_prob_one[low] - sol.absorb_prob_one[high]
        bad.extend((int(s), int(h)) for s, h in zip(low[drop > tol], high[drop > tol]))
    return bad


def win_probability_by_count(sol: ChainSolution) -> dict[int, float]:
    return {a: sol.by_count(a)[0] for a in range(sol.n + 1)}


def binomial_z(successes: int, trials: int, p: float) -> float:
    """z-score of an observed success count against probability ``p``."""
    se = math.sqrt(max(p * (1.0 - p), 0.0) / trials)
    diff = successes / trials - p
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se
