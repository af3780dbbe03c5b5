"""One synchronous round of the biased voter and biased 2-choices rules.

Every agent reads the opinions of the *old* state; the new state is built in
a separate buffer. Random numbers are drawn as whole vectors in vertex index
order (coins first, then neighbor slots), so one generator yields a
reproducible round. The same kernel plays many independent replays of one
round from a fixed state, which is how drift statistics are sampled.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParameterError
from .graph import Graph, cut_edges


class Rule(str, Enum):
    VOTER = "voter"
    TWO_CHOICES = "two-choices"

    @classmethod
    def parse(cls, value) -> "Rule":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        if key in ("2-choices", "twochoices"):
            key = "two-choices"
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown rule {value!r}") from None


class AdversaryMode(str, Enum):
    NONE = "none"
    RANDOM_SHUFFLE = "random_shuffle"
    CUT_MINIMIZING_GREEDY = "cut_minimizing_greedy"

    @classmethod
    def parse(cls, value) -> "AdversaryMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ParameterError(f"unknown adversary mode {value!r}") from None


@dataclass(frozen=True)
class BiasParams:
    """q0: update probability of opinion-0 agents; q1: of opinion-1 agents."""

    q0: float
    q1: float

    def __post_init__(self):
        if not (0.0 <= self.q1 <= self.q0 <= 1.0):
            raise ParameterError(
                f"need 0 <= q1 <= q0 <= 1, got q0={self.q0}, q1={self.q1}"
            )

    @property
    def strict(self) -> bool:
        return self.q1 < self.q0


class OpinionState:
    """Opinion vector (True = opinion 1) with cached class sizes."""

    __slots__ = ("bits", "count_one", "count_zero")

    def __init__(self, bits):
        bits = np.array(bits, dtype=bool).reshape(-1)
        bits.setflags(write=False)
        self.bits = bits
        self.count_one = int(np.count_nonzero(bits))
        self.count_zero = bits.size - self.count_one

    @property
    def n(self) -> int:
        return self.bits.size

    @classmethod
    def from_int(cls, n: int, code: int) -> "OpinionState":
        """Bit ``u`` of ``code`` is the opinion of vertex ``u``."""
        return cls((code >> np.arange(n)) & 1)

    def to_int(self) -> int:
        return int(np.sum(self.bits.astype(np.int64) << np.arange(self.n, dtype=np.int64)))

    @classmethod
    def uniform(cls, n: int, a: int) -> "OpinionState":
        bits = np.zeros(n, dtype=bool)
        bits[:a] = True
        return cls(bits)

    @classmethod
    def random_placement(cls, n: int, a: int, rng: np.random.Generator) -> "OpinionState":
        if not 0 <= a <= n:
            raise ParameterError(f"count {a} outside [0, {n}]")
        bits = np.zeros(n, dtype=bool)
        bits[rng.choice(n, size=a, replace=False)] = True
        return cls(bits)

    def complement(self) -> "OpinionState":
        return OpinionState(~self.bits)

    def __eq__(self, other):
        if not isinstance(other, OpinionState):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"OpinionState(n={self.n}, A={self.count_one})"


@dataclass(frozen=True)
class DriftSample:
    delta_ba: int
    delta_ab: int

    @property
    def delta(self) -> int:
        return self.delta_ba - self.delta_ab


def _check(g: Graph, s: OpinionState):
    if s.n != g.n:
        raise ParameterError(f"state length {s.n} does not match n={g.n}")
    if not g.connected:
        raise ParameterError("dynamics require a connected graph")


def _slot_dtype(d: int):
    return np.int8 if d <= 127 else np.int32


def advance(g: Graph, bits: np.ndarray, b: BiasParams, rule: Rule, rng,
            replicas: int | None = None) -> np.ndarray:
    """Next opinions after one round from the state ``bits``.

    With ``replicas=k`` the round is played ``k`` independent times from the
    same state and an array of shape ``(k, n)`` is returned.
    """
    shape = bits.shape if replicas is None else (replicas, g.n)
    updating = rng.random(shape) < np.where(bits, b.q1, b.q0)
    draws = 1 if rule is Rule.VOTER else 2
    slots = rng.integers(0, g.d, size=(draws,) + shape, dtype=_slot_dtype(g.d))
    flat = g.offsets[:-1] + slots
    if replicas is None:
        seen = bits[g.adjacency[flat]]
    else:
        # opinions seen through each neighbor slot, flattened row-major (n, d)
        seen = bits[g.table].ravel()[flat]
    if rule is Rule.VOTER:
        proposal = seen[0]
    else:
        # self plus two samples: majority flips only when both samples disagree
        proposal = np.where(bits, seen[0] | seen[1], seen[0] & seen[1])
    return np.where(updating, proposal, bits)


def _step(g, s, b, rule, rng):
    _check(g, s)
    new = advance(g, s.bits, b, rule, rng)
    gained = int(np.count_nonzero(new & ~s.bits))
    lost = int(np.count_nonzero(s.bits & ~new))
    return OpinionState(new), DriftSample(gained, lost)


def voter_step(g: Graph, s: OpinionState, b: BiasParams, rng):
    """Biased voter round: an updating agent copies one uniform neighbor."""
    return _step(g, s, b, Rule.VOTER, rng)


def two_choices_step(g: Graph, s: OpinionState, b: BiasParams, rng):
    """Biased 2-choices round: majority of self and two neighbors drawn with replacement."""
    return _step(g, s, b, Rule.TWO_CHOICES, rng)


def step(g: Graph, s: OpinionState, b: BiasParams, rule, rng):
    return _step(g, s, b, Rule.parse(rule), rng)


def replay_deltas(g: Graph, s: OpinionState, b: BiasParams, rule, m: int, rng,
                  chunk: int = 20000) -> np.ndarray:
    """Realized drift of ``m`` independent one-step replays from ``s``."""
    _check(g, s)
    rule = Rule.parse(rule)
    out = np.empty(m, dtype=np.int64)
    done = 0
    while done < m:
        k = min(chunk, m - done)
        new = advance(g, s.bits, b, rule, rng, replicas=k)
        out[done : done + k] = new.sum(axis=1) - s.count_one
        done += k
    return out


def is_consensus(s: OpinionState):
    """1 or 0 if the state is unanimous, otherwise None."""
    if s.count_one == s.n:
        return 1
    if s.count_zero == s.n:
        return 0
    return None


def neighbor_counts(g: Graph, s: OpinionState) -> np.ndarray:
    """Per-vertex number of neighbors holding opinion 1."""
    return s.bits[g.table].sum(axis=1)


def flip_probabilities(g: Graph, s: OpinionState, b: BiasParams, rule) -> np.ndarray:
    """Per-agent probability of changing opinion in the next round."""
    rule = Rule.parse(rule)
    ones = neighbor_counts(g, s)
    opposite = np.where(s.bits, g.d - ones, ones) / g.d
    q = np.where(s.bits, b.q1, b.q0)
    return q * (opposite if rule is Rule.VOTER else opposite**2)


def exact_expected_drift(g: Graph, s: OpinionState, b: BiasParams, rule) -> float:
    """E[A_{t+1} - A_t | state] for one round."""
    rule = Rule.parse(rule)
    if s.n != g.n:
        raise ParameterError(f"state length {s.n} does not match n={g.n}")
    if rule is Rule.VOTER:
        return (b.q0 - b.q1) * cut_edges(g, s) / g.d
    p = flip_probabilities(g, s, b, rule)
    return float(p[~s.bits].sum() - p[s.bits].sum())


# --- adversary --------------------------------------------------------------


def _greedy_cluster(g: Graph, k: int, start: int) -> np.ndarray:
    inside = np.zeros(g.n, dtype=bool)
    pull = np.zeros(g.n, dtype=np.int64)
    current = start
    for _ in range(k):
        inside[current] = True
        np.add.at(pull, g.table[current], 1)
        score = np.where(inside, -1, pull)
        current = int(np.argmax(score))
    return inside


def adversary_shuffle(g: Graph, s: OpinionState, mode, rng) -> OpinionState:
    """Rearrange opinions over vertices keeping both counts fixed.

    ``cut_minimizing_greedy`` grows a cluster from a random vertex, always
    absorbing the outside vertex with the most neighbors already inside, and
    puts the minority opinion on it. It is a heuristic stress strategy, not
    an optimal cut minimizer.
    """
    mode = AdversaryMode.parse(mode)
    if s.n != g.n:
        raise ParameterError(f"state length {s.n} does not match n={g.n}")
    if mode is AdversaryMode.NONE or s.count_one in (0, s.n):
        return s
    if mode is AdversaryMode.RANDOM_SHUFFLE:
        return OpinionState(rng.permutation(s.bits))
    minority_is_one = s.count_one <= s.count_zero
    k = s.count_one if minority_is_one else s.count_zero
    cluster = _greedy_cluster(g, k, int(rng.integers(g.n)))
    return OpinionState(cluster if minority_is_one else ~cluster)


def squared_imbalance(g: Graph, s: OpinionState) -> float:
    """sum over B of (d_i^A/d)^2 minus sum over A of (d_i^B/d)^2."""
    ones = neighbor_counts(g, s) / g.d
    return float((ones[~s.bits] ** 2).sum() - ((1.0 - ones[s.bits]) ** 2).sum())
