"""Regular graphs: construction, spectral profile, conductance and cuts.

Graphs are stored in compressed adjacency form. Because every graph here is
d-regular, the offsets are always ``arange(n + 1) * d`` and the flat neighbor
array reshapes to an ``(n, d)`` table, which the dynamics index directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    CapacityError,
    GenerationError,
    ParameterError,
    SpectralError,
    StructureError,
)

MAX_CONDUCTANCE_N = 22


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable d-regular simple undirected graph.

    ``adjacency`` holds the sorted neighbor lists back to back; vertex ``u``
    owns ``adjacency[offsets[u]:offsets[u + 1]]``.
    """

    n: int
    d: int
    adjacency: np.ndarray
    offsets: np.ndarray
    connected: bool
    kind: str = "custom"
    _table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.adjacency.setflags(write=False)
        self.offsets.setflags(write=False)
        table = self.adjacency.reshape(self.n, self.d)
        object.__setattr__(self, "_table", table)

    @property
    def table(self) -> np.ndarray:
        """Neighbor table of shape ``(n, d)``; row ``u`` lists N(u)."""
        return self._table

    def neighbors(self, u: int) -> np.ndarray:
        return self.adjacency[self.offsets[u] : self.offsets[u + 1]]

    @property
    def num_edges(self) -> int:
        return self.n * self.d // 2

    def edges(self) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with u < v, sorted."""
        u = np.repeat(np.arange(self.n, dtype=np.int64), self.d)
        v = self.adjacency.astype(np.int64)
        keep = u < v
        return np.stack([u[keep], v[keep]], axis=1)

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.float64)
        rows = np.repeat(np.arange(self.n), self.d)
        a[rows, self.adjacency] = 1.0
        return a

    def same_as(self, other: "Graph") -> bool:
        return (
            self.n == other.n
            and self.d == other.d
            and np.array_equal(self.adjacency, other.adjacency)
        )

    @classmethod
    def from_edges(cls, n: int, edges, kind: str = "custom") -> "Graph":
        """Build a graph from undirected edges, validating regularity.

        Raises ParameterError if the edges do not describe a simple regular
        graph on ``n`` vertices.
        """
        if n < 1:
            raise ParameterError(f"n must be positive, got {n}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ParameterError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ParameterError("self-loop in edge list")
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        degree = np.bincount(src, minlength=n)
        if n > 1 and degree.size and not np.all(degree == degree[0]):
            raise ParameterError("graph is not regular")
        d = int(degree[0]) if degree.size else 0
        if d < 1:
            raise ParameterError("graph has no edges")
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
        if np.any(dup):
            raise ParameterError("repeated edge in edge list")
        adjacency = dst.astype(np.int32)
        offsets = np.arange(n + 1, dtype=np.int64) * d
        return cls(n, d, adjacency, offsets, _is_connected(n, d, adjacency), kind)


def _is_connected(n: int, d: int, adjacency: np.ndarray) -> bool:
    rows = np.repeat(np.arange(n), d)
    m = csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, adjacency)), shape=(n, n))
    count, _ = connected_components(m, directed=False)
    return count == 1


def validate(g: Graph) -> None:
    """Check every structural invariant; raise StructureError on violation."""
    if g.adjacency.shape != (g.n * g.d,):
        raise StructureError("adjacency length is not n*d")
    if (g.n * g.d) % 2:
        raise StructureError("n*d is odd")
    if not np.array_equal(g.offsets, np.arange(g.n + 1) * g.d):
        raise StructureError("offsets are not those of a regular graph")
    t = g.table.astype(np.int64)
    u = np.arange(g.n)[:, None]
    if np.any(t == u):
        raise StructureError("self-loop")
    if g.d > 1 and np.any(np.diff(t, axis=1) <= 0):
        raise StructureError("neighbor lists not strictly increasing")
    fwd = np.sort((u * g.n + t).ravel())
    rev = np.sort((t * g.n + u).ravel())
    if not np.array_equal(fwd, rev):
        raise StructureError("adjacency is not symmetric")


# --- generators -----------------------------------------------------------


def generate_complete(n: int) -> Graph:
    if n < 2:
        raise ParameterError(f"complete graph needs n >= 2, got {n}")
    full = np.broadcast_to(np.arange(n, dtype=np.int32), (n, n))
    adjacency = np.ascontiguousarray(full[~np.eye(n, dtype=bool)])
    offsets = np.arange(n + 1, dtype=np.int64) * (n - 1)
    return Graph(n, n - 1, adjacency, offsets, True, "complete")


def generate_cycle(n: int) -> Graph:
    if n < 3:
        raise ParameterError(f"cycle needs n >= 3, got {n}")
    i = np.arange(n)
    table = np.sort(np.stack([(i - 1) % n, (i + 1) % n], axis=1), axis=1)
    adjacency = table.ravel().astype(np.int32)
    offsets = np.arange(n + 1, dtype=np.int64) * 2
    return Graph(n, 2, adjacency, offsets, True, "cycle")


def _pairing_attempt(n: int, d: int, rng: np.random.Generator):
    # Pair stubs in rounds; invalid pairs go back into the pool for the next
    # shuffle. Returns None when the leftover pool admits no valid pair.
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    edges: set[tuple[int, int]] = set()
    while stubs.size:
        rng.shuffle(stubs)
        leftover: list[int] = []
        for u, v in stubs.reshape(-1, 2).tolist():
            if u > v:
                u, v = v, u
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                leftover.append(u)
                leftover.append(v)
        if leftover and not _has_valid_pair(edges, leftover):
            return None
        stubs = np.array(leftover, dtype=np.int64)
    return edges


def _has_valid_pair(edges, leftover) -> bool:
    nodes = sorted(set(leftover))
    for i, u in enumerate(nodes):
        for v in nodes[i + 1 :]:
            if (u, v) not in edges:
                return True
    return False


def generate_random_regular(n: int, d: int, seed: int, max_restarts: int = 1000) -> Graph:
    """Random simple d-regular graph from stub pairing.

    Stubs are matched uniformly; a pair that would form a loop or repeated
    edge is returned to the pool and re-paired on the next round, and the
    whole attempt restarts if the pool gets stuck. Output is a function of
    ``(n, d, seed)`` only.
    """
    if n < 1 or d < 1:
        raise ParameterError(f"n and d must be positive, got n={n}, d={d}")
    if d >= n:
        raise ParameterError(f"need d < n, got n={n}, d={d}")
    if (n * d) % 2:
        raise ParameterError(f"n*d must be even (parity), got n={n}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_restarts):
        edges = _pairing_attempt(n, d, rng)
        if edges is not None:
            g = Graph.from_edges(n, sorted(edges), kind="random-regular")
            return g
    raise GenerationError(
        f"no simple {d}-regular graph on {n} vertices after {max_restarts} restarts"
    )


# --- spectral -------------------------------------------------------------


@dataclass(frozen=True)
class SpectralProfile:
    lam: float
    residual: float
    iterations: int
    phi_lower: float
    phi_upper: float

    @classmethod
    def from_lambda(cls, lam: float, residual: float = 0.0, iterations: int = 0):
        lower, upper = cheeger_bracket(lam)
        return cls(lam, residual, iterations, lower, upper)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "phi_lower": self.phi_lower,
            "phi_upper": self.phi_upper,
        }


def cheeger_bracket(lam: float) -> tuple[float, float]:
    return (1.0 - lam) / 2.0, math.sqrt(2.0 * (1.0 - lam))


def scaled_matvec(g: Graph, v: np.ndarray) -> np.ndarray:
    """Apply M = A/d to ``v``."""
    return v[g.table].sum(axis=1) / g.d


def default_max_iter(n: int) -> int:
    return max(100, int(10 * n * math.log(max(n, 2))))


def second_eigenvalue(
    g: Graph, tol: float = 1e-8, max_iter: int | None = None, seed: int = 0
) -> SpectralProfile:
    """Largest |eigenvalue| of A/d orthogonal to the all-ones vector.

    Power iteration runs on M^2, so the negative end of the spectrum is
    captured too. The all-ones component is projected out after every
    product. ``residual`` is ``||M^2 v - mu v||`` for the unit iterate ``v``.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    if not g.connected:
        raise StructureError("second_eigenvalue requires a connected graph")
    if max_iter is None:
        max_iter = default_max_iter(g.n)
    if g.n == 1:
        return SpectralProfile.from_lambda(0.0)

    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(g.n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    mu = 0.0
    residual = math.inf
    best = (math.inf, 0.0)
    for it in range(1, max_iter + 1):
        w = scaled_matvec(g, scaled_matvec(g, v))
        w -= w.mean()
        mu = float(v @ w)
        residual = float(np.linalg.norm(w - mu * v))
        if residual < best[0]:
            best = (residual, mu)
        if residual <= tol:
            lam = min(1.0, math.sqrt(max(mu, 0.0)))
            return SpectralProfile.from_lambda(lam, residual, it)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # M^2 vanishes off the constants: every nontrivial eigenvalue is 0
            return SpectralProfile.from_lambda(0.0, 0.0, it)
        v = w / norm
    est = min(1.0, math.sqrt(max(best[1], 0.0)))
    raise SpectralError(
        f"power iteration did not reach tol={tol} in {max_iter} iterations "
        f"(residual {best[0]:.3e})",
        estimate=est,
        residual=best[0],
        iterations=max_iter,
    )


# --- cuts and conductance ---------------------------------------------------


def _bits_of(s) -> np.ndarray:
    return np.asarray(getattr(s, "bits", s), dtype=bool)


def cut_edges(g: Graph, s) -> int:
    """Number of edges whose endpoints hold different opinions, E(A, B)."""
    bits = _bits_of(s)
    if bits.shape != (g.n,):
        raise ParameterError(f"state length {bits.shape} does not match n={g.n}")
    return int(np.count_nonzero(bits[:, None] != bits[g.table])) // 2


def exact_conductance(g: Graph) -> float:
    """min over nonempty proper S of E(S, S^c) / (d * min(|S|, |S^c|)).

    Enumerates every subset not containing the last vertex; the complement
    covers the rest, so this matches the |S| <= n/2 form exactly.
    """
    if g.n > MAX_CONDUCTANCE_N:
        raise CapacityError(f"exact conductance limited to n <= {MAX_CONDUCTANCE_N}")
    if g.n < 2:
        raise ParameterError("conductance needs at least two vertices")
    masks = np.arange(1, 1 << (g.n - 1), dtype=np.int64)
    cut = np.zeros(masks.size, dtype=np.int64)
    for u, v in g.edges():
        cut += ((masks >> u) ^ (masks >> v)) & 1
    size = np.zeros(masks.size, dtype=np.int64)
    for u in range(g.n - 1):
        size += (masks >> u) & 1
    smaller = np.minimum(size, g.n - size)
    return float(np.min(cut / (g.d * smaller)))


# --- edge-list serialization ----------------------------------------------


def format_edgelist(g: Graph) -> str:
    lines = [f"{g.n} {g.d}"]
    lines.extend(f"{u} {v}" for u, v in g.edges().tolist())
    return "\n".join(lines) + "\n"


def parse_edgelist(text: str) -> Graph:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    if not rows or len(rows[0]) != 2:
        raise ParameterError("edge list must start with an 'n d' header")
    n, d = int(rows[0][0]), int(rows[0][1])
    edges = [(int(a), int(b)) for a, b in rows[1:]]
    g = Graph.from_edges(n, edges)
    if g.d != d:
        raise ParameterError(f"header degree {d} does not match edges (degree {g.d})")
    return g


def write_edgelist(g: Graph, path) -> None:
    Path(path).write_text(format_edgelist(g))


def read_edgelist(path) -> Graph:
    return parse_edgelist(Path(path).read_text())


def build_graph(kind: str, n: int, d: int | None = None, seed: int = 0) -> Graph:
    """Dispatch on generator name: ``complete``, ``cycle``, ``random-regular``."""
    if kind == "complete":
        return generate_complete(n)
    if kind == "cycle":
        return generate_cycle(n)
    if kind in ("random-regular", "random_regular"):
        if d is None:
            raise ParameterError("random-regular graphs need a degree d")
        return generate_random_regular(n, d, seed)
    raise ParameterError(f"unknown graph kind {kind!r}")
