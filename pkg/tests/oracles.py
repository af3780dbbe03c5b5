"""Independent reference computations used only by the tests.

Nothing here imports the package under test.
"""

import itertools
import math

import numpy as np


def jacobi_eigenvalues(a, tol=1e-13, max_sweeps=200):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, (a**2).sum() - (np.diag(a) ** 2).sum()))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # a <- R^T a R with R the (p, q) plane rotation
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
    return np.sort(np.diag(a))


def second_abs_eigenvalue(adjacency, d):
    """max |mu| over the nontrivial spectrum of A/d (drops one eigenvalue 1)."""
    mu = jacobi_eigenvalues(np.asarray(adjacency, dtype=float) / d)
    top = int(np.argmin(np.abs(mu - 1.0)))
    rest = np.delete(mu, top)
    return float(np.abs(rest).max())


def brute_conductance(n, edges):
    """min over nonempty proper S of cut(S) / (d * min(|S|, |S^c|))."""
    deg = [0] * n
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    d = deg[0]
    best = math.inf
    for k in range(1, n):
        for subset in itertools.combinations(range(n), k):
            inside = set(subset)
            cut = sum((u in inside) != (v in inside) for u, v in edges)
            best = min(best, cut / (d * min(k, n - k)))
    return best


def brute_cut(edges, ones):
    return sum(ones[u] != ones[v] for u, v in edges)


def petersen_edges():
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return outer + spokes + inner


def prism_edges(k):
    """Circular ladder on 2k vertices, 3-regular."""
    ring = [(i, (i + 1) % k) for i in range(k)]
    ring2 = [(k + i, k + (i + 1) % k) for i in range(k)]
    rungs = [(i, k + i) for i in range(k)]
    return ring + ring2 + rungs


def k33_edges():
    return [(i, j) for i in range(3) for j in range(3, 6)]


def voter_k_absorption_by_hand():
    """K3 voter with q0=1, q1=0 from the state with one 1-agent.

    The two 0-agents each see the 1-agent with probability 1/2 and flip;
    the 1-agent never moves. From A=1: P(both flip)=1/4 gives A=3,
    P(exactly one)=1/2 gives A=2, P(none)=1/4 stays. From A=2 the lone
    0-agent sees two 1-neighbors and flips surely. Every path ends at
    all-ones; the expected time from A=1 is t1 = 1 + t1/4 + t2/2 with t2 = 1,
    so t1 = 2.
    """
    return 1.0, 2.0


def _agent_flip_fraction(rule, own, neighbor_opinions, q):
    """Exact flip probability of one agent by enumerating its neighbor draws."""
    from fractions import Fraction

    d = len(neighbor_opinions)
    if rule == "voter":
        hits = sum(1 for o in neighbor_opinions if o != own)
        return q * Fraction(hits, d)
    hits = 0
    for x in neighbor_opinions:
        for y in neighbor_opinions:
            votes = own + x + y
            hits += (1 if votes >= 2 else 0) != own
    return q * Fraction(hits, d * d)


def exact_chain(n, edges, rule, q0, q1):
    """Absorption probabilities and expected times as exact fractions.

    Builds the chain from per-agent enumeration of neighbor draws and solves
    the first-step equations by Gauss-Jordan elimination over rationals.
    Returns two dicts keyed by state code (bit u = vertex u).
    """
    from fractions import Fraction

    q0, q1 = Fraction(q0), Fraction(q1)
    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    full = (1 << n) - 1
    transient = list(range(1, full))
    index = {s: i for i, s in enumerate(transient)}
    m = len(transient)
    rows = []
    for s in transient:
        bits = [(s >> u) & 1 for u in range(n)]
        flips = [_agent_flip_fraction(rule, bits[u], [bits[v] for v in nbrs[u]],
                                      q1 if bits[u] else q0) for u in range(n)]
        row = [Fraction(0)] * (m + 2)
        for pattern in range(1 << n):
            p = Fraction(1)
            for u in range(n):
                p *= flips[u] if (pattern >> u) & 1 else 1 - flips[u]
            if p == 0:
                continue
            t = s ^ pattern
            if t == full:
                row[m] += p
            elif t != 0:
                row[index[t]] -= p
        row[index[s]] += 1
        row[m + 1] = Fraction(1)
        rows.append(row)
    # Gauss-Jordan on [I - Q | r | 1]
    for col in range(m):
        piv = next(r for r in range(col, m) if rows[r][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = 1 / rows[col][col]
        rows[col] = [x * inv for x in rows[col]]
        for r in range(m):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    prob = {0: Fraction(0), full: Fraction(1)}
    time = {0: Fraction(0), full: Fraction(0)}
    for s in transient:
        prob[s] = rows[index[s]][m]
        time[s] = rows[index[s]][m + 1]
    return prob, time


def is_bipartite(n, edges):
    """Two-colour by breadth-first search."""
    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    colour = [-1] * n
    for root in range(n):
        if colour[root] >= 0:
            continue
        colour[root] = 0
        queue = [root]
        while queue:
            u = queue.pop()
            for v in nbrs[u]:
                if colour[v] < 0:
                    colour[v] = 1 - colour[u]
                    queue.append(v)
                elif colour[v] == colour[u]:
                    return False
    return True
