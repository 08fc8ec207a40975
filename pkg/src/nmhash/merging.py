"""Progressive merging of redundant code bits.

A MergeGraph sits on top of the encoder outputs.  It lives in two phases:

* Active: every node is its own group and the graph learns a symmetric
  adjacency matrix A.  Per minibatch, each bit k gets a score p_k (the
  retrieval MAP with bit k deleted, so redundant bits score high), scores
  diffuse one step along A, and A descends the pairwise score-gap loss
  sum_{i != j} |p'_i - p'_j|.  Bits whose scores the diffusion can equalize
  cheaply end up strongly connected.

* Frozen: the top-m adjacency entries are snapped to 1 and the connected
  components become merge groups.  During training each group forwards one
  randomly chosen member bit and pulls the other members toward the sign
  of the chosen one; at evaluation a group emits the majority-vote sign of
  its members (0 on ties).

Group lists are always sorted (members ascending, groups by first member),
so everything downstream is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .metrics import _ap_per_query, as_code_matrix, relevance_matrix, sign_pm1

PHASE_ACTIVE = "active"
PHASE_FROZEN = "frozen"


@dataclass
class GroupOutput:
    """Record of one merged group's forward choice."""

    group_id: int
    children: list[int]
    chosen_child: int
    value: float


def _sorted_groups(groups):
    canon = [sorted(int(i) for i in g) for g in groups]
    canon.sort(key=lambda g: g[0])
    return canon


@dataclass
class MergeGraph:
    """Adjacency state plus the current partition of nodes into groups."""

    n_nodes: int
    adjacency: np.ndarray = field(repr=False)
    phase: str
    groups: list[list[int]]
    nm_learning_rate: float = 1e-2

    def __post_init__(self):
        self.groups = _sorted_groups(self.groups)
        self.validate()

    @classmethod
    def initial(cls, n_nodes: int, nm_learning_rate: float = 1e-2) -> "MergeGraph":
        """Fresh active-phase graph: zero adjacency, singleton groups."""
        if n_nodes < 1:
            raise ConfigError(f"n_nodes must be >= 1, got {n_nodes}")
        return cls(n_nodes, np.zeros((n_nodes, n_nodes)), PHASE_ACTIVE,
                   [[i] for i in range(n_nodes)], nm_learning_rate)

    @classmethod
    def from_partition(cls, n_nodes: int, groups,
                       nm_learning_rate: float = 1e-2) -> "MergeGraph":
        """Frozen graph with the given partition; A is 1 within groups."""
        adj = np.zeros((n_nodes, n_nodes))
        for g in groups:
            idx = np.asarray(sorted(g), dtype=np.intp)
            adj[np.ix_(idx, idx)] = 1.0
        np.fill_diagonal(adj, 0.0)
        return cls(n_nodes, adj, PHASE_FROZEN, groups, nm_learning_rate)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def copy(self) -> "MergeGraph":
        return MergeGraph(self.n_nodes, self.adjacency.copy(), self.phase,
                          [list(g) for g in self.groups],
                          self.nm_learning_rate)

    def validate(self):
        a = self.adjacency
        if a.shape != (self.n_nodes, self.n_nodes):
            raise ValueError(
                f"adjacency shape {a.shape} does not match n_nodes "
                f"{self.n_nodes}"
            )
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diagonal(a) != 0.0):
            raise ValueError("adjacency diagonal must be zero")
        if self.phase not in (PHASE_ACTIVE, PHASE_FROZEN):
            raise ValueError(f"unknown phase {self.phase!r}")
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(self.n_nodes)):
            raise ValueError("groups must partition the node set")
        if self.phase == PHASE_ACTIVE:
            if any(len(g) != 1 for g in self.groups):
                raise ValueError("active-phase groups must be singletons")
        else:
            if not np.isin(a, (0.0, 1.0)).all():
                raise ValueError("frozen adjacency must be binary")
            if _components(a) != self.groups:
                raise ValueError(
                    "frozen groups must equal the adjacency components"
                )


def score_neurons(gallery_codes, gallery_labels, query_codes,
                  query_labels) -> np.ndarray:
    """Leave-one-bit-out MAP score per bit.

    p_k is the MAP of the queries against the gallery with column k deleted
    from both code matrices.  A bit whose deletion leaves MAP high is
    redundant.  Needs at least 2 columns.
    """
    g = as_code_matrix(gallery_codes)
    q = as_code_matrix(query_codes)
    if g.shape[1] != q.shape[1]:
        raise ValueError(
            f"code length mismatch: {g.shape[1]} vs {q.shape[1]}"
        )
    k = g.shape[1]
    if k < 2:
        raise ValueError("scoring needs at least 2 bits")
    rel = relevance_matrix(query_labels, gallery_labels)
    if rel.shape != (q.shape[0], g.shape[0]):
        raise ValueError("label counts do not match code matrix rows")
    # dot products of {-1,0,1} codes are exact, so removing one column by
    # subtracting its outer product reproduces the direct computation
    # bit for bit, ranking ties included.
    dots = q @ g.T
    scores = np.empty(k)
    for bit in range(k):
        dots_k = dots - np.outer(q[:, bit], g[:, bit])
        dist = ((k - 1) - dots_k) / 2.0
        order = np.argsort(dist, axis=1, kind="stable")
        rel_ranked = np.take_along_axis(rel, order, axis=1)
        scores[bit] = _ap_per_query(rel_ranked).mean()
    return scores


def propagate_scores(scores, adjacency) -> np.ndarray:
    """One diffusion step: p'_i = p_i + 1/2 sum_j a_ij (p_j - p_i).

    Symmetry of A makes the step conservative: sum(p') == sum(p).
    """
    p = np.asarray(scores, dtype=np.float64).ravel()
    a = np.asarray(adjacency, dtype=np.float64)
    if a.shape != (p.size, p.size):
        raise ValueError(
            f"adjacency shape {a.shape} does not match {p.size} scores"
        )
    return p + 0.5 * (a @ p - p * a.sum(axis=1))


def active_loss(propagated) -> float:
    """Total score gap after diffusion: sum over ordered i != j of |p'_i - p'_j|."""
    p = np.asarray(propagated, dtype=np.float64).ravel()
    return float(np.abs(p[:, None] - p[None, :]).sum())


def active_grad(scores, propagated) -> np.ndarray:
    """Adjacency gradient of active_loss.

    For i < j:  dA_ij = dA_ji = sign(p'_i - p'_j) * (p_j - p_i), with
    sign(0) = +1.  Cross-pair dependencies through the diffusion are
    ignored on purpose; this is the update rule the layer is defined by.
    """
    p = np.asarray(scores, dtype=np.float64).ravel()
    pp = np.asarray(propagated, dtype=np.float64).ravel()
    if p.size != pp.size:
        raise ValueError("scores and propagated scores differ in length")
    signs = sign_pm1(pp[:, None] - pp[None, :])
    gaps = p[None, :] - p[:, None]
    upper = np.triu(signs * gaps, k=1)
    return upper + upper.T


def apply_active_step(graph: MergeGraph, adjacency_grad) -> MergeGraph:
    """A <- A - nm_learning_rate * dA.  Active phase only; returns the graph."""
    if graph.phase != PHASE_ACTIVE:
        raise ValueError("adjacency updates are only legal in active phase")
    da = np.asarray(adjacency_grad, dtype=np.float64)
    if da.shape != graph.adjacency.shape:
        raise ValueError(
            f"gradient shape {da.shape} does not match adjacency "
            f"{graph.adjacency.shape}"
        )
    if not np.array_equal(da, da.T) or np.any(np.diagonal(da) != 0.0):
        raise ValueError("adjacency gradient must be symmetric, zero diagonal")
    graph.adjacency = graph.adjacency - graph.nm_learning_rate * da
    return graph


def _ranked_pairs(adjacency):
    n = adjacency.shape[0]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    # highest value first; equal values fall back to lexicographic (i, j)
    pairs.sort(key=lambda ij: (-adjacency[ij[0], ij[1]], ij[0], ij[1]))
    return pairs


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _components(binary_adjacency) -> list[list[int]]:
    n = binary_adjacency.shape[0]
    uf = _UnionFind(n)
    rows, cols = np.nonzero(np.triu(binary_adjacency, k=1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        uf.union(i, j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return _sorted_groups(groups.values())


def groups_after_truncation(adjacency, m: int) -> list[list[int]]:
    """Connected components after keeping only the m largest edges.

    Edges are ranked by adjacency value, ties by lexicographically smallest
    (i, j).  Pure function of (A, m); used by truncate and by schedule
    planning.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    n = a.shape[0]
    max_edges = n * (n - 1) // 2
    if not 0 <= m <= max_edges:
        raise ValueError(f"m must be in [0, {max_edges}], got {m}")
    binary = np.zeros_like(a)
    for i, j in _ranked_pairs(a)[:m]:
        binary[i, j] = binary[j, i] = 1.0
    return _components(binary)


def truncate(graph: MergeGraph, m: int) -> MergeGraph:
    """Snap the top-m edges to 1, drop the rest, switch to frozen phase.

    The graph's groups become the connected components of the binary
    adjacency.  Exactly m entries survive in the strict upper triangle.
    """
    if graph.phase != PHASE_ACTIVE:
        raise ValueError("truncation is only legal in active phase")
    a = graph.adjacency
    n = graph.n_nodes
    max_edges = n * (n - 1) // 2
    if not 0 <= m <= max_edges:
        raise ValueError(f"m must be in [0, {max_edges}], got {m}")
    binary = np.zeros_like(a)
    for i, j in _ranked_pairs(a)[:m]:
        binary[i, j] = binary[j, i] = 1.0
    graph.adjacency = binary
    graph.groups = _components(binary)
    graph.phase = PHASE_FROZEN
    graph.validate()
    return graph


def _chosen(choice) -> int:
    return choice.chosen_child if isinstance(choice, GroupOutput) else int(choice)


def frozen_forward(graph: MergeGraph, u, rng):
    """Forward one output vector through the frozen graph.

    Each group emits the value of one uniformly chosen member (singletons
    emit their sole node without consuming randomness).  Returns
    (merged values, one GroupOutput per group).
    """
    if graph.phase != PHASE_FROZEN:
        raise ValueError("frozen_forward requires a frozen graph")
    v = np.asarray(u, dtype=np.float64).ravel()
    if v.size != graph.n_nodes:
        raise ValueError(
            f"got {v.size} values for {graph.n_nodes} nodes"
        )
    merged = np.empty(graph.n_groups)
    records = []
    for gid, members in enumerate(graph.groups):
        child = members[0] if len(members) == 1 else \
            members[int(rng.integers(len(members)))]
        merged[gid] = v[child]
        records.append(GroupOutput(gid, list(members), child, float(v[child])))
    return merged, records


def draw_choices(graph: MergeGraph, rng) -> list[int]:
    """One uniformly chosen member per group (shared by a whole batch)."""
    if graph.phase != PHASE_FROZEN:
        raise ValueError("choices only exist in frozen phase")
    return [members[0] if len(members) == 1 else
            members[int(rng.integers(len(members)))]
            for members in graph.groups]


def apply_choices(graph: MergeGraph, outputs, choices) -> np.ndarray:
    """Batch form of frozen_forward for already-drawn choices."""
    u = np.asarray(outputs, dtype=np.float64)
    idx = [_chosen(c) for c in choices]
    if len(idx) != graph.n_groups:
        raise ValueError("one choice per group required")
    return u[:, idx] if u.ndim == 2 else u[idx]


def frozen_loss(graph: MergeGraph, u, choices) -> float:
    """Tie-members-together penalty for one vector (or a batch).

    sum over groups g, members i != chosen(g) of (u_i - sign(u_chosen))^2.
    """
    if graph.phase != PHASE_FROZEN:
        raise ValueError("frozen_loss requires a frozen graph")
    v = np.atleast_2d(np.asarray(u, dtype=np.float64))
    total = 0.0
    for members, choice in zip(graph.groups, choices):
        c = _chosen(choice)
        target = sign_pm1(v[:, c])
        for i in members:
            if i != c:
                total += float(((v[:, i] - target) ** 2).sum())
    return total


def frozen_grads(graph: MergeGraph, u, choices, d_merged) -> np.ndarray:
    """Route gradients from merged outputs back to the member nodes.

    The chosen member of each group receives the upstream gradient; every
    other member i receives 2 (u_i - sign(u_chosen)), the gradient of
    frozen_loss with the sign treated as constant.  Accepts a single
    vector or a batch (rows).
    """
    if graph.phase != PHASE_FROZEN:
        raise ValueError("frozen_grads requires a frozen graph")
    v = np.asarray(u, dtype=np.float64)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    d2 = np.atleast_2d(np.asarray(d_merged, dtype=np.float64))
    if d2.shape != (v2.shape[0], graph.n_groups):
        raise ValueError(
            f"merged gradient shape {d2.shape} does not match "
            f"({v2.shape[0]}, {graph.n_groups})"
        )
    out = np.zeros_like(v2)
    for gid, members in enumerate(graph.groups):
        c = _chosen(choices[gid])
        if c not in members:
            raise ValueError(f"choice {c} is not a member of group {gid}")
        out[:, c] = d2[:, gid]
        if len(members) > 1:
            target = sign_pm1(v2[:, c])
            for i in members:
                if i != c:
                    out[:, i] = 2.0 * (v2[:, i] - target)
    return out[0] if single else out


def eval_forward(graph: MergeGraph, u) -> np.ndarray:
    """Evaluation-mode codes: per group, the majority-vote sign.

    code_g = sign(sum over members of sign(u_i)) with inner sign(0) = +1;
    the outer sign keeps 0 for exact ties, so outputs live in {-1, 0, +1}.
    Accepts a single vector or a batch (rows); allowed on frozen graphs
    and on all-singleton active graphs.
    """
    if graph.phase == PHASE_ACTIVE and any(len(g) > 1 for g in graph.groups):
        raise ValueError("eval_forward on an active graph needs singletons")
    v = np.asarray(u, dtype=np.float64)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    if v2.shape[1] != graph.n_nodes:
        raise ValueError(
            f"got {v2.shape[1]} values for {graph.n_nodes} nodes"
        )
    codes = np.empty((v2.shape[0], graph.n_groups))
    for gid, members in enumerate(graph.groups):
        votes = sign_pm1(v2[:, members]).sum(axis=1)
        codes[:, gid] = np.sign(votes)
    return codes[0] if single else codes
