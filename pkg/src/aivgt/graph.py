"""Graphs over observed and latent variables and the queries run on them.

Three graph flavours are supported:

* :class:`Dag` -- a directed acyclic graph whose nodes may be flagged latent.
* :class:`MixedGraph` with ``kind="mag"`` -- a maximal ancestral graph over
  observed nodes (tails and arrowheads only).
* :class:`MixedGraph` with ``kind="pag"`` -- a partial ancestral graph; edge
  endpoints may also carry circle marks.

Internally every graph keeps a ``p x p`` mark matrix ``M`` where ``M[i][j]``
is the mark at ``j`` on the edge between ``i`` and ``j`` (``0`` when the two
nodes are not adjacent).  A DAG edge ``i -> j`` is stored as
``M[i][j] = ARROW`` and ``M[j][i] = TAIL``, so separation and ancestry code is
shared between DAGs and mixed graphs.

Set-valued results are returned as tuples of node names sorted by
declaration index.
"""

from __future__ import annotations

import enum
from collections import deque
from typing import Iterable, Sequence

import numpy as np

from .exceptions import InputError

__all__ = [
    "EdgeMark",
    "GraphKind",
    "Dag",
    "MixedGraph",
    "d_separated",
    "m_separated",
    "ancestors",
    "descendants",
    "possible_ancestors",
    "adjacents",
    "dag_to_mag",
    "is_visible",
    "is_civ_in_dag",
    "is_aiv_in_dag",
]


class EdgeMark(enum.IntEnum):
    TAIL = 1
    ARROW = 2
    CIRCLE = 3


TAIL, ARROW, CIRCLE = EdgeMark.TAIL, EdgeMark.ARROW, EdgeMark.CIRCLE


class GraphKind(str, enum.Enum):
    MAG = "mag"
    PAG = "pag"


class _Graph:
    """Shared node bookkeeping and mark-matrix storage."""

    def __init__(self, names: Sequence[str], marks: np.ndarray):
        names = tuple(str(n) for n in names)
        if len(set(names)) != len(names):
            raise InputError(f"duplicate node names in {names}")
        self._names = names
        self._index = {n: i for i, n in enumerate(names)}
        marks = np.array(marks, dtype=np.int8)
        marks.setflags(write=False)
        self._marks = marks
        # nested tuples are much faster than numpy scalars in the search loops
        self._m = tuple(tuple(int(v) for v in row) for row in marks)
        self._nbrs = tuple(
            tuple(j for j in range(len(names)) if marks[i, j]) for i in range(len(names))
        )

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def marks(self) -> np.ndarray:
        """Read-only mark matrix; ``marks[i, j]`` is the mark at ``j``."""
        return self._marks

    def __len__(self):
        return len(self._names)

    def __contains__(self, name):
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown node {name!r}") from None

    def _idx(self, nodes: Iterable[str]) -> list[int]:
        return [self.index(n) for n in nodes]

    def _names_of(self, idx: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._names[i] for i in sorted(set(idx)))

    def is_adjacent(self, a: str, b: str) -> bool:
        return bool(self._m[self.index(a)][self.index(b)])


def _check_acyclic(n: int, children: Sequence[Sequence[int]], names) -> None:
    indeg = [0] * n
    for i in range(n):
        for j in children[i]:
            indeg[j] += 1
    queue = deque(i for i in range(n) if indeg[i] == 0)
    seen = 0
    while queue:
        i = queue.popleft()
        seen += 1
        for j in children[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    if seen != n:
        stuck = [names[i] for i in range(n) if indeg[i] > 0]
        raise InputError(f"graph has a directed cycle through {stuck}")


class Dag(_Graph):
    """Directed acyclic graph; nodes listed in ``latent`` are unobserved.

    Parameters
    ----------
    names : sequence of str
        Node names in declaration order.
    edges : iterable of (parent, child)
        Directed edges given by node name.
    latent : iterable of str, optional
        Names of unobserved nodes.
    """

    def __init__(self, names: Sequence[str], edges: Iterable[tuple[str, str]], latent=()):
        names = tuple(names)
        index = {n: i for i, n in enumerate(names)}
        p = len(names)
        marks = np.zeros((p, p), dtype=np.int8)
        for a, b in edges:
            if a not in index or b not in index:
                raise InputError(f"edge {a!r} -> {b!r} references an unknown node")
            i, j = index[a], index[b]
            if i == j:
                raise InputError(f"self loop on {a!r}")
            if marks[i, j]:
                raise InputError(f"more than one edge between {a!r} and {b!r}")
            marks[i, j] = ARROW
            marks[j, i] = TAIL
        super().__init__(names, marks)
        latent = frozenset(latent)
        for v in latent:
            self.index(v)
        self._latent = tuple(i in latent for i in names)
        self._children = tuple(
            tuple(j for j in self._nbrs[i] if self._m[i][j] == ARROW) for i in range(p)
        )
        self._parents = tuple(
            tuple(j for j in self._nbrs[i] if self._m[j][i] == ARROW) for i in range(p)
        )
        _check_acyclic(p, self._children, self._names)

    @property
    def edges(self) -> tuple[tuple[str, str], ...]:
        return tuple(
            (self._names[i], self._names[j])
            for i in range(len(self))
            for j in self._children[i]
        )

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n for n, lat in zip(self._names, self._latent) if not lat)

    @property
    def latent(self) -> tuple[str, ...]:
        return tuple(n for n, lat in zip(self._names, self._latent) if lat)

    def is_latent(self, name: str) -> bool:
        return self._latent[self.index(name)]

    def parents(self, v: str) -> tuple[str, ...]:
        return self._names_of(self._parents[self.index(v)])

    def children(self, v: str) -> tuple[str, ...]:
        return self._names_of(self._children[self.index(v)])

    def has_edge(self, a: str, b: str) -> bool:
        return self._m[self.index(a)][self.index(b)] == ARROW

    def without_edge(self, a: str, b: str) -> "Dag":
        if not self.has_edge(a, b):
            raise InputError(f"edge {a} -> {b} not in graph")
        return Dag(self._names, [e for e in self.edges if e != (a, b)], self.latent)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return (
            self._names == other._names
            and self._latent == other._latent
            and np.array_equal(self._marks, other._marks)
        )

    def __hash__(self):
        return hash((self._names, self._latent, self._marks.tobytes()))

    def __repr__(self):
        return f"Dag(nodes={len(self)}, edges={len(self.edges)}, latent={list(self.latent)})"


class MixedGraph(_Graph):
    """MAG or PAG over observed variables.

    ``marks[i, j]`` holds the :class:`EdgeMark` at ``j`` on the ``i``-``j``
    edge.  MAGs are validated on construction: no circles, no undirected
    edges, no directed or almost directed cycles.  Maximality is not
    checked here (it needs separation queries); see :meth:`is_maximal`.
    """

    def __init__(self, names: Sequence[str], marks, kind: GraphKind | str):
        kind = GraphKind(kind)
        marks = np.asarray(marks, dtype=np.int8)
        p = len(names)
        if marks.shape != (p, p):
            raise InputError(f"mark matrix has shape {marks.shape}, expected {(p, p)}")
        if np.any(np.diag(marks)):
            raise InputError("self loops are not allowed")
        if not np.array_equal(marks != 0, (marks != 0).T):
            raise InputError("mark matrix must have a symmetric adjacency pattern")
        if np.any((marks < 0) | (marks > 3)):
            raise InputError("unknown mark value")
        super().__init__(names, marks)
        self.kind = kind
        if kind is GraphKind.MAG:
            self._validate_mag()

    @classmethod
    def from_edges(cls, names, edges, kind):
        """Build from ``(a, mark_at_a, mark_at_b, b)`` tuples."""
        index = {n: i for i, n in enumerate(names)}
        p = len(names)
        marks = np.zeros((p, p), dtype=np.int8)
        for a, ma, mb, b in edges:
            if a not in index or b not in index:
                raise InputError(f"edge {a!r} - {b!r} references an unknown node")
            i, j = index[a], index[b]
            if marks[i, j]:
                raise InputError(f"more than one edge between {a!r} and {b!r}")
            marks[j, i] = EdgeMark(ma)
            marks[i, j] = EdgeMark(mb)
        return cls(names, marks, kind)

    def _validate_mag(self):
        m = self._m
        p = len(self)
        for i in range(p):
            for j in self._nbrs[i]:
                if m[i][j] == CIRCLE:
                    raise InputError("a MAG cannot carry circle marks")
                if i < j and m[i][j] == TAIL and m[j][i] == TAIL:
                    raise InputError("undirected edges (selection bias) are not supported")
        children = [[j for j in self._nbrs[i] if m[i][j] == ARROW and m[j][i] == TAIL] for i in range(p)]
        _check_acyclic(p, children, self._names)
        anc = _ancestor_matrix(self)
        for i in range(p):
            for j in self._nbrs[i]:
                if m[i][j] == ARROW and m[j][i] == ARROW and anc[j][i]:
                    raise InputError(
                        f"almost directed cycle: {self._names[i]} <-> {self._names[j]}"
                    )

    def mark(self, a: str, b: str) -> EdgeMark | None:
        """Mark at ``b`` on the edge between ``a`` and ``b`` (None if absent)."""
        v = self._m[self.index(a)][self.index(b)]
        return EdgeMark(v) if v else None

    def edges(self) -> list[tuple[str, str, EdgeMark, EdgeMark]]:
        """Edges as ``(a, b, mark_at_a, mark_at_b)`` with ``a`` declared first."""
        out = []
        for i in range(len(self)):
            for j in self._nbrs[i]:
                if i < j:
                    out.append((self._names[i], self._names[j], EdgeMark(self._m[j][i]), EdgeMark(self._m[i][j])))
        return out

    def adjacency_pairs(self) -> set[frozenset[str]]:
        return {frozenset((a, b)) for a, b, _, _ in self.edges()}

    def is_maximal(self) -> bool:
        """True when every non-adjacent pair is m-separated by some subset."""
        if self.kind is not GraphKind.MAG:
            raise InputError("maximality is only defined for MAGs")
        from itertools import combinations

        p = len(self)
        for i, j in combinations(range(p), 2):
            if self._m[i][j]:
                continue
            rest = [k for k in range(p) if k not in (i, j)]
            found = False
            for r in range(len(rest) + 1):
                for z in combinations(rest, r):
                    if not _connected_idx(self, i, j, z):
                        found = True
                        break
                if found:
                    break
            if not found:
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return (
            self.kind is other.kind
            and self._names == other._names
            and np.array_equal(self._marks, other._marks)
        )

    def __hash__(self):
        return hash((self.kind, self._names, self._marks.tobytes()))

    def __repr__(self):
        return f"MixedGraph(kind={self.kind.value}, nodes={len(self)}, edges={len(self.edges())})"


# ---------------------------------------------------------------------------
# ancestry

def _ancestor_mask(g: _Graph, targets: Iterable[int]) -> list[bool]:
    """Nodes with a directed path into ``targets`` (targets included)."""
    m = g._m
    mask = [False] * len(g)
    stack = list(targets)
    for t in stack:
        mask[t] = True
    while stack:
        v = stack.pop()
        for u in g._nbrs[v]:
            # u -> v
            if not mask[u] and m[u][v] == ARROW and m[v][u] == TAIL:
                mask[u] = True
                stack.append(u)
    return mask


def _descendant_mask(g: _Graph, sources: Iterable[int]) -> list[bool]:
    m = g._m
    mask = [False] * len(g)
    stack = list(sources)
    for s in stack:
        mask[s] = True
    while stack:
        v = stack.pop()
        for u in g._nbrs[v]:
            if not mask[u] and m[v][u] == ARROW and m[u][v] == TAIL:
                mask[u] = True
                stack.append(u)
    return mask


def _ancestor_matrix(g: _Graph) -> list[list[bool]]:
    """``anc[i][j]`` is True when ``i`` is an ancestor of ``j`` (or ``i == j``)."""
    p = len(g)
    anc = [[False] * p for _ in range(p)]
    for j in range(p):
        col = _ancestor_mask(g, [j])
        for i in range(p):
            anc[i][j] = col[i]
    return anc


def _nonempty(targets):
    targets = list(targets)
    if not targets:
        raise InputError("target set must be nonempty")
    return targets


def ancestors(g: Dag | MixedGraph, targets: Iterable[str]) -> tuple[str, ...]:
    """Nodes with a directed path into some target, targets included."""
    idx = g._idx(_nonempty(targets))
    mask = _ancestor_mask(g, idx)
    return g._names_of(i for i, f in enumerate(mask) if f)


def descendants(g: Dag | MixedGraph, sources: Iterable[str]) -> tuple[str, ...]:
    idx = g._idx(_nonempty(sources))
    mask = _descendant_mask(g, idx)
    return g._names_of(i for i, f in enumerate(mask) if f)


def possible_ancestors(g: MixedGraph, targets: Iterable[str]) -> tuple[str, ...]:
    """Nodes with a possibly directed path into some target, targets included.

    A path from ``v`` is possibly directed when no edge on it has an
    arrowhead at the endpoint nearer to ``v``; circles are allowed.
    """
    if not isinstance(g, MixedGraph):
        raise InputError("possible_ancestors expects a MAG or PAG")
    idx = g._idx(_nonempty(targets))
    m = g._m
    mask = [False] * len(g)
    stack = list(idx)
    for t in stack:
        mask[t] = True
    while stack:
        v = stack.pop()
        for u in g._nbrs[v]:
            if not mask[u] and m[v][u] != ARROW:
                mask[u] = True
                stack.append(u)
    return g._names_of(i for i, f in enumerate(mask) if f)


def adjacents(g: Dag | MixedGraph, v: str) -> tuple[str, ...]:
    return g._names_of(g._nbrs[g.index(v)])


# ---------------------------------------------------------------------------
# separation

def _connected_idx(g: _Graph, a: int, b: int, z: Sequence[int]) -> bool:
    """Reachability over (node, entered-through-arrowhead) states.

    A walk may pass a non-collider only outside ``z`` and a collider only
    when it is an ancestor of ``z``.  Existence of such a walk is equivalent
    to existence of an m-connecting path.
    """
    m = g._m
    nbrs = g._nbrs
    in_z = [False] * len(g)
    for v in z:
        in_z[v] = True
    anc_z = _ancestor_mask(g, z) if z else [False] * len(g)
    seen = set()
    stack = []
    for u in nbrs[a]:
        if u == b:
            return True
        st = (u, m[a][u] == ARROW)
        if st not in seen:
            seen.add(st)
            stack.append(st)
    while stack:
        v, into = stack.pop()
        for u in nbrs[v]:
            if into and m[u][v] == ARROW:
                if not anc_z[v]:
                    continue
            elif in_z[v]:
                continue
            if u == b:
                return True
            st = (u, m[v][u] == ARROW)
            if st not in seen:
                seen.add(st)
                stack.append(st)
    return False


def _sep_args(g, a, b, z):
    ia, ib = g.index(a), g.index(b)
    iz = g._idx(z)
    if ia == ib:
        raise InputError("separation query needs two distinct nodes")
    if ia in iz or ib in iz:
        raise InputError("queried nodes may not be in the conditioning set")
    return ia, ib, iz


def d_separated(g: Dag, a: str, b: str, z: Iterable[str] = ()) -> bool:
    """True when ``z`` blocks every path between ``a`` and ``b`` in the DAG."""
    if not isinstance(g, Dag):
        raise InputError("d_separated expects a Dag")
    ia, ib, iz = _sep_args(g, a, b, z)
    return not _connected_idx(g, ia, ib, iz)


def m_separated(g: MixedGraph, a: str, b: str, z: Iterable[str] = ()) -> bool:
    """m-separation in a MAG."""
    if not isinstance(g, MixedGraph) or g.kind is not GraphKind.MAG:
        raise InputError("m_separated is defined on MAGs only")
    ia, ib, iz = _sep_args(g, a, b, z)
    return not _connected_idx(g, ia, ib, iz)


# ---------------------------------------------------------------------------
# DAG -> MAG

def _has_inducing_path(g: Dag, a: int, b: int, anc) -> bool:
    """Inducing path between ``a`` and ``b`` relative to the latent nodes.

    Every observed interior node must be a collider, and every collider must
    be an ancestor of ``a`` or ``b``.  Search runs over (node, entered
    through arrowhead) states so each state is expanded once.
    """
    m = g._m
    nbrs = g._nbrs
    latent = g._latent
    seen = set()
    stack = []
    for u in nbrs[a]:
        if u == b:
            return True
        st = (u, m[a][u] == ARROW)
        seen.add(st)
        stack.append(st)
    while stack:
        v, into = stack.pop()
        ok_collider = anc[v][a] or anc[v][b]
        for u in nbrs[v]:
            collider = into and m[u][v] == ARROW
            if collider:
                if not ok_collider:
                    continue
            elif not latent[v]:
                continue
            if u == b:
                return True
            st = (u, m[v][u] == ARROW)
            if st not in seen:
                seen.add(st)
                stack.append(st)
    return False


def dag_to_mag(g: Dag) -> MixedGraph:
    """Marginalise the latent nodes of ``g`` into a MAG over observed nodes.

    Observed ``a`` and ``b`` are adjacent iff an inducing path joins them;
    the mark at ``a`` is a tail when ``a`` is an ancestor of ``b`` and an
    arrowhead otherwise.
    """
    if not isinstance(g, Dag):
        raise InputError("dag_to_mag expects a Dag")
    obs = [i for i in range(len(g)) if not g._latent[i]]
    if not obs:
        raise InputError("DAG has no observed nodes")
    anc = _ancestor_matrix(g)
    q = len(obs)
    marks = np.zeros((q, q), dtype=np.int8)
    for x in range(q):
        for y in range(x + 1, q):
            a, b = obs[x], obs[y]
            if _has_inducing_path(g, a, b, anc):
                marks[y, x] = TAIL if anc[a][b] else ARROW
                marks[x, y] = TAIL if anc[b][a] else ARROW
    return MixedGraph([g.names[i] for i in obs], marks, GraphKind.MAG)


# ---------------------------------------------------------------------------
# visibility

def is_visible(g: MixedGraph, a: str, b: str) -> bool:
    """Whether the directed MAG edge ``a -> b`` is visible.

    It is visible when some ``c`` not adjacent to ``b`` has an edge into
    ``a``, or a collider path into ``a`` whose interior nodes are all
    parents of ``b``.
    """
    if not isinstance(g, MixedGraph) or g.kind is not GraphKind.MAG:
        raise InputError("is_visible is defined on MAGs only")
    ia, ib = g.index(a), g.index(b)
    m = g._m
    if not (m[ia][ib] == ARROW and m[ib][ia] == TAIL):
        raise InputError(f"{a} -> {b} is not a directed edge of the graph")
    adj_b = set(g._nbrs[ib])

    def parent_of_b(v):
        return m[v][ib] == ARROW and m[ib][v] == TAIL

    visited = {ia}
    stack = [ia]
    while stack:
        v = stack.pop()
        for c in g._nbrs[v]:
            if c == ib or m[c][v] != ARROW:
                continue
            if c not in adj_b and c != ia:
                return True
            # c becomes an interior collider of a longer path into a
            if c not in visited and m[v][c] == ARROW and parent_of_b(c):
                visited.add(c)
                stack.append(c)
    return False


# ---------------------------------------------------------------------------
# instrument definitions in a DAG

def _iv_args(g: Dag, s, w, y, z):
    if not isinstance(g, Dag):
        raise InputError("expected a Dag")
    names = [s, w, y]
    for v in names + list(z):
        if g.is_latent(v):
            raise InputError(f"{v} is latent")
    if len(set(names)) != 3:
        raise InputError("s, w and y must be distinct")
    if set(z) & set(names):
        raise InputError("conditioning set may not contain s, w or y")
    if not g.has_edge(w, y):
        raise InputError(f"edge {w} -> {y} is missing")


def is_civ_in_dag(g: Dag, s: str, w: str, y: str, z: Iterable[str] = ()) -> bool:
    """Conditional-instrument check for ``s`` relative to ``w -> y`` given ``z``."""
    z = list(z)
    _iv_args(g, s, w, y, z)
    if d_separated(g, s, w, z):
        return False
    if not d_separated(g.without_edge(w, y), s, y, z):
        return False
    return not (set(z) & set(descendants(g, [y])))


def is_aiv_in_dag(g: Dag, s: str, w: str, y: str, z: Iterable[str] = ()) -> bool:
    """Ancestral-instrument check: a conditional instrument whose conditioning
    set lies within the observed ancestors of ``y`` or ``s``."""
    z = list(z)
    if not is_civ_in_dag(g, s, w, y, z):
        return False
    allowed = set(ancestors(g, [y])) | set(ancestors(g, [s]))
    return set(z) <= allowed
