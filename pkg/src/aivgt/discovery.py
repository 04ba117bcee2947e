"""Constraint-based PAG learning (FCI).

Phases:

1. order-independent skeleton search over subsets of current neighbours,
2. refinement over Possible-D-SEP sets,
3. unshielded collider orientation from the recorded separating sets,
4. orientation rules R1-R4 and R8-R10.  R5-R7 only fire on undirected
   edges, which never appear without selection bias, so they are omitted.

Conditional independence comes from a backend: Fisher z on a covariance
matrix, or d-separation in a known DAG (for structural testing).
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Protocol, Sequence

import numpy as np

from .exceptions import InputError
from .graph import ARROW, CIRCLE, TAIL, Dag, GraphKind, MixedGraph, _connected_idx
from .stats import CovMatrix, fisher_z_pvalues, fisher_z_test

log = logging.getLogger(__name__)


class CiBackend(Protocol):
    labels: tuple[str, ...]

    def independent(self, a: int, b: int, z: tuple[int, ...]) -> bool: ...


class FisherZBackend:
    """Gaussian CI test on a sample covariance matrix."""

    def __init__(self, cov: CovMatrix, alpha: float = 0.05):
        if not 0 < alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        self.cov = cov
        self.alpha = alpha
        self.labels = cov.labels

    def independent(self, a, b, z):
        return fisher_z_test(self.cov, a, b, z).p_value > self.alpha

    def independent_many(self, a, b, zs) -> list[bool]:
        p = fisher_z_pvalues(self.cov, a, b, zs)
        for k in np.flatnonzero(np.isnan(p)):
            fisher_z_test(self.cov, a, b, zs[k])  # raises the specific error
        return p > self.alpha


class OracleBackend:
    """d-separation in a known DAG; ``labels`` are its observed nodes."""

    def __init__(self, dag: Dag, cols: Sequence[str] | None = None):
        self.dag = dag
        self.labels = tuple(dag.observed if cols is None else cols)
        for c in self.labels:
            if dag.is_latent(c):
                raise InputError(f"oracle column {c!r} is latent in the DAG")
        self._map = [dag.index(c) for c in self.labels]

    def independent(self, a, b, z):
        m = self._map
        return not _connected_idx(self.dag, m[a], m[b], [m[k] for k in z])


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.05
    max_cond_size: int | None = None
    stable_skeleton: bool = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if self.max_cond_size is not None and self.max_cond_size < 0:
            raise InputError("max_cond_size must be nonnegative")


@dataclass(frozen=True)
class LearnResult:
    graph: MixedGraph
    sepsets: dict = field(repr=False)
    warnings: tuple[str, ...] = ()
    n_tests: int = 0

    def sepset(self, a: str, b: str) -> tuple[str, ...] | None:
        return self.sepsets.get(frozenset((a, b)))


class _Fci:
    def __init__(self, backend: CiBackend, cols: Sequence[str], cfg: LearnerConfig):
        labels = list(backend.labels)
        for c in cols:
            if c not in labels:
                raise InputError(f"column {c!r} unknown to the CI backend")
        self.backend = backend
        self.cols = tuple(cols)
        self.bidx = [labels.index(c) for c in cols]
        self.cfg = cfg
        self.p = len(cols)
        self.cache: dict = {}
        self.warnings: list[str] = []
        self.sepset: dict[tuple[int, int], tuple[int, ...]] = {}
        self.adj = [set(range(self.p)) - {i} for i in range(self.p)]
        self.M = [[0] * self.p for _ in range(self.p)]

    # -- CI ------------------------------------------------------------------
    def indep(self, i, j, s) -> bool:
        if i > j:
            i, j = j, i
        key = (i, j, s)
        if key not in self.cache:
            b = self.bidx
            self.cache[key] = self.backend.independent(b[i], b[j], tuple(b[k] for k in s))
        return self.cache[key]

    def _search_pair(self, i, j, pools, size, store=True) -> tuple[int, ...] | None:
        """First set (in sorted order) that separates i and j, or None."""
        cands = set()
        for pool in pools:
            if len(pool) >= size:
                cands.update(combinations(sorted(pool), size))
        cands = sorted(cands)
        many = getattr(self.backend, "independent_many", None)
        if many is None or len(cands) < 8:
            for s in cands:
                if self.indep(i, j, s):
                    return s
            return None
        if i > j:
            i, j = j, i
        b = np.asarray(self.bidx)
        start, chunk = 0, 64
        while start < len(cands):
            block = cands[start:start + chunk]
            if not store:
                hits = np.flatnonzero(many(b[i], b[j], b[np.asarray(block, dtype=int)]))
                if hits.size:
                    return block[hits[0]]
                start += chunk
                chunk = min(chunk * 4, 16384)
                continue
            todo = [s for s in block if (i, j, s) not in self.cache]
            res = many(b[i], b[j], b[np.asarray(todo, dtype=int)]) if todo else []
            fresh = dict(zip(todo, res))
            for s in block:
                hit = bool(fresh[s]) if s in fresh else self.cache[(i, j, s)]
                if store and s in fresh:
                    self.cache[(i, j, s)] = hit
                if hit:
                    return s
            start += chunk
            chunk = min(chunk * 4, 16384)
        return None

    def _remove(self, i, j, s):
        self.adj[i].discard(j)
        self.adj[j].discard(i)
        self.sepset[(min(i, j), max(i, j))] = s

    # -- phase 1 -------------------------------------------------------------
    def skeleton(self):
        cap = self.cfg.max_cond_size
        level = 0
        while True:
            snap = [set(a) for a in self.adj] if self.cfg.stable_skeleton else self.adj
            testable = False
            removals = []
            for i in range(self.p):
                for j in sorted(self.adj[i]):
                    if j < i or j not in self.adj[i]:
                        continue
                    pools = [snap[i] - {j}, snap[j] - {i}]
                    if max(len(q) for q in pools) < level:
                        continue
                    testable = True
                    s = self._search_pair(i, j, pools, level)
                    if s is not None:
                        if self.cfg.stable_skeleton:
                            removals.append((i, j, s))
                        else:
                            self._remove(i, j, s)
            for i, j, s in removals:
                self._remove(i, j, s)
            if not testable:
                break
            level += 1
            if cap is not None and level > cap:
                if any(len(a) - 1 >= level for a in self.adj):
                    self.warnings.append(
                        f"skeleton search truncated at conditioning size {cap}"
                    )
                break

    # -- orientation helpers -----------------------------------------------
    def reset_marks(self):
        p = self.p
        self.M = [[CIRCLE if j in self.adj[i] else 0 for j in range(p)] for i in range(p)]

    def orient_colliders(self):
        M, adj = self.M, self.adj
        for k in range(self.p):
            nb = sorted(adj[k])
            for i, j in combinations(nb, 2):
                if j in adj[i]:
                    continue
                s = self.sepset.get((i, j))
                if s is None:
                    continue
                if k not in s:
                    M[i][k] = ARROW
                    M[j][k] = ARROW

    def pds(self, x) -> set[int]:
        M, adj = self.M, self.adj
        out = set(adj[x])
        seen = {(x, k) for k in adj[x]}
        stack = list(seen)
        while stack:
            a, b = stack.pop()
            for c in adj[b]:
                if c == a or c == x or (b, c) in seen:
                    continue
                if (M[a][b] == ARROW and M[c][b] == ARROW) or c in adj[a]:
                    seen.add((b, c))
                    out.add(c)
                    stack.append((b, c))
        return out

    # -- phase 2 -------------------------------------------------------------
    def possible_dsep_stage(self):
        cap = self.cfg.max_cond_size
        pds = [self.pds(x) for x in range(self.p)]
        removals = []
        for i in range(self.p):
            for j in sorted(self.adj[i]):
                if j < i:
                    continue
                pools = [pds[i] - {j}, pds[j] - {i}]
                top = max(len(q) for q in pools)
                if cap is not None and top > cap:
                    top = cap
                    self.warnings.append(
                        f"possible-d-sep search for {self.cols[i]}-{self.cols[j]} truncated at size {cap}"
                    )
                for size in range(top + 1):
                    s = self._search_pair(i, j, pools, size, store=False)
                    if s is not None:
                        removals.append((i, j, s))
                        break
        for i, j, s in removals:
            self._remove(i, j, s)

    # -- phase 4 -------------------------------------------------------------
    def _set(self, at_node, other, mark) -> bool:
        """Set the mark at ``at_node`` on the edge to ``other`` if it is a circle."""
        if self.M[other][at_node] == CIRCLE:
            self.M[other][at_node] = mark
            return True
        return False

    def _is_parent(self, a, b):
        return self.M[a][b] == ARROW and self.M[b][a] == TAIL

    def _pd_edge(self, u, v):
        """Edge u - v is potentially directed from u to v."""
        return self.M[v][u] != ARROW and self.M[u][v] != TAIL

    def rule1(self):
        M, adj = self.M, self.adj
        changed = False
        for b in range(self.p):
            for a in sorted(adj[b]):
                if M[a][b] != ARROW:
                    continue
                for c in sorted(adj[b]):
                    if c == a or c in adj[a] or M[c][b] != CIRCLE:
                        continue
                    self.M[c][b] = TAIL
                    self._set(c, b, ARROW)
                    changed = True
        return changed

    def rule2(self):
        M, adj = self.M, self.adj
        changed = False
        for a in range(self.p):
            for c in sorted(adj[a]):
                if M[a][c] != CIRCLE:
                    continue
                for b in sorted(adj[a] & adj[c]):
                    if (self._is_parent(a, b) and M[b][c] == ARROW) or (
                        M[a][b] == ARROW and self._is_parent(b, c)
                    ):
                        M[a][c] = ARROW
                        changed = True
                        break
        return changed

    def rule3(self):
        M, adj = self.M, self.adj
        changed = False
        for b in range(self.p):
            for t in sorted(adj[b]):
                if M[t][b] != CIRCLE:
                    continue
                cand = [v for v in sorted(adj[b] & adj[t]) if M[v][b] == ARROW and M[v][t] == CIRCLE]
                for a, c in combinations(cand, 2):
                    if c not in adj[a]:
                        M[t][b] = ARROW
                        changed = True
                        break
        return changed

    def _disc_theta(self, a, b, c):
        """Start of a discriminating path <theta, ..., a, b, c> for b, if any."""
        M, adj = self.M, self.adj
        visited = {a, b, c}
        queue = deque([a])
        while queue:
            v = queue.popleft()
            for t in sorted(adj[v]):
                if t in visited or M[t][v] != ARROW:
                    continue
                if t not in adj[c]:
                    return t
                if self._is_parent(t, c) and M[v][t] == ARROW:
                    visited.add(t)
                    queue.append(t)
        return None

    def rule4(self):
        M, adj = self.M, self.adj
        changed = False
        for b in range(self.p):
            for c in sorted(adj[b]):
                if M[c][b] != CIRCLE:
                    continue
                for a in sorted(adj[b] & adj[c]):
                    if M[b][a] != ARROW or not self._is_parent(a, c):
                        continue
                    theta = self._disc_theta(a, b, c)
                    if theta is None:
                        continue
                    s = self.sepset.get((min(theta, c), max(theta, c)), ())
                    if b in s:
                        M[c][b] = TAIL
                        self._set(c, b, ARROW)
                    else:
                        M[c][b] = ARROW
                        self._set(c, b, ARROW)
                        self._set(b, a, ARROW)
                    changed = True
                    break
        return changed

    def _uncovered_pd_firsts(self, a, target, exclude) -> set[int]:
        """Second nodes of uncovered potentially directed paths a -> ... -> target."""
        adj = self.adj
        firsts = set()
        for m in sorted(adj[a]):
            if m in exclude or not self._pd_edge(a, m):
                continue
            if m == target:
                firsts.add(m)
                continue
            stack = [(a, m, frozenset((a, m)))]
            found = False
            while stack and not found:
                prev, cur, seen = stack.pop()
                for nxt in adj[cur]:
                    if nxt in seen or nxt in exclude or nxt in adj[prev]:
                        continue
                    if not self._pd_edge(cur, nxt):
                        continue
                    if nxt == target:
                        found = True
                        break
                    stack.append((cur, nxt, seen | {nxt}))
            if found:
                firsts.add(m)
        return firsts

    def rule8(self):
        M, adj = self.M, self.adj
        changed = False
        for a in range(self.p):
            for c in sorted(adj[a]):
                if not (M[c][a] == CIRCLE and M[a][c] == ARROW):
                    continue
                for b in sorted(adj[a] & adj[c]):
                    if not self._is_parent(b, c):
                        continue
                    if self._is_parent(a, b) or (M[b][a] == TAIL and M[a][b] == CIRCLE):
                        M[c][a] = TAIL
                        changed = True
                        break
        return changed

    def rule9(self):
        M, adj = self.M, self.adj
        changed = False
        for a in range(self.p):
            for c in sorted(adj[a]):
                if not (M[c][a] == CIRCLE and M[a][c] == ARROW):
                    continue
                for b in sorted(adj[a]):
                    if b == c or b in adj[c] or not self._pd_edge(a, b):
                        continue
                    # uncovered pd path b -> ... -> c whose first triple (a, b, next) is uncovered
                    stack = [(a, b, frozenset((a, b)))]
                    found = False
                    while stack and not found:
                        prev, cur, seen = stack.pop()
                        for nxt in adj[cur]:
                            if nxt in seen or nxt in adj[prev] or not self._pd_edge(cur, nxt):
                                continue
                            if nxt == c:
                                found = True
                                break
                            stack.append((cur, nxt, seen | {nxt}))
                    if found:
                        M[c][a] = TAIL
                        changed = True
                        break
        return changed

    def rule10(self):
        M, adj = self.M, self.adj
        changed = False
        for a in range(self.p):
            for c in sorted(adj[a]):
                if not (M[c][a] == CIRCLE and M[a][c] == ARROW):
                    continue
                parents = [v for v in sorted(adj[c]) if v != a and self._is_parent(v, c)]
                done = False
                for b, t in combinations(parents, 2):
                    f1 = self._uncovered_pd_firsts(a, b, {c})
                    if not f1:
                        continue
                    f2 = self._uncovered_pd_firsts(a, t, {c})
                    if any(m != w and w not in adj[m] for m in f1 for w in f2):
                        M[c][a] = TAIL
                        changed = done = True
                        break
                if done:
                    continue
        return changed

    def apply_rules(self):
        while True:
            changed = False
            for rule in (self.rule1, self.rule2, self.rule3, self.rule4):
                changed |= rule()
            if not changed:
                for rule in (self.rule8, self.rule9, self.rule10):
                    changed |= rule()
            if not changed:
                break

    def run(self) -> LearnResult:
        self.skeleton()
        self.reset_marks()
        self.orient_colliders()
        self.possible_dsep_stage()
        self.reset_marks()
        self.orient_colliders()
        self.apply_rules()
        graph = MixedGraph(self.cols, np.array(self.M, dtype=np.int8), GraphKind.PAG)
        seps = {
            frozenset((self.cols[i], self.cols[j])): tuple(self.cols[k] for k in s)
            for (i, j), s in self.sepset.items()
        }
        for w in self.warnings:
            log.warning(w)
        return LearnResult(graph, seps, tuple(dict.fromkeys(self.warnings)), len(self.cache))


def learn_pag(
    backend: CiBackend, cols: Sequence[str] | None = None, cfg: LearnerConfig = LearnerConfig()
) -> LearnResult:
    """Learn a PAG over ``cols`` (default: every backend label)."""
    cols = tuple(backend.labels if cols is None else cols)
    if len(cols) < 3:
        raise InputError("need at least three variables to learn a PAG")
    if len(set(cols)) != len(cols):
        raise InputError("duplicate columns")
    return _Fci(backend, cols, cfg).run()
