"""Plain-text graph files.

Format::

    # comment
    graph dag            # or mag / pag
    node S1
    node U1 latent       # latent flag only valid for dag
    S1 --> W
    U1 --> W
    A <-> B
    A o-> B
    A o-o B

Edge tokens are three characters: mark at the left node (``-`` tail,
``<`` arrow, ``o`` circle), a ``-``, and the mark at the right node
(``-`` tail, ``>`` arrow, ``o`` circle).
"""

from __future__ import annotations

from pathlib import Path

from .exceptions import ParseError
from .graph import ARROW, CIRCLE, TAIL, Dag, EdgeMark, GraphKind, MixedGraph

_LEFT = {"-": TAIL, "<": ARROW, "o": CIRCLE}
_RIGHT = {"-": TAIL, ">": ARROW, "o": CIRCLE}
_LEFT_CHAR = {v: k for k, v in _LEFT.items()}
_RIGHT_CHAR = {v: k for k, v in _RIGHT.items()}


def _edge_token(tok: str, lineno: int) -> tuple[EdgeMark, EdgeMark]:
    if len(tok) != 3 or tok[1] != "-" or tok[0] not in _LEFT or tok[2] not in _RIGHT:
        raise ParseError(f"bad edge token {tok!r}", lineno)
    return _LEFT[tok[0]], _RIGHT[tok[2]]


def parse_graph(text: str) -> Dag | MixedGraph:
    kind = None
    names: list[str] = []
    latent: list[str] = []
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if kind is None:
            if len(parts) != 2 or parts[0] != "graph" or parts[1] not in ("dag", "mag", "pag"):
                raise ParseError("first statement must be 'graph dag|mag|pag'", lineno)
            kind = parts[1]
            continue
        if parts[0] == "node":
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "latent"):
                raise ParseError("expected 'node NAME [latent]'", lineno)
            name = parts[1]
            if name in names:
                raise ParseError(f"node {name!r} declared twice", lineno)
            if len(parts) == 3:
                if kind != "dag":
                    raise ParseError("latent nodes are only allowed in a dag", lineno)
                latent.append(name)
            names.append(name)
            continue
        if len(parts) != 3:
            raise ParseError(f"cannot parse {line!r}", lineno)
        a, tok, b = parts
        ma, mb = _edge_token(tok, lineno)
        for v in (a, b):
            if v not in names:
                raise ParseError(f"undeclared node {v!r}", lineno)
        if a == b:
            raise ParseError("self loop", lineno)
        if kind == "dag":
            if (ma, mb) == (TAIL, ARROW):
                edges.append((a, b, lineno))
            elif (ma, mb) == (ARROW, TAIL):
                edges.append((b, a, lineno))
            else:
                raise ParseError(f"edge {tok!r} not allowed in a dag", lineno)
        else:
            edges.append((a, ma, mb, b, lineno))
    if kind is None:
        raise ParseError("missing 'graph' header")
    try:
        if kind == "dag":
            seen = set()
            for a, b, lineno in edges:
                if frozenset((a, b)) in seen:
                    raise ParseError(f"duplicate edge {a} - {b}", lineno)
                seen.add(frozenset((a, b)))
            return Dag(names, [(a, b) for a, b, _ in edges], latent)
        seen = set()
        for a, _, _, b, lineno in edges:
            if frozenset((a, b)) in seen:
                raise ParseError(f"duplicate edge {a} - {b}", lineno)
            seen.add(frozenset((a, b)))
        return MixedGraph.from_edges(names, [e[:4] for e in edges], GraphKind(kind))
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def serialize_graph(g: Dag | MixedGraph) -> str:
    lines = []
    if isinstance(g, Dag):
        lines.append("graph dag")
        for n in g.names:
            lines.append(f"node {n} latent" if g.is_latent(n) else f"node {n}")
        for a, b in g.edges:
            lines.append(f"{a} --> {b}")
    else:
        lines.append(f"graph {g.kind.value}")
        lines.extend(f"node {n}" for n in g.names)
        for a, b, ma, mb in g.edges():
            lines.append(f"{a} {_LEFT_CHAR[ma]}-{_RIGHT_CHAR[mb]} {b}")
    return "\n".join(lines) + "\n"


def read_graph(path) -> Dag | MixedGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def write_graph(g: Dag | MixedGraph, path) -> None:
    Path(path).write_text(serialize_graph(g), encoding="utf-8", newline="\n")
