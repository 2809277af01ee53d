"""Graph data model for source files plus the JSON Lines corpus format.

A CodeGraph holds four node categories (token, nonterminal, vocabulary,
symbol) and eight labelled edge relations. Graphs serialize one-per-line
with deterministic key and element order so corpora diff cleanly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .typeexpr import TypeExpr, parse_type

__all__ = [
    "TOKEN",
    "NONTERMINAL",
    "VOCABULARY",
    "SYMBOL",
    "NODE_CATEGORIES",
    "EDGE_LABELS",
    "SYMBOL_KINDS",
    "Node",
    "SymbolInfo",
    "CodeGraph",
    "GraphFormatError",
    "subtokenize",
    "serialize_graph",
    "deserialize_graph",
    "write_corpus",
    "read_corpus",
]

TOKEN = "token"
NONTERMINAL = "nonterminal"
VOCABULARY = "vocabulary"
SYMBOL = "symbol"
NODE_CATEGORIES = (TOKEN, NONTERMINAL, VOCABULARY, SYMBOL)

NEXT_TOKEN = "NEXT_TOKEN"
CHILD = "CHILD"
NEXT_MAY_USE = "NEXT_MAY_USE"
NEXT_LEXICAL_USE = "NEXT_LEXICAL_USE"
ASSIGNED_FROM = "ASSIGNED_FROM"
RETURNS_TO = "RETURNS_TO"
OCCURRENCE_OF = "OCCURRENCE_OF"
SUBTOKEN_OF = "SUBTOKEN_OF"

EDGE_LABELS = (
    NEXT_TOKEN,
    CHILD,
    NEXT_MAY_USE,
    NEXT_LEXICAL_USE,
    ASSIGNED_FROM,
    RETURNS_TO,
    OCCURRENCE_OF,
    SUBTOKEN_OF,
)

SYMBOL_KINDS = ("variable", "parameter", "return")


@dataclass(frozen=True)
class Node:
    category: str
    label: str

    def __post_init__(self) -> None:
        if self.category not in NODE_CATEGORIES:
            raise ValueError(f"unknown node category {self.category!r}")


@dataclass(frozen=True)
class SymbolInfo:
    """One symbol-table entry: its node, kind, scoped name, ground truth."""

    node_index: int
    kind: str
    name: str
    annotation: Optional[TypeExpr] = None

    def __post_init__(self) -> None:
        if self.kind not in SYMBOL_KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")


@dataclass(frozen=True)
class CodeGraph:
    file_id: str
    nodes: tuple[Node, ...]
    edges: dict[str, frozenset[tuple[int, int]]]
    symbols: tuple[SymbolInfo, ...]

    def edge_set(self, label: str) -> frozenset[tuple[int, int]]:
        return self.edges.get(label, frozenset())

    def validate(self) -> None:
        n = len(self.nodes)
        for label, pairs in self.edges.items():
            if label not in EDGE_LABELS:
                raise GraphFormatError(f"unknown edge label {label!r}")
            for src, dst in pairs:
                if not (0 <= src < n and 0 <= dst < n):
                    raise GraphFormatError(f"edge index out of range in {label}: ({src}, {dst})")
                if label == OCCURRENCE_OF and src == dst:
                    raise GraphFormatError(f"self-loop on {OCCURRENCE_OF}: {src}")
        for sym in self.symbols:
            if not (0 <= sym.node_index < n):
                raise GraphFormatError(f"symbol node index out of range: {sym.node_index}")
            if self.nodes[sym.node_index].category != SYMBOL:
                raise GraphFormatError(f"symbol entry points at non-symbol node {sym.node_index}")


class GraphFormatError(ValueError):
    """Raised when a serialized graph record is malformed."""


_SUBTOKEN_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[a-z0-9]+")


def subtokenize(identifier: str) -> list[str]:
    """Split an identifier on case transitions and underscores, lower-cased.

    Falls back to the whole lower-cased input when no word-like pieces
    exist (operators, punctuation), so the result is never empty.
    """
    if not identifier:
        raise ValueError("identifier must be non-empty")
    parts: list[str] = []
    for segment in identifier.split("_"):
        parts.extend(m.group(0).lower() for m in _SUBTOKEN_RE.finditer(segment))
    return parts if parts else [identifier.lower()]


def serialize_graph(g: CodeGraph) -> str:
    """One JSON line per graph; keys and edge lists in fixed order."""
    record = {
        "file_id": g.file_id,
        "nodes": [[n.category, n.label] for n in g.nodes],
        "edges": {label: sorted(map(list, g.edges[label])) for label in sorted(g.edges)},
        "symbols": [
            [s.node_index, s.kind, s.name, s.annotation.render() if s.annotation else None]
            for s in g.symbols
        ],
    }
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def deserialize_graph(line: str) -> CodeGraph:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON: {exc}") from None
    try:
        nodes = tuple(Node(cat, label) for cat, label in record["nodes"])
        edges = {
            label: frozenset((int(s), int(d)) for s, d in pairs)
            for label, pairs in record["edges"].items()
        }
        symbols = tuple(
            SymbolInfo(int(idx), kind, name, parse_type(ann) if ann is not None else None)
            for idx, kind, name, ann in record["symbols"]
        )
        graph = CodeGraph(record["file_id"], nodes, edges, symbols)
    except GraphFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph record: {exc}") from None
    graph.validate()
    return graph


def write_corpus(graphs: Iterable[CodeGraph], path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(serialize_graph(g))
            fh.write("\n")
            count += 1
    return count


def read_corpus(path: str) -> Iterator[CodeGraph]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield deserialize_graph(line)
            except GraphFormatError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
