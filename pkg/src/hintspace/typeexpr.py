"""Type annotation expressions, normalization, and the subtyping lattice.

A TypeExpr is the parsed form of an annotation in bracket notation
(``Dict[str, List[int]]``). Normalization canonicalizes import aliases,
sorts Union arguments, and truncates deep nesting to ``Any``. The lattice
over normalized types orders them by covariant subtyping and backs the
type-neutrality check used by the evaluation harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

__all__ = [
    "TypeExpr",
    "TypeLattice",
    "TypeParseError",
    "ANY",
    "OBJECT",
    "NONE",
    "parse_type",
    "normalize_type",
    "erase_type_parameters",
    "build_type_lattice",
    "check_neutral",
]


class TypeParseError(ValueError):
    """Malformed annotation text; carries the offset of the failure."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class TypeExpr:
    """One type expression: a base name plus ordered type arguments.

    ``qualname`` preserves the original dotted spelling for display when
    the base was shortened during normalization; it does not take part
    in equality or hashing.
    """

    base: str
    args: tuple["TypeExpr", ...] = ()
    qualname: Optional[str] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.base:
            raise ValueError("TypeExpr base must be non-empty")
        if any(c in self.base for c in "[]") or any(c.isspace() for c in self.base):
            raise ValueError(f"TypeExpr base may not contain brackets or whitespace: {self.base!r}")

    @property
    def depth(self) -> int:
        if not self.args:
            return 1
        return 1 + max(a.depth for a in self.args)

    def render(self) -> str:
        if not self.args:
            return self.base
        return f"{self.base}[{', '.join(a.render() for a in self.args)}]"

    def __str__(self) -> str:
        return self.render()

    def __repr__(self) -> str:
        return f"TypeExpr({self.render()!r})"


ANY = TypeExpr("Any")
OBJECT = TypeExpr("object")
NONE = TypeExpr("None")

# Canonical spellings for common aliases; dotted names resolve through
# this table first and fall back to their last component.
_ALIASES = {
    "list": "List",
    "dict": "Dict",
    "set": "Set",
    "frozenset": "FrozenSet",
    "tuple": "Tuple",
    "type": "Type",
    "Text": "str",
}

# Module prefixes that are stripped outright (import-style qualifiers of
# the standard typing vocabulary).
_TYPING_PREFIXES = ("typing.", "typing_extensions.", "builtins.", "t.", "tp.")


def _canonical_base(base: str) -> tuple[str, Optional[str]]:
    """Return (canonical base, display qualname or None)."""
    stripped = base
    for prefix in _TYPING_PREFIXES:
        if stripped.startswith(prefix):
            stripped = stripped[len(prefix):]
            break
    if "." in stripped:
        # Unknown dotted name: keep the last component, retain the full
        # spelling for display.
        return stripped.rsplit(".", 1)[1], base
    return _ALIASES.get(stripped, stripped), None


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def error(self, message: str) -> TypeParseError:
        return TypeParseError(message, self.pos)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> TypeExpr:
        self.skip_ws()
        expr = self.parse_type()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error(f"unexpected trailing text {self.text[self.pos:]!r}")
        return expr

    def parse_type(self) -> TypeExpr:
        self.skip_ws()
        ch = self.peek()
        if ch in ("'", '"'):
            # Quoted forward reference: parse the quoted content as a type.
            quote = ch
            end = self.text.find(quote, self.pos + 1)
            if end < 0:
                raise self.error("unterminated quoted annotation")
            inner = self.text[self.pos + 1:end]
            sub = _Parser(inner)
            try:
                expr = sub.parse()
            except TypeParseError as exc:
                raise TypeParseError(str(exc), self.pos + 1 + exc.offset) from None
            self.pos = end + 1
            return self.maybe_args(expr)
        name = self.parse_name()
        return self.maybe_args(TypeExpr(name))

    def parse_name(self) -> str:
        start = self.pos
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c in "[]," or c.isspace() or c in ("'", '"'):
                break
            self.pos += 1
        if self.pos == start:
            raise self.error("expected a type name")
        return self.text[start:self.pos]

    def maybe_args(self, head: TypeExpr) -> TypeExpr:
        self.skip_ws()
        if self.peek() != "[":
            return head
        open_pos = self.pos
        self.pos += 1
        args: list[TypeExpr] = []
        while True:
            self.skip_ws()
            if self.peek() == "]" and not args:
                raise self.error("empty bracket list")
            args.append(self.parse_type())
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.pos += 1
                continue
            if ch == "]":
                self.pos += 1
                break
            self.pos = open_pos
            raise self.error("unbalanced '[' in annotation")
        return TypeExpr(head.base, tuple(args), head.qualname)


def parse_type(text: str) -> TypeExpr:
    """Parse bracket-notation annotation text into a TypeExpr."""
    return _Parser(text).parse()


def normalize_type(t: TypeExpr, max_depth: int = 2) -> TypeExpr:
    """Canonicalize a TypeExpr and truncate nesting beyond ``max_depth``.

    Sub-expressions rooted deeper than ``max_depth`` (root is level 1)
    collapse to ``Any``; aliases are rewritten through the fixed table;
    Union arguments are sorted by their rendered text. ``Optional`` and
    ``None`` are kept verbatim.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    return _normalize(t, 1, max_depth)


def _normalize(t: TypeExpr, level: int, max_depth: int) -> TypeExpr:
    if level > max_depth:
        return ANY
    base, qual = _canonical_base(t.base)
    args = tuple(_normalize(a, level + 1, max_depth) for a in t.args)
    if base == "Union":
        args = tuple(sorted(args, key=TypeExpr.render))
    return TypeExpr(base, args, qual)


def erase_type_parameters(t: TypeExpr) -> TypeExpr:
    """Drop all type arguments, keeping only the base name."""
    if not t.args:
        return t
    return TypeExpr(t.base, (), t.qualname)


# bool is an int, and the numeric tower widens upward.
_NOMINAL_PARENTS = {
    "bool": "int",
    "int": "float",
    "float": "complex",
}


@dataclass(frozen=True)
class TypeLattice:
    """Covariant subtyping lattice over a set of normalized types."""

    nodes: frozenset[TypeExpr]
    edges: frozenset[tuple[TypeExpr, TypeExpr]]
    top: TypeExpr = ANY

    def __contains__(self, t: TypeExpr) -> bool:
        return t in self.nodes

    def is_subtype(self, a: TypeExpr, b: TypeExpr) -> bool:
        """Whether ``a :< b`` under universal covariance plus nominal facts."""
        if a == b:
            return True
        if b == self.top:
            return True
        if b == OBJECT:
            return a != self.top
        if not a.args and not b.args:
            base = a.base
            while base in _NOMINAL_PARENTS:
                base = _NOMINAL_PARENTS[base]
                if base == b.base:
                    return True
            return False
        if a.base == b.base and len(a.args) == len(b.args):
            return all(self.is_subtype(x, y) for x, y in zip(a.args, b.args))
        return False


def _generalization_parents(t: TypeExpr) -> set[TypeExpr]:
    parents: set[TypeExpr] = set()
    if t == ANY:
        return parents
    if t == OBJECT:
        return {ANY}
    if t.args:
        for i, arg in enumerate(t.args):
            if arg != ANY:
                new_args = t.args[:i] + (ANY,) + t.args[i + 1:]
                parents.add(TypeExpr(t.base, new_args))
    elif t.base in _NOMINAL_PARENTS:
        parents.add(TypeExpr(_NOMINAL_PARENTS[t.base]))
    parents.add(OBJECT)
    return parents


def build_type_lattice(types: Iterable[TypeExpr]) -> TypeLattice:
    """Close the input set under argument-wise Any-generalization.

    Inputs are expected to be normalized already. Every node gains a
    path to ``object`` and onward to ``Any``.
    """
    nodes: set[TypeExpr] = {ANY, OBJECT}
    edges: set[tuple[TypeExpr, TypeExpr]] = {(OBJECT, ANY)}
    pending = list(types)
    while pending:
        t = pending.pop()
        if t in nodes:
            continue
        nodes.add(t)
        for parent in _generalization_parents(t):
            edges.add((t, parent))
            if parent not in nodes:
                pending.append(parent)
    return TypeLattice(frozenset(nodes), frozenset(edges))


def check_neutral(pred: TypeExpr, truth: TypeExpr, lattice: TypeLattice) -> bool:
    """Whether predicting ``pred`` for ground truth ``truth`` is type-neutral.

    True iff ``truth :< pred`` and ``pred`` is not the top element. Types
    missing from the lattice are incomparable rather than an error.
    """
    if pred == lattice.top:
        return False
    if pred == truth:
        return True
    if pred not in lattice.nodes or truth not in lattice.nodes:
        return False
    return lattice.is_subtype(truth, pred)
