"""Python source -> CodeGraph extraction.

One file becomes one graph: lexer tokens, syntax-tree nonterminals,
subtoken vocabulary nodes, and symbol nodes, wired with the eight edge
relations. Comments and docstrings are dropped; existing annotations are
recorded as ground truth on the symbols and erased from the graph (the
annotation tokens, their ':'/'->' markers, and their subtrees never
appear; annotated assignments are relabelled as plain assignments).

NEXT_MAY_USE comes from a statement-level control-flow pass with
conservative joins at if/for/while/try; nested functions, lambdas, and
comprehensions are separate straight-line regions. Attribute accesses on
a method's first parameter (``self.x``) resolve to a symbol scoped to
the enclosing class; other attributes get no symbol. Function names bind
to the function's return symbol, so call sites and the declaration share
it.
"""

from __future__ import annotations

import ast
import bisect
import builtins
import io
import keyword
import tokenize
from dataclasses import dataclass, field
from typing import Optional

_BUILTIN_NAMES = frozenset(dir(builtins))

from .codegraph import (
    ASSIGNED_FROM,
    CHILD,
    EDGE_LABELS,
    NEXT_LEXICAL_USE,
    NEXT_MAY_USE,
    NEXT_TOKEN,
    NONTERMINAL,
    OCCURRENCE_OF,
    RETURNS_TO,
    SUBTOKEN_OF,
    SYMBOL,
    TOKEN,
    VOCABULARY,
    CodeGraph,
    Node,
    SymbolInfo,
    subtokenize,
)
from .typeexpr import ANY, NONE, TypeExpr, TypeParseError, normalize_type, parse_type

__all__ = [
    "ExtractOptions",
    "ExtractionResult",
    "ExtractError",
    "SymbolSpan",
    "annotation_to_typeexpr",
    "extract_graph",
    "extract_file",
]

Pos = tuple[int, int]


class ExtractError(Exception):
    """File could not be turned into a graph (parse failure, size cap)."""


@dataclass(frozen=True)
class ExtractOptions:
    active_edges: frozenset[str] = frozenset(EDGE_LABELS)
    max_nodes: int = 50_000

    def __post_init__(self) -> None:
        unknown = self.active_edges - set(EDGE_LABELS)
        if unknown:
            raise ValueError(f"unknown edge labels: {sorted(unknown)}")

    def without_edges(self, *labels: str) -> "ExtractOptions":
        return ExtractOptions(self.active_edges - set(labels), self.max_nodes)


@dataclass(frozen=True)
class SymbolSpan:
    """Definition site of a symbol, for excerpts and annotation edits."""

    line: int
    col: int
    end_line: int
    end_col: int


@dataclass
class ExtractionResult:
    graph: CodeGraph
    symbol_spans: dict[int, SymbolSpan]
    diagnostics: list[str] = field(default_factory=list)


@dataclass
class _Tok:
    index: int
    string: str
    start: Pos
    end: Pos
    is_name: bool


class _Symbol:
    __slots__ = ("kind", "name", "label", "order", "annotation", "def_span")

    def __init__(self, kind: str, name: str, label: str, order: int) -> None:
        self.kind = kind
        self.name = name  # scope-qualified
        self.label = label  # bare name, used as the node label
        self.order = order
        self.annotation: Optional[TypeExpr] = None
        self.def_span: Optional[SymbolSpan] = None


class _Scope:
    __slots__ = ("node", "kind", "parent", "path", "bindings", "globals", "nonlocals")

    def __init__(self, node: ast.AST, kind: str, parent: Optional["_Scope"], path: str) -> None:
        self.node = node
        self.kind = kind  # module | function | class | comprehension
        self.parent = parent
        self.path = path
        self.bindings: dict[str, _Symbol] = {}
        self.globals: set[str] = set()
        self.nonlocals: set[str] = set()

    def qualify(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name


_FUNC_NODES = (ast.FunctionDef, ast.AsyncFunctionDef)
_COMP_NODES = (ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp)
_SCOPE_NODES = _FUNC_NODES + (ast.Lambda, ast.ClassDef) + _COMP_NODES

_DROP_TOKEN_TYPES = {
    tokenize.COMMENT,
    tokenize.NL,
    tokenize.NEWLINE,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.ENCODING,
    tokenize.ENDMARKER,
}


def _node_span(node: ast.AST) -> Optional[tuple[Pos, Pos]]:
    lineno = getattr(node, "lineno", None)
    end_lineno = getattr(node, "end_lineno", None)
    if lineno is None or end_lineno is None:
        return None
    return (lineno, node.col_offset), (end_lineno, node.end_col_offset)


def _span_contains(outer: tuple[Pos, Pos], start: Pos, end: Pos) -> bool:
    return outer[0] <= start and end <= outer[1]


def annotation_to_typeexpr(node: ast.AST) -> Optional[TypeExpr]:
    """Convert an annotation AST into a TypeExpr, or None when opaque.

    Handles dotted names, subscripts, quoted forward references, and
    PEP 604 unions. Callable argument lists collapse to the bare
    ``Callable`` base.
    """
    if isinstance(node, ast.Name):
        return TypeExpr(node.id)
    if isinstance(node, ast.Attribute):
        parts = []
        cur: ast.AST = node
        while isinstance(cur, ast.Attribute):
            parts.append(cur.attr)
            cur = cur.value
        if not isinstance(cur, ast.Name):
            return None
        parts.append(cur.id)
        return TypeExpr(".".join(reversed(parts)))
    if isinstance(node, ast.Constant):
        if node.value is None:
            return NONE
        if isinstance(node.value, str):
            try:
                return parse_type(node.value)
            except TypeParseError:
                return None
        if node.value is Ellipsis:
            return TypeExpr("...")
        return None
    if isinstance(node, ast.Subscript):
        base = annotation_to_typeexpr(node.value)
        if base is None or base.args:
            return None
        if base.base.rsplit(".", 1)[-1] == "Callable":
            return TypeExpr(base.base)
        raw = node.slice.elts if isinstance(node.slice, ast.Tuple) else [node.slice]
        args = []
        for item in raw:
            arg = annotation_to_typeexpr(item)
            if arg is None:
                return None
            args.append(arg)
        return TypeExpr(base.base, tuple(args))
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.BitOr):
        flat: list[TypeExpr] = []
        for side in (node.left, node.right):
            part = annotation_to_typeexpr(side)
            if part is None:
                return None
            if part.base == "Union":
                flat.extend(part.args)
            else:
                flat.append(part)
        return TypeExpr("Union", tuple(flat))
    return None


def _is_excluded_annotation(t: TypeExpr) -> bool:
    norm = normalize_type(t)
    return norm == ANY or norm == NONE


def _def_site_nodes(fn: ast.AST) -> list[ast.AST]:
    """Pieces of a def evaluated at the definition site."""
    a = fn.args  # type: ignore[attr-defined]
    out: list[ast.AST] = list(getattr(fn, "decorator_list", []))
    out.extend(d for d in [*a.defaults, *a.kw_defaults] if d is not None)
    return out


def _param_nodes(fn: ast.AST) -> list[ast.AST]:
    a = fn.args  # type: ignore[attr-defined]
    return [arg for arg in [*a.posonlyargs, *a.args, *a.kwonlyargs, a.vararg, a.kwarg]
            if arg is not None]


class _Extractor:
    def __init__(self, source: str, options: ExtractOptions, file_id: str) -> None:
        self.source = source
        self.options = options
        self.file_id = file_id
        self.diagnostics: list[str] = []

        self.tokens: list[_Tok] = []
        self.token_by_start: dict[Pos, int] = {}
        self._token_starts: list[Pos] = []

        self.nt_labels: list[str] = []
        self.nt_of_node: dict[ast.AST, int] = {}
        self.nt_children: dict[int, list[int]] = {}
        self.nt_span: list[Optional[tuple[Pos, Pos]]] = []

        self.vocab_ids: dict[str, int] = {}
        self.symbols: list[_Symbol] = []

        # Edges on provisional (category-local) ids; remapped at assembly.
        self.e_child: set[tuple[int, int]] = set()  # nt -> nt
        self.e_child_tok: set[tuple[int, int]] = set()  # nt -> token
        self.e_assigned: set[tuple[int, int]] = set()  # nt -> nt
        self.e_returns: set[tuple[int, int]] = set()  # nt -> nt
        self.e_occ_tok: set[tuple[int, int]] = set()  # token -> symbol order
        self.e_occ_nt: set[tuple[int, int]] = set()  # nt -> symbol order
        self.e_subtok: set[tuple[int, int]] = set()  # token -> vocab
        self.e_lex: set[tuple[int, int]] = set()  # token -> token
        self.e_may: set[tuple[int, int]] = set()  # token -> token

        self.token_symbol: dict[int, _Symbol] = {}
        self.name_token: dict[ast.AST, int] = {}
        self.scopes: dict[ast.AST, _Scope] = {}
        self.def_name_tokens: dict[ast.AST, int] = {}

    # -- pipeline ---------------------------------------------------------

    def run(self) -> ExtractionResult:
        try:
            tree = ast.parse(self.source)
        except (SyntaxError, ValueError) as exc:
            raise ExtractError(f"{self.file_id}: parse failure: {exc}") from None

        drop_spans, markers, docstring_exprs = self._annotation_and_docstring_spans(tree)
        self._collect_tokens(drop_spans, markers)
        self._walk_syntax(tree, docstring_exprs)
        self._attach_tokens(tree)
        self._build_scopes(tree)
        self._resolve_names(tree)
        self._wire_returns(tree)
        self._symbol_chains()
        self._may_use(tree)
        self._subtoken_edges()
        return self._assemble()

    # -- tokens -----------------------------------------------------------

    def _annotation_and_docstring_spans(
        self, tree: ast.AST
    ) -> tuple[list[tuple[Pos, Pos]], list[Pos], set[ast.AST]]:
        """Spans to drop from the token stream, plus annotation start marks."""
        spans: list[tuple[Pos, Pos]] = []
        markers: list[Pos] = []
        docstring_exprs: set[ast.AST] = set()

        def note(ann: Optional[ast.AST]) -> None:
            if ann is None:
                return
            span = _node_span(ann)
            if span:
                spans.append(span)
                markers.append(span[0])

        for node in ast.walk(tree):
            if isinstance(node, _FUNC_NODES):
                note(node.returns)
                for arg in _param_nodes(node):
                    note(arg.annotation)  # type: ignore[attr-defined]
            elif isinstance(node, ast.AnnAssign):
                note(node.annotation)
            if isinstance(node, (ast.Module, *_FUNC_NODES, ast.ClassDef)):
                body = node.body
                if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                        and isinstance(body[0].value.value, str):
                    docstring_exprs.add(body[0])
                    span = _node_span(body[0])
                    if span:
                        spans.append(span)
        return spans, markers, docstring_exprs

    def _collect_tokens(self, drop_spans: list[tuple[Pos, Pos]], markers: list[Pos]) -> None:
        try:
            raw = list(tokenize.generate_tokens(io.StringIO(self.source).readline))
        except (tokenize.TokenError, IndentationError) as exc:
            raise ExtractError(f"{self.file_id}: tokenize failure: {exc}") from None

        marker_starts = set(markers)
        dropped_marker: set[int] = set()
        # The ':' or '->' directly preceding an annotation is annotation
        # syntax, not program content.
        for i, tok in enumerate(raw):
            if tok.start in marker_starts:
                j = i - 1
                while j >= 0 and raw[j].type in _DROP_TOKEN_TYPES:
                    j -= 1
                if j >= 0 and raw[j].string in (":", "->"):
                    dropped_marker.add(j)

        for i, tok in enumerate(raw):
            if tok.type in _DROP_TOKEN_TYPES or i in dropped_marker:
                continue
            if any(_span_contains(span, tok.start, tok.end) for span in drop_spans):
                continue
            idx = len(self.tokens)
            self.tokens.append(_Tok(idx, tok.string, tok.start, tok.end,
                                    tok.type == tokenize.NAME))
            self.token_by_start[tok.start] = idx
        self._token_starts = [t.start for t in self.tokens]

    def _tokens_in(self, span: tuple[Pos, Pos]) -> range:
        lo = bisect.bisect_left(self._token_starts, span[0])
        hi = bisect.bisect_left(self._token_starts, span[1])
        return range(lo, hi)

    # -- syntax tree --------------------------------------------------------

    def _iter_children(self, node: ast.AST, skip: set[ast.AST]) -> list[ast.AST]:
        children: list[ast.AST] = []
        for name, value in ast.iter_fields(node):
            if name in ("annotation", "returns", "type_comment", "ctx"):
                continue
            if isinstance(value, ast.AST):
                if value not in skip:
                    children.append(value)
            elif isinstance(value, list):
                children.extend(v for v in value if isinstance(v, ast.AST) and v not in skip)
        return children

    def _walk_syntax(self, tree: ast.AST, docstring_exprs: set[ast.AST]) -> None:
        pending_assigned: list[tuple[ast.AST, ast.AST]] = []

        def visit(node: ast.AST) -> int:
            label = type(node).__name__
            if isinstance(node, ast.AnnAssign):
                label = "Assign"
            nt = len(self.nt_labels)
            self.nt_labels.append(label)
            self.nt_of_node[node] = nt
            self.nt_span.append(_node_span(node))
            kids: list[int] = []
            for child in self._iter_children(node, docstring_exprs):
                cid = visit(child)
                kids.append(cid)
                self.e_child.add((nt, cid))
            self.nt_children[nt] = kids

            if isinstance(node, ast.Assign):
                for target in node.targets:
                    pending_assigned.append((node.value, target))
            elif isinstance(node, (ast.AugAssign, ast.NamedExpr)):
                pending_assigned.append((node.value, node.target))
            elif isinstance(node, ast.AnnAssign) and node.value is not None:
                pending_assigned.append((node.value, node.target))
            return nt

        visit(tree)
        for value, target in pending_assigned:
            if value in self.nt_of_node and target in self.nt_of_node:
                self.e_assigned.add((self.nt_of_node[value], self.nt_of_node[target]))

    def _attach_tokens(self, tree: ast.AST) -> None:
        """CHILD edges from each token's innermost spanned syntax node."""
        # For descent, unspanned nodes are transparent: their spanned
        # descendants act as direct children.
        spanned_kids: dict[int, list[tuple[tuple[Pos, Pos], int]]] = {}

        def spanned_children(nt: int) -> list[tuple[tuple[Pos, Pos], int]]:
            if nt in spanned_kids:
                return spanned_kids[nt]
            out: list[tuple[tuple[Pos, Pos], int]] = []
            for kid in self.nt_children[nt]:
                span = self.nt_span[kid]
                if span is not None:
                    out.append((span, kid))
                else:
                    out.extend(spanned_children(kid))
            spanned_kids[nt] = out
            return out

        root = self.nt_of_node[tree]
        for tok in self.tokens:
            cur = root
            while True:
                nxt = None
                for span, kid in spanned_children(cur):
                    if _span_contains(span, tok.start, tok.end):
                        nxt = kid
                        break
                if nxt is None:
                    break
                cur = nxt
            self.e_child_tok.add((cur, tok.index))

    # -- scopes and symbols -------------------------------------------------

    def _new_symbol(self, scope: _Scope, name: str, kind: str,
                    def_node: Optional[ast.AST] = None) -> _Symbol:
        sym = _Symbol(kind, scope.qualify(name), name, len(self.symbols))
        self.symbols.append(sym)
        self._note_span(sym, def_node)
        return sym

    def _note_span(self, sym: _Symbol, def_node: Optional[ast.AST]) -> None:
        if sym.def_span is None and def_node is not None:
            span = _node_span(def_node)
            if span:
                sym.def_span = SymbolSpan(span[0][0], span[0][1], span[1][0], span[1][1])

    def _module_scope(self, scope: _Scope) -> _Scope:
        s = scope
        while s.parent is not None:
            s = s.parent
        return s

    def _declared_scope(self, scope: _Scope, name: str) -> _Scope:
        if name in scope.globals:
            return self._module_scope(scope)
        if name in scope.nonlocals:
            s = scope.parent
            while s is not None:
                if s.kind == "function" and name in s.bindings:
                    return s
                s = s.parent
        return scope

    def _bind(self, scope: _Scope, name: str, kind: str,
              def_node: Optional[ast.AST] = None) -> _Symbol:
        target = self._declared_scope(scope, name)
        if name not in target.bindings:
            target.bindings[name] = self._new_symbol(target, name, kind, def_node)
        sym = target.bindings[name]
        self._note_span(sym, def_node)
        return sym

    def _walrus_scope(self, scope: _Scope) -> _Scope:
        s = scope
        while s.kind == "comprehension" and s.parent is not None:
            s = s.parent
        return s

    def _build_scopes(self, tree: ast.AST) -> None:
        module = _Scope(tree, "module", None, "")
        self.scopes[tree] = module
        for stmt in tree.body:  # type: ignore[attr-defined]
            self._collect_in(stmt, module)

    def _collect_in(self, node: ast.AST, scope: _Scope) -> None:
        if isinstance(node, ast.Global):
            scope.globals.update(node.names)
            module = self._module_scope(scope)
            for name in node.names:
                if name not in module.bindings:
                    module.bindings[name] = self._new_symbol(module, name, "variable", node)
            return
        if isinstance(node, ast.Nonlocal):
            scope.nonlocals.update(node.names)
            return
        if isinstance(node, _FUNC_NODES):
            # Function names bind to the function's return symbol, so the
            # declaration and call sites share it.
            fn_sym = self._bind(scope, node.name, "return", node)
            if node.returns is not None and fn_sym.annotation is None:
                ret = annotation_to_typeexpr(node.returns)
                if ret is not None and not _is_excluded_annotation(ret):
                    fn_sym.annotation = ret
            inner = _Scope(node, "function", scope, scope.qualify(node.name))
            self.scopes[node] = inner
            for arg in _param_nodes(node):
                p = self._bind(inner, arg.arg, "parameter", arg)  # type: ignore[attr-defined]
                ann = arg.annotation  # type: ignore[attr-defined]
                if ann is not None and p.annotation is None:
                    t = annotation_to_typeexpr(ann)
                    if t is not None and not _is_excluded_annotation(t):
                        p.annotation = t
            for expr in _def_site_nodes(node):
                self._collect_in(expr, scope)
            for stmt in node.body:
                self._collect_in(stmt, inner)
            return
        if isinstance(node, ast.Lambda):
            inner = _Scope(node, "function", scope, scope.qualify("<lambda>"))
            self.scopes[node] = inner
            for arg in _param_nodes(node):
                self._bind(inner, arg.arg, "parameter", arg)  # type: ignore[attr-defined]
            for expr in _def_site_nodes(node):
                self._collect_in(expr, scope)
            self._collect_in(node.body, inner)
            return
        if isinstance(node, ast.ClassDef):
            self._bind(scope, node.name, "variable", node)
            inner = _Scope(node, "class", scope, scope.qualify(node.name))
            self.scopes[node] = inner
            for expr in [*node.decorator_list, *node.bases, *node.keywords]:
                self._collect_in(expr, scope)
            for stmt in node.body:
                self._collect_in(stmt, inner)
            return
        if isinstance(node, _COMP_NODES):
            inner = _Scope(node, "comprehension", scope, scope.qualify("<comp>"))
            self.scopes[node] = inner
            for i, gen in enumerate(node.generators):  # type: ignore[attr-defined]
                # the first iterable evaluates in the enclosing scope
                self._collect_in(gen.iter, scope if i == 0 else inner)
                self._bind_targets(gen.target, inner)
                for cond in gen.ifs:
                    self._collect_in(cond, inner)
            for fld in ("elt", "key", "value"):
                sub = getattr(node, fld, None)
                if sub is not None:
                    self._collect_in(sub, inner)
            return
        if isinstance(node, ast.NamedExpr):
            self._bind_targets(node.target, self._walrus_scope(scope))
            self._collect_in(node.value, scope)
            return
        if isinstance(node, (ast.Assign, ast.AugAssign, ast.AnnAssign)):
            targets = node.targets if isinstance(node, ast.Assign) else [node.target]
            for t in targets:
                self._bind_targets(t, scope)
            if isinstance(node, ast.AnnAssign):
                self._attach_annassign_annotation(node, scope)
            value = getattr(node, "value", None)
            if value is not None:
                self._collect_in(value, scope)
            for t in targets:
                self._collect_in(t, scope)
            return
        if isinstance(node, (ast.For, ast.AsyncFor)):
            self._bind_targets(node.target, scope)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            for item in node.items:
                if item.optional_vars is not None:
                    self._bind_targets(item.optional_vars, scope)
        elif isinstance(node, ast.ExceptHandler):
            if node.name:
                self._bind(scope, node.name, "variable", node)
        elif isinstance(node, (ast.Import, ast.ImportFrom)):
            for alias in node.names:
                bound = alias.asname or alias.name.split(".")[0]
                if bound != "*":
                    self._bind(scope, bound, "variable", node)
        elif isinstance(node, ast.MatchAs) and node.name:
            self._bind(scope, node.name, "variable", node)
        elif isinstance(node, ast.MatchStar) and node.name:
            self._bind(scope, node.name, "variable", node)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            self._bind(scope, node.rest, "variable", node)
        for child in ast.iter_child_nodes(node):
            self._collect_in(child, scope)

    def _attach_annassign_annotation(self, node: ast.AnnAssign, scope: _Scope) -> None:
        t = annotation_to_typeexpr(node.annotation)
        if t is None or _is_excluded_annotation(t):
            return
        if isinstance(node.target, ast.Name):
            sym = self._declared_scope(scope, node.target.id).bindings.get(node.target.id)
            if sym is not None and sym.annotation is None:
                sym.annotation = t
        elif isinstance(node.target, ast.Attribute):
            sym = self._self_attribute_symbol(node.target, scope, create=True)
            if sym is not None and sym.annotation is None:
                sym.annotation = t

    def _bind_targets(self, target: ast.AST, scope: _Scope) -> None:
        if isinstance(target, ast.Name):
            self._bind(scope, target.id, "variable", target)
        elif isinstance(target, (ast.Tuple, ast.List)):
            for elt in target.elts:
                self._bind_targets(elt, scope)
        elif isinstance(target, ast.Starred):
            self._bind_targets(target.value, scope)
        # Attribute / Subscript targets resolve during the use pass.

    def _lookup(self, scope: _Scope, name: str) -> Optional[_Symbol]:
        if name in scope.globals:
            return self._module_scope(scope).bindings.get(name)
        s: Optional[_Scope] = scope
        first = True
        while s is not None:
            if (s.kind != "class" or first) and name in s.bindings:
                return s.bindings[name]
            first = False
            s = s.parent
        return None

    def _method_self_name(self, scope: _Scope) -> Optional[tuple[str, _Scope]]:
        """(first positional parameter name, class scope) for methods."""
        if scope.kind != "function" or scope.parent is None or scope.parent.kind != "class":
            return None
        node = scope.node
        if isinstance(node, _FUNC_NODES):
            for deco in node.decorator_list:
                if isinstance(deco, ast.Name) and deco.id == "staticmethod":
                    return None
            pos = [*node.args.posonlyargs, *node.args.args]
            if pos:
                return pos[0].arg, scope.parent
        return None

    def _self_attribute_symbol(self, node: ast.Attribute, scope: _Scope,
                               create: bool) -> Optional[_Symbol]:
        info = self._method_self_name(scope)
        if info is None or not isinstance(node.value, ast.Name) or node.value.id != info[0]:
            return None
        _, class_scope = info
        if node.attr not in class_scope.bindings:
            if not create:
                return None
            class_scope.bindings[node.attr] = self._new_symbol(
                class_scope, node.attr, "variable", node)
        return class_scope.bindings[node.attr]

    # -- name resolution ------------------------------------------------------

    def _resolve_names(self, tree: ast.AST) -> None:
        self._resolve_block(tree.body, self.scopes[tree])  # type: ignore[attr-defined]

    def _resolve_block(self, stmts: list[ast.AST], scope: _Scope) -> None:
        for stmt in stmts:
            self._resolve(stmt, scope)

    def _resolve(self, node: ast.AST, scope: _Scope) -> None:
        if isinstance(node, _FUNC_NODES):
            self._occ_def_name(node, scope)
            for expr in _def_site_nodes(node):
                self._resolve(expr, scope)
            inner = self.scopes[node]
            for arg in _param_nodes(node):
                self._occ_arg(arg, inner)
            self._resolve_block(node.body, inner)
            return
        if isinstance(node, ast.Lambda):
            for expr in _def_site_nodes(node):
                self._resolve(expr, scope)
            inner = self.scopes[node]
            for arg in _param_nodes(node):
                self._occ_arg(arg, inner)
            self._resolve(node.body, inner)
            return
        if isinstance(node, ast.ClassDef):
            self._occ_def_name(node, scope)
            for expr in [*node.decorator_list, *node.bases, *node.keywords]:
                self._resolve(expr, scope)
            self._resolve_block(node.body, self.scopes[node])
            return
        if isinstance(node, _COMP_NODES):
            inner = self.scopes[node]
            for i, gen in enumerate(node.generators):  # type: ignore[attr-defined]
                self._resolve(gen.iter, scope if i == 0 else inner)
                self._resolve(gen.target, inner)
                for cond in gen.ifs:
                    self._resolve(cond, inner)
            for fld in ("elt", "key", "value"):
                sub = getattr(node, fld, None)
                if sub is not None:
                    self._resolve(sub, inner)
            return
        if isinstance(node, ast.Name):
            sym = self._lookup(scope, node.id)
            if sym is None and node.id not in _BUILTIN_NAMES:
                # Free names (defined elsewhere or via star imports) still
                # denote one program symbol; give them a module-level one so
                # repeated uses share a node.
                module = self._module_scope(scope)
                if node.id not in module.bindings:
                    module.bindings[node.id] = self._new_symbol(
                        module, node.id, "variable", node)
                sym = module.bindings[node.id]
            if sym is not None:
                nt = self.nt_of_node.get(node)
                if nt is not None:
                    self.e_occ_nt.add((nt, sym.order))
                ti = self.token_by_start.get((node.lineno, node.col_offset))
                if ti is not None and self.tokens[ti].string == node.id:
                    self.token_symbol[ti] = sym
                    self.name_token[node] = ti
                    self.e_occ_tok.add((ti, sym.order))
            return
        if isinstance(node, ast.Attribute):
            sym = self._self_attribute_symbol(node, scope, create=True)
            if sym is not None:
                nt = self.nt_of_node.get(node)
                if nt is not None:
                    self.e_occ_nt.add((nt, sym.order))
            self._resolve(node.value, scope)
            return
        if isinstance(node, ast.ExceptHandler):
            if node.name:
                sym = self._lookup(scope, node.name)
                if sym is not None:
                    ti = self._handler_name_token(node)
                    if ti is not None:
                        self.token_symbol[ti] = sym
                        self.e_occ_tok.add((ti, sym.order))
            if node.type is not None:
                self._resolve(node.type, scope)
            self._resolve_block(node.body, scope)
            return
        if isinstance(node, (ast.Global, ast.Nonlocal)):
            for ti in self._stmt_name_tokens(node, node.names):
                sym = self._lookup(scope, self.tokens[ti].string)
                if sym is not None:
                    self.token_symbol[ti] = sym
                    self.e_occ_tok.add((ti, sym.order))
            return
        if isinstance(node, ast.AnnAssign):
            if node.value is not None:
                self._resolve(node.value, scope)
            self._resolve(node.target, scope)
            return
        for name, value in ast.iter_fields(node):
            if name in ("annotation", "returns", "type_comment", "ctx"):
                continue
            if isinstance(value, ast.AST):
                self._resolve(value, scope)
            elif isinstance(value, list):
                for v in value:
                    if isinstance(v, ast.AST):
                        self._resolve(v, scope)

    def _occ_def_name(self, node: ast.AST, outer: _Scope) -> None:
        sym = self._lookup(outer, node.name)  # type: ignore[attr-defined]
        if sym is None:
            return
        nt = self.nt_of_node.get(node)
        if nt is not None:
            self.e_occ_nt.add((nt, sym.order))
        ti = self._def_name_token(node)
        if ti is not None:
            self.token_symbol[ti] = sym
            self.def_name_tokens[node] = ti
            self.e_occ_tok.add((ti, sym.order))

    def _occ_arg(self, arg: ast.AST, scope: _Scope) -> None:
        sym = scope.bindings.get(arg.arg)  # type: ignore[attr-defined]
        if sym is None or sym.kind != "parameter":
            return
        nt = self.nt_of_node.get(arg)
        if nt is not None:
            self.e_occ_nt.add((nt, sym.order))
        ti = self.token_by_start.get((arg.lineno, arg.col_offset))  # type: ignore[attr-defined]
        if ti is not None and self.tokens[ti].string == arg.arg:  # type: ignore[attr-defined]
            self.token_symbol[ti] = sym
            self.e_occ_tok.add((ti, sym.order))

    def _def_name_token(self, node: ast.AST) -> Optional[int]:
        span = _node_span(node)
        if span is None:
            return None
        name = node.name  # type: ignore[attr-defined]
        for ti in self._tokens_in(span):
            tok = self.tokens[ti]
            if tok.is_name and tok.string == name:
                return ti
        return None

    def _handler_name_token(self, node: ast.ExceptHandler) -> Optional[int]:
        span = _node_span(node)
        if span is None or not node.name:
            return None
        body_start = _node_span(node.body[0])[0] if node.body else span[1]
        seen_as = False
        for ti in self._tokens_in(span):
            tok = self.tokens[ti]
            if tok.start >= body_start:
                break
            if tok.string == "as":
                seen_as = True
            elif seen_as and tok.is_name and tok.string == node.name:
                return ti
        return None

    def _stmt_name_tokens(self, node: ast.AST, names: list[str]) -> list[int]:
        span = _node_span(node)
        if span is None:
            return []
        wanted = set(names)
        return [ti for ti in self._tokens_in(span)
                if self.tokens[ti].is_name and self.tokens[ti].string in wanted]

    def _wire_returns(self, tree: ast.AST) -> None:
        func_stack: list[ast.AST] = []

        def walk(node: ast.AST) -> None:
            entered = isinstance(node, _FUNC_NODES)
            if entered:
                func_stack.append(node)
            if isinstance(node, (ast.Return, ast.Yield, ast.YieldFrom)) and func_stack:
                fn = func_stack[-1]
                if node in self.nt_of_node and fn in self.nt_of_node:
                    self.e_returns.add((self.nt_of_node[node], self.nt_of_node[fn]))
            for child in ast.iter_child_nodes(node):
                walk(child)
            if entered:
                func_stack.pop()

        walk(tree)

    # -- use chains ---------------------------------------------------------

    def _symbol_chains(self) -> None:
        by_symbol: dict[int, list[int]] = {}
        for ti, sym in self.token_symbol.items():
            by_symbol.setdefault(sym.order, []).append(ti)
        for token_ids in by_symbol.values():
            token_ids.sort(key=lambda i: self.tokens[i].start)
            for a, b in zip(token_ids, token_ids[1:]):
                self.e_lex.add((a, b))

    # -- control flow / NEXT_MAY_USE ----------------------------------------

    def _may_use(self, tree: ast.AST) -> None:
        for region_root, stmts in _split_regions(tree):
            builder = _CfgBuilder(self, region_root)
            if isinstance(region_root, _FUNC_NODES):
                entry = builder.unit(_param_nodes(region_root))
                entries, _ = builder.block(stmts)
                for e in entries:
                    builder.link([entry], e)
            elif isinstance(region_root, (ast.Lambda, *_COMP_NODES)):
                if isinstance(region_root, ast.Lambda):
                    builder.unit(_param_nodes(region_root) + [region_root.body])
                else:
                    builder.unit([region_root])
            else:
                builder.block(stmts)
            self._wire_units(builder)

    def _region_uses(self, nodes: list[ast.AST], region_root: ast.AST,
                     extra_tokens: tuple[int, ...] = ()) -> list[tuple[int, _Symbol]]:
        """Bound NAME tokens under ``nodes``, excluding nested regions."""
        uses: list[tuple[int, _Symbol]] = []
        for ti in extra_tokens:
            if ti in self.token_symbol:
                uses.append((ti, self.token_symbol[ti]))

        def walk(n: ast.AST) -> None:
            if n is not region_root and isinstance(n, _SCOPE_NODES):
                return
            if isinstance(n, ast.Name):
                ti = self.name_token.get(n)
                if ti is not None:
                    uses.append((ti, self.token_symbol[ti]))
            elif isinstance(n, ast.arg):
                ti = self.token_by_start.get((n.lineno, n.col_offset))
                if ti is not None and ti in self.token_symbol:
                    uses.append((ti, self.token_symbol[ti]))
            for child in ast.iter_child_nodes(n):
                walk(child)

        for n in nodes:
            walk(n)
        uses.sort(key=lambda u: self.tokens[u[0]].start)
        return uses

    def _wire_units(self, builder: "_CfgBuilder") -> None:
        units = builder.units
        succ = builder.succ
        n = len(units)
        first_use: list[dict[int, int]] = []
        entry_next: list[dict[int, frozenset[int]]] = []
        for uses in units:
            fu: dict[int, int] = {}
            for ti, sym in uses:
                fu.setdefault(sym.order, ti)
            first_use.append(fu)
            entry_next.append({})

        changed = True
        while changed:
            changed = False
            for u in range(n - 1, -1, -1):
                merged: dict[int, set[int]] = {}
                for v in succ.get(u, ()):
                    for sym_order, toks in entry_next[v].items():
                        merged.setdefault(sym_order, set()).update(toks)
                new = {k: frozenset(v) for k, v in merged.items()}
                for sym_order, ti in first_use[u].items():
                    new[sym_order] = frozenset((ti,))
                if new != entry_next[u]:
                    entry_next[u] = new
                    changed = True

        for u in range(n):
            by_sym: dict[int, list[int]] = {}
            for ti, sym in units[u]:
                by_sym.setdefault(sym.order, []).append(ti)
            for sym_order, toks in by_sym.items():
                for a, b in zip(toks, toks[1:]):
                    self.e_may.add((a, b))
                last = toks[-1]
                targets: set[int] = set()
                for v in succ.get(u, ()):
                    targets.update(entry_next[v].get(sym_order, ()))
                for t in targets:
                    self.e_may.add((last, t))

    # -- vocabulary -----------------------------------------------------------

    def _subtoken_edges(self) -> None:
        for tok in self.tokens:
            if not tok.is_name or keyword.iskeyword(tok.string):
                continue
            for sub in subtokenize(tok.string):
                vid = self.vocab_ids.setdefault(sub, len(self.vocab_ids))
                self.e_subtok.add((tok.index, vid))

    # -- assembly ---------------------------------------------------------------

    def _assemble(self) -> ExtractionResult:
        n_nt = len(self.nt_labels)
        n_tok = len(self.tokens)
        n_voc = len(self.vocab_ids)
        tok_off = n_nt
        voc_off = n_nt + n_tok
        sym_off = voc_off + n_voc
        total = sym_off + len(self.symbols)
        if total > self.options.max_nodes:
            raise ExtractError(
                f"{self.file_id}: graph has {total} nodes, over the cap of {self.options.max_nodes}")

        nodes: list[Node] = [Node(NONTERMINAL, lb) for lb in self.nt_labels]
        nodes.extend(Node(TOKEN, t.string) for t in self.tokens)
        voc_sorted = sorted(self.vocab_ids, key=self.vocab_ids.get)  # type: ignore[arg-type]
        nodes.extend(Node(VOCABULARY, lb) for lb in voc_sorted)
        nodes.extend(Node(SYMBOL, s.label) for s in self.symbols)

        edges: dict[str, frozenset[tuple[int, int]]] = {}

        def put(label: str, pairs: set[tuple[int, int]]) -> None:
            if label in self.options.active_edges:
                edges[label] = frozenset(pairs)

        put(NEXT_TOKEN, {(tok_off + i, tok_off + i + 1) for i in range(n_tok - 1)})
        put(CHILD, set(self.e_child) | {(a, tok_off + t) for a, t in self.e_child_tok})
        put(NEXT_MAY_USE, {(tok_off + a, tok_off + b) for a, b in self.e_may})
        put(NEXT_LEXICAL_USE, {(tok_off + a, tok_off + b) for a, b in self.e_lex})
        put(ASSIGNED_FROM, set(self.e_assigned))
        put(RETURNS_TO, set(self.e_returns))
        put(OCCURRENCE_OF, {(tok_off + t, sym_off + s) for t, s in self.e_occ_tok}
            | {(a, sym_off + s) for a, s in self.e_occ_nt})
        put(SUBTOKEN_OF, {(tok_off + t, voc_off + v) for t, v in self.e_subtok})

        infos = tuple(
            SymbolInfo(sym_off + s.order, s.kind, s.name, s.annotation) for s in self.symbols
        )
        graph = CodeGraph(self.file_id, tuple(nodes), edges, infos)
        graph.validate()
        spans = {i: s.def_span for i, s in enumerate(self.symbols) if s.def_span is not None}
        return ExtractionResult(graph, spans, self.diagnostics)


def _split_regions(tree: ast.AST) -> list[tuple[ast.AST, list[ast.AST]]]:
    """Control-flow regions: module, each function, lambda, comprehension."""
    regions: list[tuple[ast.AST, list[ast.AST]]] = [(tree, list(tree.body))]  # type: ignore[attr-defined]

    def walk(node: ast.AST) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, _FUNC_NODES):
                regions.append((child, list(child.body)))
            elif isinstance(child, (ast.Lambda, *_COMP_NODES)):
                regions.append((child, []))
            walk(child)

    walk(tree)
    return regions


class _CfgBuilder:
    """Statement-level control-flow graph over one region."""

    def __init__(self, extractor: _Extractor, region_root: ast.AST) -> None:
        self.x = extractor
        self.root = region_root
        self.units: list[list[tuple[int, _Symbol]]] = []
        self.succ: dict[int, set[int]] = {}
        self.loop_heads: list[int] = []
        self.breaks_stack: list[list[int]] = []

    def unit(self, nodes: list[ast.AST], extra_tokens: tuple[int, ...] = ()) -> int:
        uid = len(self.units)
        self.units.append(self.x._region_uses(nodes, self.root, extra_tokens))
        self.succ[uid] = set()
        return uid

    def link(self, frm: list[int], to: int) -> None:
        for u in frm:
            self.succ[u].add(to)

    def block(self, stmts: list[ast.AST]) -> tuple[list[int], list[int]]:
        entries: list[int] = []
        current_exits: list[int] = []
        for stmt in stmts:
            s_entries, s_exits = self.stmt(stmt)
            if not s_entries:
                continue
            if not entries:
                entries = s_entries
            else:
                for e in s_entries:
                    self.link(current_exits, e)
            current_exits = s_exits
        return entries, current_exits

    def stmt(self, node: ast.AST) -> tuple[list[int], list[int]]:
        if isinstance(node, ast.If):
            head = self.unit([node.test])
            b_in, b_out = self.block(node.body)
            o_in, o_out = self.block(node.orelse)
            for e in b_in:
                self.link([head], e)
            exits = list(b_out) + list(o_out)
            if o_in:
                for e in o_in:
                    self.link([head], e)
            else:
                exits.append(head)
            return [head], exits
        if isinstance(node, (ast.While, ast.For, ast.AsyncFor)):
            if isinstance(node, ast.While):
                head = self.unit([node.test])
            else:
                head = self.unit([node.target, node.iter])
            self.breaks_stack.append([])
            self.loop_heads.append(head)
            b_in, b_out = self.block(node.body)
            self.loop_heads.pop()
            breaks = self.breaks_stack.pop()
            for e in b_in:
                self.link([head], e)
            self.link(b_out, head)
            o_in, o_out = self.block(node.orelse)
            if o_in:
                for e in o_in:
                    self.link([head], e)
                exits = list(o_out)
            else:
                exits = [head]
            exits.extend(breaks)
            return [head], exits
        if isinstance(node, (ast.With, ast.AsyncWith)):
            head = self.unit(list(node.items))
            b_in, b_out = self.block(node.body)
            for e in b_in:
                self.link([head], e)
            return [head], b_out if b_in else [head]
        if isinstance(node, ast.Try):
            start = len(self.units)
            b_in, b_out = self.block(node.body)
            body_units = list(range(start, len(self.units)))
            handler_entries: list[int] = []
            handler_exits: list[int] = []
            for handler in node.handlers:
                h_head = self.unit([handler.type] if handler.type else [],
                                   self._handler_token(handler))
                hb_in, hb_out = self.block(handler.body)
                for e in hb_in:
                    self.link([h_head], e)
                handler_entries.append(h_head)
                handler_exits.extend(hb_out if hb_in else [h_head])
            # any statement in the try body may transfer to any handler
            for u in body_units:
                for h in handler_entries:
                    self.link([u], h)
            e_in, e_out = self.block(node.orelse)
            if e_in:
                for e in e_in:
                    self.link(b_out, e)
                normal_exits = e_out
            else:
                normal_exits = list(b_out)
            f_in, f_out = self.block(node.finalbody)
            if f_in:
                for e in f_in:
                    self.link(normal_exits, e)
                    self.link(handler_exits, e)
                exits = f_out
            else:
                exits = normal_exits + handler_exits
            entries = b_in or handler_entries or e_in or f_in
            return entries, exits
        if isinstance(node, ast.Match):
            head = self.unit([node.subject])
            exits = [head]  # no case may match
            for case in node.cases:
                c_head = self.unit([case.pattern] + ([case.guard] if case.guard else []))
                self.link([head], c_head)
                cb_in, cb_out = self.block(case.body)
                for e in cb_in:
                    self.link([c_head], e)
                exits.extend(cb_out if cb_in else [c_head])
            return [head], exits
        if isinstance(node, ast.ClassDef):
            head = self.unit([*node.decorator_list, *node.bases, *node.keywords],
                             self._def_token(node))
            b_in, b_out = self.block(node.body)
            for e in b_in:
                self.link([head], e)
            return [head], b_out if b_in else [head]
        if isinstance(node, _FUNC_NODES + (ast.Lambda,)):
            # defaults and decorators evaluate here; the body is another region
            head = self.unit(_def_site_nodes(node), self._def_token(node))
            return [head], [head]
        if isinstance(node, (ast.Return, ast.Raise)):
            head = self.unit([node])
            return [head], []
        if isinstance(node, ast.Break):
            head = self.unit([node])
            if self.breaks_stack:
                self.breaks_stack[-1].append(head)
            return [head], []
        if isinstance(node, ast.Continue):
            head = self.unit([node])
            if self.loop_heads:
                self.link([head], self.loop_heads[-1])
            return [head], []
        head = self.unit([node])
        return [head], [head]

    def _def_token(self, node: ast.AST) -> tuple[int, ...]:
        ti = self.x.def_name_tokens.get(node)
        return (ti,) if ti is not None else ()

    def _handler_token(self, handler: ast.ExceptHandler) -> tuple[int, ...]:
        ti = self.x._handler_name_token(handler)
        return (ti,) if ti is not None else ()


def extract_file(source: str, options: ExtractOptions = ExtractOptions(),
                 file_id: str = "<memory>") -> ExtractionResult:
    """Extract a graph plus symbol definition spans and diagnostics."""
    return _Extractor(source, options, file_id).run()


def extract_graph(source: str, options: ExtractOptions = ExtractOptions(),
                  file_id: str = "<memory>") -> CodeGraph:
    """Extract just the CodeGraph for one source file."""
    return extract_file(source, options, file_id).graph
