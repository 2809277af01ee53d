"""Graph extraction fixtures with hand-derived node/edge expectations.

Each fixture's expected multisets were worked out by hand from the token
stream and syntax tree, never by running the extractor and copying its
output. Edges are compared as multisets of (category:label) pairs, which
is the node-identity view of the edge multiset; identity-sensitive facts
(shared symbol nodes) are asserted on indices directly.
"""

from __future__ import annotations

import io
import tokenize
from collections import Counter

import pytest

from hintspace.codegraph import (
    ASSIGNED_FROM,
    CHILD,
    EDGE_LABELS,
    NEXT_LEXICAL_USE,
    NEXT_MAY_USE,
    NEXT_TOKEN,
    OCCURRENCE_OF,
    RETURNS_TO,
    SUBTOKEN_OF,
)
from hintspace.extract import ExtractError, ExtractOptions, extract_file, extract_graph


def desc(graph, idx):
    node = graph.nodes[idx]
    return f"{node.category}:{node.label}"


def edge_multiset(graph, label):
    return Counter((desc(graph, s), desc(graph, d)) for s, d in graph.edge_set(label))


def node_multiset(graph):
    return Counter(f"{n.category}:{n.label}" for n in graph.nodes)


def pairs(*items):
    return Counter(items)


class TestCallSnippetFixture:
    """foo=get_foo(i, i+1) — the shared-symbol and subtoken example."""

    SRC = "foo=get_foo(i, i+1)"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="fig")

    def test_node_multiset(self, graph):
        expected = Counter(
            [
                "nonterminal:Module",
                "nonterminal:Assign",
                "nonterminal:Name",
                "nonterminal:Call",
                "nonterminal:Name",
                "nonterminal:Name",
                "nonterminal:BinOp",
                "nonterminal:Name",
                "nonterminal:Add",
                "nonterminal:Constant",
                "token:foo",
                "token:=",
                "token:get_foo",
                "token:(",
                "token:i",
                "token:,",
                "token:i",
                "token:+",
                "token:1",
                "token:)",
                "vocabulary:foo",
                "vocabulary:get",
                "vocabulary:i",
                "symbol:foo",
                "symbol:get_foo",
                "symbol:i",
            ]
        )
        assert node_multiset(graph) == expected

    def test_next_token_chain(self, graph):
        expected = pairs(
            ("token:foo", "token:="),
            ("token:=", "token:get_foo"),
            ("token:get_foo", "token:("),
            ("token:(", "token:i"),
            ("token:i", "token:,"),
            ("token:,", "token:i"),
            ("token:i", "token:+"),
            ("token:+", "token:1"),
            ("token:1", "token:)"),
        )
        assert edge_multiset(graph, NEXT_TOKEN) == expected

    def test_child_edges(self, graph):
        expected = pairs(
            # syntax tree skeleton
            ("nonterminal:Module", "nonterminal:Assign"),
            ("nonterminal:Assign", "nonterminal:Name"),
            ("nonterminal:Assign", "nonterminal:Call"),
            ("nonterminal:Call", "nonterminal:Name"),
            ("nonterminal:Call", "nonterminal:Name"),
            ("nonterminal:Call", "nonterminal:BinOp"),
            ("nonterminal:BinOp", "nonterminal:Name"),
            ("nonterminal:BinOp", "nonterminal:Add"),
            ("nonterminal:BinOp", "nonterminal:Constant"),
            # tokens hang off their innermost spanned node
            ("nonterminal:Name", "token:foo"),
            ("nonterminal:Assign", "token:="),
            ("nonterminal:Name", "token:get_foo"),
            ("nonterminal:Call", "token:("),
            ("nonterminal:Name", "token:i"),
            ("nonterminal:Call", "token:,"),
            ("nonterminal:Name", "token:i"),
            ("nonterminal:BinOp", "token:+"),
            ("nonterminal:Constant", "token:1"),
            ("nonterminal:Call", "token:)"),
        )
        assert edge_multiset(graph, CHILD) == expected

    def test_occurrence_of(self, graph):
        expected = pairs(
            ("token:foo", "symbol:foo"),
            ("token:get_foo", "symbol:get_foo"),
            ("token:i", "symbol:i"),
            ("token:i", "symbol:i"),
            ("nonterminal:Name", "symbol:foo"),
            ("nonterminal:Name", "symbol:get_foo"),
            ("nonterminal:Name", "symbol:i"),
            ("nonterminal:Name", "symbol:i"),
        )
        assert edge_multiset(graph, OCCURRENCE_OF) == expected

    def test_both_i_tokens_share_one_symbol_node(self, graph):
        i_tokens = [k for k, n in enumerate(graph.nodes) if n.category == "token" and n.label == "i"]
        assert len(i_tokens) == 2
        targets = {
            d for s, d in graph.edge_set(OCCURRENCE_OF)
            if s in i_tokens
        }
        assert len(targets) == 1
        (sym,) = targets
        assert graph.nodes[sym].category == "symbol" and graph.nodes[sym].label == "i"

    def test_subtoken_vocabulary_links(self, graph):
        expected = pairs(
            ("token:foo", "vocabulary:foo"),
            ("token:get_foo", "vocabulary:get"),
            ("token:get_foo", "vocabulary:foo"),
            ("token:i", "vocabulary:i"),
            ("token:i", "vocabulary:i"),
        )
        assert edge_multiset(graph, SUBTOKEN_OF) == expected

    def test_use_chains(self, graph):
        expected = pairs(("token:i", "token:i"))
        assert edge_multiset(graph, NEXT_LEXICAL_USE) == expected
        # straight-line code: may-use equals lexical use
        assert graph.edge_set(NEXT_MAY_USE) == graph.edge_set(NEXT_LEXICAL_USE)

    def test_assigned_from(self, graph):
        assert edge_multiset(graph, ASSIGNED_FROM) == pairs(
            ("nonterminal:Call", "nonterminal:Name")
        )

    def test_no_returns(self, graph):
        assert edge_multiset(graph, RETURNS_TO) == Counter()

    def test_symbols(self, graph):
        assert [(s.kind, s.name, s.annotation) for s in graph.symbols] == [
            ("variable", "foo", None),
            ("variable", "get_foo", None),
            ("variable", "i", None),
        ]


class TestAnnotatedDefFixture:
    """def f(a: int) -> str: return a — annotations become ground truth."""

    SRC = "def f(a: int) -> str: return a"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="def")

    def test_node_multiset(self, graph):
        expected = Counter(
            [
                "nonterminal:Module",
                "nonterminal:FunctionDef",
                "nonterminal:arguments",
                "nonterminal:arg",
                "nonterminal:Return",
                "nonterminal:Name",
                "token:def",
                "token:f",
                "token:(",
                "token:a",
                "token:)",
                "token::",
                "token:return",
                "token:a",
                "vocabulary:f",
                "vocabulary:a",
                "symbol:f",
                "symbol:a",
            ]
        )
        assert node_multiset(graph) == expected

    def test_annotation_tokens_and_markers_are_gone(self, graph):
        labels = [n.label for n in graph.nodes if n.category == "token"]
        assert "int" not in labels and "str" not in labels and "->" not in labels
        assert labels.count(":") == 1  # only the body colon survives

    def test_symbols_carry_ground_truth(self, graph):
        got = [(s.kind, s.name, s.annotation.render() if s.annotation else None)
               for s in graph.symbols]
        assert got == [("return", "f", "str"), ("parameter", "f.a", "int")]

    def test_returns_to(self, graph):
        assert edge_multiset(graph, RETURNS_TO) == pairs(
            ("nonterminal:Return", "nonterminal:FunctionDef")
        )

    def test_child_edges(self, graph):
        expected = pairs(
            ("nonterminal:Module", "nonterminal:FunctionDef"),
            ("nonterminal:FunctionDef", "nonterminal:arguments"),
            ("nonterminal:arguments", "nonterminal:arg"),
            ("nonterminal:FunctionDef", "nonterminal:Return"),
            ("nonterminal:Return", "nonterminal:Name"),
            ("nonterminal:FunctionDef", "token:def"),
            ("nonterminal:FunctionDef", "token:f"),
            ("nonterminal:FunctionDef", "token:("),
            ("nonterminal:arg", "token:a"),
            ("nonterminal:FunctionDef", "token:)"),
            ("nonterminal:FunctionDef", "token::"),
            ("nonterminal:Return", "token:return"),
            ("nonterminal:Name", "token:a"),
        )
        assert edge_multiset(graph, CHILD) == expected

    def test_occurrence_of(self, graph):
        expected = pairs(
            ("token:f", "symbol:f"),
            ("token:a", "symbol:a"),
            ("token:a", "symbol:a"),
            ("nonterminal:FunctionDef", "symbol:f"),
            ("nonterminal:arg", "symbol:a"),
            ("nonterminal:Name", "symbol:a"),
        )
        assert edge_multiset(graph, OCCURRENCE_OF) == expected

    def test_use_chains(self, graph):
        expected = pairs(("token:a", "token:a"))
        assert edge_multiset(graph, NEXT_LEXICAL_USE) == expected
        assert edge_multiset(graph, NEXT_MAY_USE) == expected


class TestEmptyFileFixture:
    def test_only_root_nonterminal(self):
        g = extract_graph("", file_id="empty")
        assert node_multiset(g) == Counter(["nonterminal:Module"])
        assert g.symbols == ()
        assert set(g.edges) == set(EDGE_LABELS)
        assert all(not pairs for pairs in g.edges.values())


class TestStraightLineFixture:
    SRC = "x = 1\ny = x\nz = x + y\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="sl")

    def test_lexical_chain_lengths(self, graph):
        # x has 3 uses -> 2 edges; y has 2 -> 1; z has 1 -> 0.
        assert edge_multiset(graph, NEXT_LEXICAL_USE) == pairs(
            ("token:x", "token:x"),
            ("token:x", "token:x"),
            ("token:y", "token:y"),
        )

    def test_straight_line_may_use_equals_lexical(self, graph):
        assert graph.edge_set(NEXT_MAY_USE) == graph.edge_set(NEXT_LEXICAL_USE)

    def test_assigned_from(self, graph):
        assert edge_multiset(graph, ASSIGNED_FROM) == pairs(
            ("nonterminal:Constant", "nonterminal:Name"),
            ("nonterminal:Name", "nonterminal:Name"),
            ("nonterminal:BinOp", "nonterminal:Name"),
        )


class TestBranchJoinFixture:
    SRC = "x = 1\nif cond:\n    y = x\nelse:\n    y = 2\nout = y\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="br")

    def test_may_use_includes_branch_join(self, graph):
        # x: write line1 -> read line3 (through the test unit).
        # y: each branch write -> read line6; within-statement none else.
        expected = pairs(
            ("token:x", "token:x"),
            ("token:y", "token:y"),
            ("token:y", "token:y"),
        )
        assert edge_multiset(graph, NEXT_MAY_USE) == expected

    def test_lexical_differs_from_may_use_on_branches(self, graph):
        # Lexically y chains 3 uses in textual order: y@3 -> y@5 -> y@6.
        assert edge_multiset(graph, NEXT_LEXICAL_USE) == pairs(
            ("token:x", "token:x"),
            ("token:y", "token:y"),
            ("token:y", "token:y"),
        )
        assert graph.edge_set(NEXT_MAY_USE) != graph.edge_set(NEXT_LEXICAL_USE)


class TestLoopFixture:
    SRC = "i = 0\nwhile i < n:\n    i = i + 1\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="loop")

    def test_loop_carried_may_use(self, graph):
        nodes = graph.nodes
        toks = {k: nodes[k].label for k, n in enumerate(nodes) if n.category == "token"}
        i_tokens = sorted(k for k, lb in toks.items() if lb == "i")
        n_tokens = sorted(k for k, lb in toks.items() if lb == "n")
        assert len(i_tokens) == 4 and len(n_tokens) == 1
        i1, i2, i3, i4 = i_tokens  # line1 write, test read, body write, body read
        (n1,) = n_tokens
        expected = {
            (i1, i2),  # init -> test
            (i2, i3),  # test -> body write
            (i3, i4),  # within-statement
            (i4, i2),  # back edge to the test
            (n1, n1),  # n's only use may recur through the loop
        }
        assert set(graph.edge_set(NEXT_MAY_USE)) == expected

    def test_lexical_chain_is_textual(self, graph):
        nodes = graph.nodes
        i_tokens = sorted(k for k, n in enumerate(nodes) if n.category == "token" and n.label == "i")
        i1, i2, i3, i4 = i_tokens
        lex = set(graph.edge_set(NEXT_LEXICAL_USE))
        assert {(i1, i2), (i2, i3), (i3, i4)} <= lex


class TestKeywordArgumentFixture:
    SRC = "result = process(data, mode=fast)\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="kw")

    def test_keyword_name_is_a_token_with_subtokens_but_no_symbol(self, graph):
        assert "token:mode" in node_multiset(graph)
        assert ("token:mode", "vocabulary:mode") in edge_multiset(graph, SUBTOKEN_OF)
        occ = edge_multiset(graph, OCCURRENCE_OF)
        assert ("token:mode", "symbol:mode") not in occ
        assert "symbol:mode" not in node_multiset(graph)

    def test_callee_and_args_have_symbols(self, graph):
        names = {s.name for s in graph.symbols}
        assert names == {"result", "process", "data", "fast"}


class TestSelfAttributeFixture:
    SRC = (
        "class C:\n"
        "    def m(self, v):\n"
        "        self.x = v\n"
        "        return self.x\n"
    )

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="attr")

    def test_symbol_table(self, graph):
        got = [(s.kind, s.name) for s in graph.symbols]
        assert got == [
            ("variable", "C"),
            ("return", "C.m"),
            ("parameter", "C.m.self"),
            ("parameter", "C.m.v"),
            ("variable", "C.x"),
        ]

    def test_attribute_occurrences_share_symbol(self, graph):
        attr_sym = next(
            s.node_index for s in graph.symbols if s.name == "C.x"
        )
        sources = [s for s, d in graph.edge_set(OCCURRENCE_OF) if d == attr_sym]
        assert len(sources) == 2
        assert all(graph.nodes[s].label == "Attribute" for s in sources)

    def test_returns_to_method(self, graph):
        assert edge_multiset(graph, RETURNS_TO) == pairs(
            ("nonterminal:Return", "nonterminal:FunctionDef")
        )


class TestAnnotatedAssignFixture:
    SRC = "x: int = 1\ny = x\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="ann")

    def test_annotation_stripped_and_relabelled(self, graph):
        token_labels = [n.label for n in graph.nodes if n.category == "token"]
        assert token_labels == ["x", "=", "1", "y", "=", "x"]
        nts = [n.label for n in graph.nodes if n.category == "nonterminal"]
        assert "AnnAssign" not in nts
        assert nts.count("Assign") == 2

    def test_ground_truth_recorded(self, graph):
        x = next(s for s in graph.symbols if s.name == "x")
        assert x.annotation is not None and x.annotation.render() == "int"

    def test_assigned_from_still_present(self, graph):
        assert edge_multiset(graph, ASSIGNED_FROM) == pairs(
            ("nonterminal:Constant", "nonterminal:Name"),
            ("nonterminal:Name", "nonterminal:Name"),
        )


class TestSharedSubtokenFixture:
    SRC = "numNodes = getNodes()\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="sub")

    def test_shared_vocabulary_node(self, graph):
        vocab = [n.label for n in graph.nodes if n.category == "vocabulary"]
        assert Counter(vocab) == Counter(["num", "nodes", "get"])
        assert edge_multiset(graph, SUBTOKEN_OF) == pairs(
            ("token:numNodes", "vocabulary:num"),
            ("token:numNodes", "vocabulary:nodes"),
            ("token:getNodes", "vocabulary:get"),
            ("token:getNodes", "vocabulary:nodes"),
        )

    def test_nodes_vocab_indegree_two(self, graph):
        nodes_vid = next(
            k for k, n in enumerate(graph.nodes)
            if n.category == "vocabulary" and n.label == "nodes"
        )
        in_deg = sum(1 for _, d in graph.edge_set(SUBTOKEN_OF) if d == nodes_vid)
        assert in_deg == 2


class TestComprehensionFixture:
    SRC = "xs = [1, 2]\nys = [x * k for x in xs]\n"

    @pytest.fixture()
    def graph(self):
        return extract_graph(self.SRC, file_id="comp")

    def test_comprehension_variable_scoped_separately(self, graph):
        names = sorted(s.name for s in graph.symbols)
        assert names == ["<comp>.x", "k", "xs", "ys"]

    def test_lexical_chain_crosses_scopes(self, graph):
        xs_tokens = sorted(
            k for k, n in enumerate(graph.nodes) if n.category == "token" and n.label == "xs"
        )
        assert len(xs_tokens) == 2
        assert (xs_tokens[0], xs_tokens[1]) in graph.edge_set(NEXT_LEXICAL_USE)

    def test_comprehension_region_straight_line(self, graph):
        # inside [x * k for x in xs]: textual chain x(elt) -> x(target)
        x_tokens = sorted(
            k for k, n in enumerate(graph.nodes) if n.category == "token" and n.label == "x"
        )
        assert len(x_tokens) == 2
        assert (x_tokens[0], x_tokens[1]) in graph.edge_set(NEXT_MAY_USE)


class TestDocstringsAndComments:
    SRC = '"""module doc"""\n# a comment\ndef f():\n    "f doc"\n    return 1\n'

    def test_dropped_entirely(self):
        g = extract_graph(self.SRC, file_id="doc")
        token_labels = [n.label for n in g.nodes if n.category == "token"]
        assert '"""module doc"""' not in token_labels
        assert '"f doc"' not in token_labels
        assert all("comment" not in lb for lb in token_labels)
        nts = [n.label for n in g.nodes if n.category == "nonterminal"]
        # both docstring Expr statements are gone; only the def remains
        assert nts.count("Expr") == 0


class TestOptionsAndErrors:
    def test_parse_failure_raises(self):
        with pytest.raises(ExtractError):
            extract_graph("def broken(:\n", file_id="bad")

    def test_node_cap(self):
        with pytest.raises(ExtractError):
            extract_graph("x = 1\n" * 50, ExtractOptions(max_nodes=10), file_id="big")

    def test_ablation_removes_label_and_nothing_else(self):
        src = "a = 1\nb = a\n"
        full = extract_graph(src, file_id="f")
        ablated = extract_graph(
            src, ExtractOptions(frozenset(set(EDGE_LABELS) - {NEXT_MAY_USE})), file_id="f"
        )
        assert NEXT_MAY_USE not in ablated.edges
        assert set(ablated.edges) == set(EDGE_LABELS) - {NEXT_MAY_USE}
        for label in ablated.edges:
            assert ablated.edge_set(label) == full.edge_set(label)
        assert ablated.nodes == full.nodes
        assert ablated.symbols == full.symbols

    def test_unknown_ablation_label_rejected(self):
        with pytest.raises(ValueError):
            ExtractOptions(frozenset({"NOT_A_LABEL"}))


class TestInvariants:
    @pytest.mark.parametrize(
        "src",
        [
            "foo=get_foo(i, i+1)",
            "def f(a, b):\n    c = a + b\n    return c\n",
            "for i in range(3):\n    total = total + i\n",
            "import os\npath = os.sep\n",
        ],
    )
    def test_next_token_count_matches_lexer(self, src):
        g = extract_graph(src, file_id="t")
        drop = {
            tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT,
            tokenize.DEDENT, tokenize.ENCODING, tokenize.ENDMARKER,
        }
        lexer_count = sum(
            1 for t in tokenize.generate_tokens(io.StringIO(src).readline) if t.type not in drop
        )
        token_nodes = [n for n in g.nodes if n.category == "token"]
        assert len(token_nodes) == lexer_count
        assert len(g.edge_set(NEXT_TOKEN)) == max(0, lexer_count - 1)

    @pytest.mark.parametrize(
        "src",
        [
            "a = 1\nb = a\nc = a + b\nprint(a, b, c)\n",
            "def f(x):\n    y = x\n    return y\n",
        ],
    )
    def test_lexical_use_path_lengths(self, src):
        g = extract_graph(src, file_id="t")
        per_symbol_uses = Counter()
        for s, d in g.edge_set(OCCURRENCE_OF):
            if g.nodes[s].category == "token":
                per_symbol_uses[d] += 1
        # n textual uses -> exactly n-1 lexical-use edges per symbol
        expected_edges = sum(max(0, c - 1) for c in per_symbol_uses.values())
        assert len(g.edge_set(NEXT_LEXICAL_USE)) == expected_edges

    def test_bound_tokens_have_occurrence_edges(self):
        g = extract_graph("q = 1\nw = q\n", file_id="t")
        bound_sources = {s for s, _ in g.edge_set(OCCURRENCE_OF) if g.nodes[s].category == "token"}
        q_and_w = {
            k for k, n in enumerate(g.nodes) if n.category == "token" and n.label in ("q", "w")
        }
        assert q_and_w <= bound_sources

    def test_every_symbol_points_at_symbol_node(self):
        g = extract_graph("def f(a):\n    return a\n", file_id="t")
        for s in g.symbols:
            assert g.nodes[s.node_index].category == "symbol"

    def test_may_use_superset_of_lexical_on_straight_line(self):
        src = "m = 1\nn = m\no = n + m\n"
        g = extract_graph(src, file_id="t")
        assert g.edge_set(NEXT_MAY_USE) == g.edge_set(NEXT_LEXICAL_USE)


class TestSymbolSpans:
    def test_spans_reported_for_definitions(self):
        result = extract_file("def f(a):\n    return a\n", file_id="t")
        by_name = {result.graph.symbols[i].name: span for i, span in result.symbol_spans.items()}
        assert "f" in by_name and "f.a" in by_name
        assert by_name["f.a"].line == 1
