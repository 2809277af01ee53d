"""Graph neural network encoder producing symbol type embeddings.

Initial node states are the mean of learned subtoken embeddings of each
node's label. For T rounds, every edge src -k-> dst delivers the message
W_k * h_dst to src (and W'_k * h_src to dst when inverse edges are on);
a node's incoming messages aggregate by elementwise max, and a single
shared GRU cell updates its state. A symbol's type embedding is its
symbol node's final state.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .codegraph import EDGE_LABELS, CodeGraph
from .tensor import (
    ParamStore,
    Tensor,
    add_gru_params,
    concat_rows,
    gather_rows,
    gru_cell,
    matmul,
    mul,
    segment_sum,
    segment_max,
    tensor,
)
from .codegraph import subtokenize

__all__ = ["GnnConfig", "Vocabulary", "GraphArrays", "build_params", "prepare_graph",
           "init_node_states", "propagate", "symbol_embeddings", "encode_symbols", "UNK"]

UNK = "<unk>"


@dataclass(frozen=True)
class GnnConfig:
    dim: int = 64
    steps: int = 8
    active_edges: tuple[str, ...] = EDGE_LABELS
    use_inverse_edges: bool = True

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        unknown = set(self.active_edges) - set(EDGE_LABELS)
        if unknown:
            raise ValueError(f"unknown edge labels: {sorted(unknown)}")


class Vocabulary:
    """Subtoken -> index map with a reserved unknown entry at 0."""

    def __init__(self, subtokens: Iterable[str]) -> None:
        self.tokens = [UNK] + [s for s in subtokens if s != UNK]
        self.index = {s: i for i, s in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, subtoken: str) -> int:
        return self.index.get(subtoken, 0)

    @classmethod
    def build(cls, graphs: Iterable[CodeGraph], min_count: int = 2,
              max_size: int = 10_000) -> "Vocabulary":
        counts: Counter[str] = Counter()
        for g in graphs:
            for node in g.nodes:
                counts.update(subtokenize(node.label))
        eligible = [(s, c) for s, c in counts.items() if c >= min_count]
        eligible.sort(key=lambda item: (-item[1], item[0]))
        return cls(s for s, _ in eligible[:max_size])


def build_params(config: GnnConfig, vocab_size: int, num_classes: int,
                 seed: int = 0) -> ParamStore:
    """All learned tensors, created in a fixed order for reproducibility."""
    store = ParamStore(seed=seed)
    store.add("embed", (vocab_size, config.dim))
    for label in EDGE_LABELS:
        if label in config.active_edges:
            store.add(f"edge/{label}", (config.dim, config.dim))
            if config.use_inverse_edges:
                store.add(f"edge_inv/{label}", (config.dim, config.dim))
    add_gru_params(store, config.dim)
    if num_classes > 0:
        store.add("cls/proto", (num_classes, config.dim))
        store.add("cls/bias", (num_classes,))
    store.add("proj/W", (config.dim, config.dim))
    return store


@dataclass
class GraphArrays:
    """Static per-graph index arrays, reusable across epochs."""

    num_nodes: int
    subtoken_ids: np.ndarray  # flat vocabulary indices, grouped by node
    subtoken_node: np.ndarray  # owning node per flat subtoken
    inv_counts: np.ndarray  # (len(subtoken_ids), 1) 1/|SubTok(node)|
    edges_by_label: dict[str, tuple[np.ndarray, np.ndarray]]
    symbol_nodes: np.ndarray
    file_id: str = ""
    annotations: list = field(default_factory=list)


def prepare_graph(graph: CodeGraph, vocab: Vocabulary) -> GraphArrays:
    flat_ids: list[int] = []
    flat_node: list[int] = []
    inv: list[float] = []
    for i, node in enumerate(graph.nodes):
        subs = subtokenize(node.label)
        for s in subs:
            flat_ids.append(vocab.lookup(s))
            flat_node.append(i)
            inv.append(1.0 / len(subs))
    edges = {
        label: tuple(np.array(sorted(graph.edge_set(label))).reshape(-1, 2).T)
        for label in graph.edges
        if graph.edge_set(label)
    }
    return GraphArrays(
        num_nodes=len(graph.nodes),
        subtoken_ids=np.asarray(flat_ids, dtype=np.int64),
        subtoken_node=np.asarray(flat_node, dtype=np.int64),
        inv_counts=np.asarray(inv, dtype=np.float64).reshape(-1, 1),
        edges_by_label={k: (np.ascontiguousarray(v[0]), np.ascontiguousarray(v[1]))
                        for k, v in edges.items()},
        symbol_nodes=np.asarray([s.node_index for s in graph.symbols], dtype=np.int64),
        file_id=graph.file_id,
        annotations=[s.annotation for s in graph.symbols],
    )


def init_node_states(arrays: GraphArrays, params: ParamStore) -> Tensor:
    """Mean of subtoken embeddings per node (unknowns hit the UNK row)."""
    emb = gather_rows(params["embed"], arrays.subtoken_ids)
    weighted = mul(emb, tensor(arrays.inv_counts))
    return segment_sum(weighted, arrays.subtoken_node, arrays.num_nodes)


def propagate(arrays: GraphArrays, states: Tensor, params: ParamStore,
              config: GnnConfig) -> Tensor:
    h = states
    dim = config.dim
    labels = [lb for lb in EDGE_LABELS
              if lb in config.active_edges and lb in arrays.edges_by_label]
    for _ in range(config.steps):
        messages: list[Tensor] = []
        receivers: list[np.ndarray] = []
        for label in labels:
            src, dst = arrays.edges_by_label[label]
            messages.append(matmul(gather_rows(h, dst), params[f"edge/{label}"]))
            receivers.append(src)
            if config.use_inverse_edges:
                messages.append(matmul(gather_rows(h, src), params[f"edge_inv/{label}"]))
                receivers.append(dst)
        if messages:
            stacked = concat_rows(messages)
            recv = np.concatenate(receivers)
            agg = segment_max(stacked, recv, arrays.num_nodes, default=0.0)
        else:
            agg = tensor(np.zeros((arrays.num_nodes, dim)))
        h = gru_cell(agg, h, params)
    return h


def symbol_embeddings(arrays: GraphArrays, final_states: Tensor) -> Tensor:
    """One row per symbol, in SymbolInfo order."""
    return gather_rows(final_states, arrays.symbol_nodes)


def encode_symbols(arrays: GraphArrays, params: ParamStore, config: GnnConfig) -> Tensor:
    """Full encoder: init, propagate, read out the symbol rows."""
    states = propagate(arrays, init_node_states(arrays, params), params, config)
    return symbol_embeddings(arrays, states)
