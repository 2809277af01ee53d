"""Corpus ingestion, splits, the training driver, metrics, and reports.

Ties the pieces together: extract a directory into graphs, split by
file with exact-content deduplication, train the encoder under one of
the three objectives, build the type map from annotated symbols, and
score predictions as exact / up-to-parametric / type-neutral with
common-versus-rare and per-kind breakdowns plus precision-recall points.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .codegraph import CodeGraph, serialize_graph
from .extract import ExtractError, ExtractOptions, extract_graph
from .gnn import (
    GnnConfig,
    GraphArrays,
    Vocabulary,
    build_params,
    encode_symbols,
    prepare_graph,
)
from .losses import ClassVocab, TrainConfig, loss_components, make_batches
from .tensor import (
    Adam,
    ParamStore,
    backward,
    concat_rows,
    load_checkpoint,
    save_checkpoint,
)
from .typemap import PredictionConfig, TypeMap
from .typeexpr import (
    TypeExpr,
    TypeLattice,
    build_type_lattice,
    check_neutral,
    erase_type_parameters,
    normalize_type,
)

__all__ = [
    "DivergenceError",
    "EvalRecord",
    "ModelBundle",
    "RARE_CUTOFF",
    "extract_directory",
    "split_corpus",
    "train",
    "build_map",
    "evaluate",
    "pr_curve",
    "corpus_lattice",
    "rare_type_counts",
    "classifier_predict",
]

RARE_CUTOFF = 100  # training-set annotations below this make a type rare


class DivergenceError(Exception):
    """Training produced a non-finite loss."""


# -- corpus -----------------------------------------------------------------


def content_fingerprint(text: str) -> str:
    """SHA-256 over whitespace-normalized content, for exact dedup."""
    return hashlib.sha256(" ".join(text.split()).encode("utf-8")).hexdigest()


def extract_directory(
    root: str,
    options: ExtractOptions = ExtractOptions(),
) -> tuple[list[CodeGraph], list[str]]:
    """Extract every .py file under root; dedup; skip failures with a note."""
    graphs: list[CodeGraph] = []
    diagnostics: list[str] = []
    seen: set[str] = set()
    for path in sorted(Path(root).rglob("*.py")):
        rel = path.relative_to(root).as_posix()
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            diagnostics.append(f"{rel}: unreadable: {exc}")
            continue
        digest = content_fingerprint(text)
        if digest in seen:
            diagnostics.append(f"{rel}: duplicate content, skipped")
            continue
        seen.add(digest)
        try:
            graphs.append(extract_graph(text, options, file_id=rel))
        except ExtractError as exc:
            diagnostics.append(str(exc))
    return graphs, diagnostics


def _graph_fingerprint(graph: CodeGraph) -> str:
    anonymous = dataclasses.replace(graph, file_id="")
    return hashlib.sha256(serialize_graph(anonymous).encode("utf-8")).hexdigest()


def split_corpus(
    graphs: Sequence[CodeGraph], seed: int
) -> tuple[list[CodeGraph], list[CodeGraph], list[CodeGraph]]:
    """Deterministic 70/10/20 file-level split after content dedup.

    Rounding: floor for train and valid, remainder to test.
    """
    unique: list[CodeGraph] = []
    seen: set[str] = set()
    for g in sorted(graphs, key=lambda g: g.file_id):
        digest = _graph_fingerprint(g)
        if digest not in seen:
            seen.add(digest)
            unique.append(g)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unique))
    n = len(unique)
    n_train = int(0.7 * n)
    n_valid = int(0.1 * n)
    shuffled = [unique[int(i)] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train:n_train + n_valid],
        shuffled[n_train + n_valid:],
    )


# -- model bundle -------------------------------------------------------------


@dataclass
class ModelBundle:
    """A trained encoder plus everything needed to run it."""

    params: ParamStore
    vocab: Vocabulary
    class_vocab: ClassVocab
    gnn_config: GnnConfig
    train_config: TrainConfig
    train_type_counts: dict = dataclasses.field(default_factory=dict)

    def save(self, path: str) -> None:
        meta = {
            "vocabulary": self.vocab.tokens[1:],
            "class_types": self.class_vocab.types[1:],
            "gnn": {
                "dim": self.gnn_config.dim,
                "steps": self.gnn_config.steps,
                "active_edges": list(self.gnn_config.active_edges),
                "use_inverse_edges": self.gnn_config.use_inverse_edges,
            },
            "train": dataclasses.asdict(self.train_config),
            "type_counts": dict(sorted(self.train_type_counts.items())),
        }
        save_checkpoint(path, self.params.state(), self.gnn_config.dim,
                        len(self.vocab), meta)

    @classmethod
    def load(cls, path: str) -> "ModelBundle":
        state, dim, _, meta = load_checkpoint(path)
        gnn_meta = meta["gnn"]
        gnn_config = GnnConfig(
            dim=dim,
            steps=gnn_meta["steps"],
            active_edges=tuple(gnn_meta["active_edges"]),
            use_inverse_edges=gnn_meta["use_inverse_edges"],
        )
        train_config = TrainConfig(**meta["train"])
        params = ParamStore(seed=0)
        params.load_state(state)
        return cls(params, Vocabulary(meta["vocabulary"]),
                   ClassVocab(meta["class_types"]), gnn_config, train_config,
                   dict(meta.get("type_counts", {})))

    def embed_graph(self, graph: CodeGraph) -> np.ndarray:
        arrays = prepare_graph(graph, self.vocab)
        if arrays.symbol_nodes.size == 0:
            return np.zeros((0, self.gnn_config.dim))
        return encode_symbols(arrays, self.params, self.gnn_config).data


def classifier_predict(bundle: ModelBundle, embedding: np.ndarray) -> list[tuple[str, float]]:
    """Closed-vocabulary distribution from the classification head.

    Types outside the class vocabulary cannot appear: their probability
    is zero by construction.
    """
    logits = embedding @ bundle.params["cls/proto"].data.T + bundle.params["cls/bias"].data
    z = logits - logits.max()
    probs = np.exp(z) / np.exp(z).sum()
    ranked = sorted(zip(bundle.class_vocab.types, probs), key=lambda kv: (-kv[1], kv[0]))
    return [(t, float(p)) for t, p in ranked]


# -- training -------------------------------------------------------------------


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: list[dict]
    best_epoch: int


def _batch_forward(batch: list[GraphArrays], params: ParamStore,
                   gnn_config: GnnConfig):
    parts = []
    annotations = []
    for arrays in batch:
        if arrays.symbol_nodes.size == 0:
            continue
        parts.append(encode_symbols(arrays, params, gnn_config))
        annotations.extend(arrays.annotations)
    if not parts:
        return None, []
    return concat_rows(parts), annotations


def train(
    train_graphs: Sequence[CodeGraph],
    valid_graphs: Sequence[CodeGraph],
    gnn_config: GnnConfig,
    config: TrainConfig,
    log: Optional[Callable[[dict], None]] = None,
    min_subtoken_count: int = 2,
    vocab_cap: int = 10_000,
) -> TrainResult:
    """Run the epoch loop, keeping the best-validation parameter state."""
    vocab = Vocabulary.build(train_graphs, min_count=min_subtoken_count,
                             max_size=vocab_cap)
    class_vocab = ClassVocab.build(train_graphs, min_count=config.min_class_count)
    params = build_params(gnn_config, len(vocab), len(class_vocab), seed=config.seed)
    optimizer = Adam(params, lr=config.learning_rate)

    train_arrays = [prepare_graph(g, vocab) for g in train_graphs]
    valid_arrays = [prepare_graph(g, vocab) for g in valid_graphs]

    def eval_split(arrays_list: list[GraphArrays]) -> dict[str, float]:
        sums = {"space": 0.0, "class": 0.0, "total": 0.0}
        batches = make_batches(arrays_list, config.batch_symbols, seed=0, epoch=0)
        used = 0
        for batch in batches:
            emb, annotations = _batch_forward(batch, params, gnn_config)
            if emb is None:
                continue
            parts = loss_components(emb, annotations, params, config, class_vocab)
            for key in sums:
                sums[key] += float(parts[key].data)
            used += 1
        return {k: v / max(1, used) for k, v in sums.items()}

    history: list[dict] = []
    best_state = params.state()
    best_valid = float("inf")
    best_epoch = 0
    for epoch in range(config.epochs):
        started = time.perf_counter()
        batches = make_batches(train_arrays, config.batch_symbols,
                               seed=config.seed, epoch=epoch)
        sums = {"space": 0.0, "class": 0.0, "total": 0.0}
        used = 0
        for batch in batches:
            emb, annotations = _batch_forward(batch, params, gnn_config)
            if emb is None:
                continue
            parts = loss_components(emb, annotations, params, config, class_vocab)
            total = parts["total"]
            if not np.isfinite(total.data):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            params.zero_grad()
            backward(total)
            optimizer.step()
            for key in sums:
                sums[key] += float(parts[key].data)
            used += 1
        train_means = {k: v / max(1, used) for k, v in sums.items()}
        valid_means = eval_split(valid_arrays) if valid_arrays else train_means
        entry = {
            "epoch": epoch,
            "space": train_means["space"],
            "class": train_means["class"],
            "total": train_means["total"],
            "valid_total": valid_means["total"],
            "wall_time": time.perf_counter() - started,
        }
        history.append(entry)
        if log is not None:
            log(entry)
        if valid_means["total"] < best_valid:
            best_valid = valid_means["total"]
            best_state = params.state()
            best_epoch = epoch

    best_params = ParamStore(seed=0)
    best_params.load_state(best_state)
    bundle = ModelBundle(best_params, vocab, class_vocab, gnn_config, config,
                         dict(rare_type_counts(train_graphs)))
    return TrainResult(bundle, history, best_epoch)


# -- type map construction --------------------------------------------------------


def build_map(
    bundle: ModelBundle, graphs: Sequence[CodeGraph]
) -> tuple[TypeMap, list[tuple[str, int]]]:
    """One marker per annotated symbol; keys identify each marker's origin."""
    tmap = TypeMap(bundle.gnn_config.dim)
    keys: list[tuple[str, int]] = []
    for graph in graphs:
        if not graph.symbols:
            continue
        embeddings = bundle.embed_graph(graph)
        for row, sym in enumerate(graph.symbols):
            if sym.annotation is None:
                continue
            tmap.add_binding(embeddings[row], sym.annotation, "corpus")
            keys.append((graph.file_id, sym.node_index))
    return tmap, keys


# -- evaluation ---------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    kind: str
    truth: str
    prediction: str
    confidence: float
    exact: bool
    up_to_parametric: bool
    neutral: bool
    rare: bool


def rare_type_counts(train_graphs: Iterable[CodeGraph]) -> Counter:
    """Annotation counts per normalized type, from the training split only."""
    counts: Counter = Counter()
    for g in train_graphs:
        for sym in g.symbols:
            if sym.annotation is not None:
                counts[normalize_type(sym.annotation).render()] += 1
    return counts


def corpus_lattice(graph_sets: Sequence[Sequence[CodeGraph]],
                   extra_types: Iterable[TypeExpr] = ()) -> TypeLattice:
    types = {normalize_type(t) for t in extra_types}
    for graphs in graph_sets:
        for g in graphs:
            for sym in g.symbols:
                if sym.annotation is not None:
                    types.add(normalize_type(sym.annotation))
    return build_type_lattice(types)


def evaluate(
    bundle: ModelBundle,
    tmap: TypeMap,
    test_graphs: Sequence[CodeGraph],
    lattice: TypeLattice,
    train_counts: Counter,
    pred_config: PredictionConfig = PredictionConfig(),
    map_keys: Optional[list[tuple[str, int]]] = None,
    exclude_self: bool = False,
) -> list[EvalRecord]:
    """Score the top prediction of every annotated test symbol.

    ``exclude_self`` removes the marker originating from the queried
    symbol itself (leave-one-out for training-split evaluation); it
    requires the ``map_keys`` returned by build_map.
    """
    key_to_marker: dict[tuple[str, int], int] = {}
    if exclude_self:
        if map_keys is None:
            raise ValueError("exclude_self requires map_keys")
        key_to_marker = {key: i for i, key in enumerate(map_keys)}
    records: list[EvalRecord] = []
    for graph in test_graphs:
        embeddings = bundle.embed_graph(graph)
        for row, sym in enumerate(graph.symbols):
            if sym.annotation is None:
                continue
            exclude: Optional[set[int]] = None
            if exclude_self:
                marker = key_to_marker.get((graph.file_id, sym.node_index))
                if marker is not None:
                    exclude = {marker}
            candidates = tmap.predict(embeddings[row], pred_config, exclude=exclude)
            pred_type, confidence = candidates[0]
            truth = normalize_type(sym.annotation)
            pred = normalize_type(pred_type)
            exact = pred == truth
            up_to = erase_type_parameters(pred) == erase_type_parameters(truth)
            neutral = check_neutral(pred, truth, lattice)
            rare = train_counts.get(truth.render(), 0) < RARE_CUTOFF
            records.append(EvalRecord(
                kind=sym.kind,
                truth=truth.render(),
                prediction=pred.render(),
                confidence=float(confidence),
                exact=exact,
                up_to_parametric=up_to,
                neutral=neutral,
                rare=rare,
            ))
    return records


def _aggregate(records: Sequence[EvalRecord]) -> dict:
    n = len(records)
    if n == 0:
        return {"count": 0}
    return {
        "count": n,
        "exact": sum(r.exact for r in records) / n,
        "up_to_parametric": sum(r.up_to_parametric for r in records) / n,
        "neutral": sum(r.neutral for r in records) / n,
    }


def summarize(records: Sequence[EvalRecord]) -> dict:
    """Aggregate metrics overall, by rarity, and by symbol kind."""
    return {
        "overall": _aggregate(records),
        "by_rarity": {
            "common": _aggregate([r for r in records if not r.rare]),
            "rare": _aggregate([r for r in records if r.rare]),
        },
        "by_kind": {
            kind: _aggregate([r for r in records if r.kind == kind])
            for kind in ("variable", "parameter", "return")
        },
    }


def pr_curve(records: Sequence[EvalRecord],
             thresholds: Sequence[float]) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) points; thresholds with no emitted
    prediction are omitted (their precision is undefined)."""
    points: list[tuple[float, float, float]] = []
    total = len(records)
    for threshold in sorted(thresholds):
        emitted = [r for r in records if r.confidence >= threshold]
        if not emitted or total == 0:
            continue
        recall = len(emitted) / total
        precision = sum(r.neutral for r in emitted) / len(emitted)
        points.append((threshold, recall, precision))
    return points


def save_report(out_prefix: str, records: Sequence[EvalRecord],
                thresholds: Sequence[float]) -> tuple[str, str]:
    """Write <prefix>.json metrics and <prefix>.pr.csv curve points."""
    report_path = f"{out_prefix}.json"
    csv_path = f"{out_prefix}.pr.csv"
    report = summarize(records)
    report["records"] = [dataclasses.asdict(r) for r in records]
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("threshold,recall,precision\n")
        for threshold, recall, precision in pr_curve(records, thresholds):
            fh.write(f"{threshold:.6g},{recall:.10g},{precision:.10g}\n")
    return report_path, csv_path
