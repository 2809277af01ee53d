"""Training objectives over symbol embeddings, and minibatch grouping.

Three trainable objectives: a softmax classification loss over erased
types, a batch similarity loss over the embedding space, and their
weighted combination (the full objective, with the classifier reading a
linear projection of the embedding). A classic three-point triplet loss
is provided as the primitive the batch loss generalizes.

Sign conventions: the prose contract for the triplet loss is that the
positive must sit closer than the negative by at least the margin, so
the hinge argument is (d_pos - d_neg) and the loss saturates at zero
once the negative is farther than the positive by the margin. The batch
similarity loss is mean-pull minus mean-push and may be negative on
nearly separated arrangements; a margin-satisfied batch scores exactly
zero.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .codegraph import CodeGraph
from .gnn import GraphArrays
from .tensor import (
    ParamStore,
    Tensor,
    add,
    gather_elements,
    gather_rows,
    hinge,
    l1_distance,
    matmul,
    mul,
    pairwise_l1,
    scale,
    softmax_cross_entropy,
    sub,
    sum_all,
    tensor,
)
from .typeexpr import TypeExpr, erase_type_parameters, normalize_type

__all__ = [
    "LOSS_KINDS",
    "ClassVocab",
    "TrainConfig",
    "classification_loss",
    "triplet_loss",
    "space_loss",
    "combined_loss",
    "loss_components",
    "make_batches",
    "type_key",
]

LOSS_KINDS = ("class", "space", "combined")

UNK_CLASS = "<unk-type>"


def type_key(annotation: Optional[TypeExpr]) -> Optional[str]:
    """Normalized full-type render used for batch positive/negative pairing."""
    if annotation is None:
        return None
    return normalize_type(annotation).render()


class ClassVocab:
    """Erased-type -> class index, with an unknown class at index 0."""

    def __init__(self, types: Sequence[str]) -> None:
        self.types = [UNK_CLASS] + [t for t in types if t != UNK_CLASS]
        self.index = {t: i for i, t in enumerate(self.types)}

    def __len__(self) -> int:
        return len(self.types)

    def lookup(self, annotation: Optional[TypeExpr]) -> int:
        if annotation is None:
            return 0
        erased = erase_type_parameters(normalize_type(annotation)).render()
        return self.index.get(erased, 0)

    @classmethod
    def build(cls, graphs: Iterable[CodeGraph], min_count: int = 10) -> "ClassVocab":
        counts: Counter[str] = Counter()
        for g in graphs:
            for sym in g.symbols:
                if sym.annotation is not None:
                    counts[erase_type_parameters(normalize_type(sym.annotation)).render()] += 1
        kept = [(t, c) for t, c in counts.items() if c >= min_count]
        kept.sort(key=lambda item: (-item[1], item[0]))
        return cls([t for t, _ in kept])


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 2.0
    lambda_weight: float = 1.0
    batch_symbols: int = 32
    epochs: int = 100
    seed: int = 0
    learning_rate: float = 1e-3
    min_class_count: int = 10
    loss: str = "combined"

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.lambda_weight < 0:
            raise ValueError("lambda weight must be non-negative")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")


def classification_loss(embeddings: Tensor, classes: np.ndarray,
                        params: ParamStore) -> Tensor:
    """Mean negative log softmax of each row's target class."""
    logits = add(matmul(embeddings, params["cls/proto"], transpose_b=True),
                 params["cls/bias"])
    losses = softmax_cross_entropy(logits, classes)
    return scale(sum_all(losses), 1.0 / max(1, embeddings.shape[0]))


def triplet_loss(r_s: Tensor, r_pos: Tensor, r_neg: Tensor, margin: float) -> Tensor:
    """Hinge on (d_pos - d_neg): zero once the negative is margin-far."""
    d_pos = l1_distance(r_s, r_pos)
    d_neg = l1_distance(r_s, r_neg)
    return hinge(sub(d_pos, d_neg), margin)


def space_loss(embeddings: Tensor, keys: Sequence[Optional[str]],
               margin: float) -> Tensor:
    """Batch similarity loss: mean pull on straggling same-typed symbols
    minus mean push on intruding differently-typed ones, averaged over
    the annotated symbols of the batch.

    A symbol with no same-typed or no differently-typed peer contributes
    zero. A symbol is not its own peer.
    """
    ann = [i for i, k in enumerate(keys) if k is not None]
    if not ann:
        return tensor(0.0)
    rows = gather_rows(embeddings, np.asarray(ann, dtype=np.int64))
    dmat = pairwise_l1(rows)
    dist = dmat.data
    local_keys = [keys[i] for i in ann]
    n = len(ann)

    sel_rows: list[int] = []
    sel_cols: list[int] = []
    weights: list[float] = []
    for s in range(n):
        pos = [p for p in range(n) if p != s and local_keys[p] == local_keys[s]]
        neg = [q for q in range(n) if local_keys[q] != local_keys[s]]
        if not pos or not neg:
            continue
        d_pos_max = max(dist[s, p] for p in pos)
        d_neg_min = min(dist[s, q] for q in neg)
        pull = [p for p in pos if dist[s, p] > d_neg_min - margin]
        push = [q for q in neg if dist[s, q] < d_pos_max + margin]
        for p in pull:
            sel_rows.append(s)
            sel_cols.append(p)
            weights.append(1.0 / (len(pull) * n))
        for q in push:
            sel_rows.append(s)
            sel_cols.append(q)
            weights.append(-1.0 / (len(push) * n))
    if not sel_rows:
        return tensor(0.0)
    gathered = gather_elements(dmat, np.asarray(sel_rows), np.asarray(sel_cols))
    return sum_all(mul(gathered, tensor(np.asarray(weights))))


def loss_components(embeddings: Tensor, annotations: Sequence[Optional[TypeExpr]],
                    params: ParamStore, config: TrainConfig,
                    class_vocab: ClassVocab) -> dict[str, Tensor]:
    """The active loss plus its two components, on one tape.

    ``class``: classification on the raw embeddings. ``space``: batch
    similarity. ``combined``: space plus lambda times classification of
    the linearly projected embeddings against erased types.
    """
    keys = [type_key(a) for a in annotations]
    ann_idx = np.asarray([i for i, k in enumerate(keys) if k is not None], dtype=np.int64)

    zero = tensor(0.0)
    result: dict[str, Tensor] = {"space": zero, "class": zero}
    if config.loss in ("space", "combined"):
        result["space"] = space_loss(embeddings, keys, config.margin)
    if config.loss in ("class", "combined") and ann_idx.size:
        ann_rows = gather_rows(embeddings, ann_idx)
        targets = np.asarray([class_vocab.lookup(annotations[i]) for i in ann_idx],
                             dtype=np.int64)
        if config.loss == "combined":
            ann_rows = matmul(ann_rows, params["proj/W"])
        result["class"] = classification_loss(ann_rows, targets, params)

    if config.loss == "class":
        result["total"] = result["class"]
    elif config.loss == "space":
        result["total"] = result["space"]
    else:
        result["total"] = add(result["space"], scale(result["class"], config.lambda_weight))
    return result


def combined_loss(embeddings: Tensor, annotations: Sequence[Optional[TypeExpr]],
                  params: ParamStore, config: TrainConfig,
                  class_vocab: ClassVocab) -> Tensor:
    """Space term plus lambda-weighted erased-type classification."""
    cfg = config if config.loss == "combined" else dataclasses.replace(config, loss="combined")
    return loss_components(embeddings, annotations, params, cfg, class_vocab)["total"]


def annotated_count(arrays: GraphArrays) -> int:
    return sum(1 for a in arrays.annotations if a is not None)


def make_batches(items: Sequence[GraphArrays], batch_symbols: int, seed: int,
                 epoch: int = 0) -> list[list[GraphArrays]]:
    """Shuffle whole graphs and pack them until the symbol budget fills.

    Deterministic for a (seed, epoch) pair; every graph lands in exactly
    one batch, so annotated-symbol counts partition the corpus.
    """
    rng = np.random.default_rng((seed, epoch))
    order = rng.permutation(len(items))
    batches: list[list[GraphArrays]] = []
    current: list[GraphArrays] = []
    budget = 0
    for idx in order:
        g = items[int(idx)]
        current.append(g)
        budget += annotated_count(g)
        if budget >= batch_symbols:
            batches.append(current)
            current = []
            budget = 0
    if current:
        batches.append(current)
    return batches
