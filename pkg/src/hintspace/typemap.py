"""The adaptive type map: embedding markers, L1 search, kNN prediction.

Markers pair a D-dimensional embedding with a normalized type. Queries
retrieve the k nearest markers by Manhattan distance and turn them into
a probability distribution with inverse-distance weighting d**(-p)
(p=0 degenerates to a uniform vote over the neighbours). New bindings
append without retraining anything.

Search is an exact scan up to 4096 markers; beyond that a forest of
randomized coordinate-split trees narrows candidates, which are then
re-ranked exactly. Exactness is only guaranteed in the scan regime.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .typeexpr import ANY, TypeExpr, normalize_type, parse_type

__all__ = ["PredictionConfig", "Marker", "TypeMap", "EmptyMapError", "save_map", "load_map",
           "EXACT_LIMIT", "PROVENANCES"]

PROVENANCES = ("corpus", "accepted", "manual")
EXACT_LIMIT = 4096
_MIN_DISTANCE = 1e-9  # inverse-distance weighting is singular at zero


class EmptyMapError(Exception):
    """Prediction was requested from a map with no markers."""


@dataclass(frozen=True)
class PredictionConfig:
    k: int = 10
    p: float = 2.0
    candidate_cap: int = 16

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.p < 0:
            raise ValueError("p must be non-negative")


@dataclass(frozen=True)
class Marker:
    vector: np.ndarray
    type: TypeExpr
    provenance: str

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")


class _Forest:
    """Randomized coordinate-split trees with best-first candidate search."""

    def __init__(self, matrix: np.ndarray, num_trees: int = 10, leaf_size: int = 32,
                 seed: int = 0) -> None:
        self.matrix = matrix
        self.leaf_size = leaf_size
        rng = np.random.default_rng(seed)
        ids = np.arange(matrix.shape[0])
        self.trees = [self._build(ids, rng) for _ in range(num_trees)]

    def _build(self, ids: np.ndarray, rng: np.random.Generator):
        if len(ids) <= self.leaf_size:
            return ("leaf", ids)
        dim = int(rng.integers(0, self.matrix.shape[1]))
        values = self.matrix[ids, dim]
        threshold = float(np.median(values))
        left = ids[values <= threshold]
        right = ids[values > threshold]
        if len(left) == 0 or len(right) == 0:
            return ("leaf", ids)
        return ("node", dim, threshold, self._build(left, rng), self._build(right, rng))

    def candidates(self, query: np.ndarray, want: int) -> np.ndarray:
        heap: list[tuple[float, int, tuple]] = []
        tie = 0
        for tree in self.trees:
            heapq.heappush(heap, (0.0, tie, tree))
            tie += 1
        seen: set[int] = set()
        out: list[int] = []
        while heap and len(out) < want:
            margin, _, node = heapq.heappop(heap)
            while node[0] == "node":
                _, dim, threshold, left, right = node
                delta = query[dim] - threshold
                near, far = (left, right) if delta <= 0 else (right, left)
                heapq.heappush(heap, (margin + abs(delta), tie, far))
                tie += 1
                node = near
            for i in node[1]:
                if int(i) not in seen:
                    seen.add(int(i))
                    out.append(int(i))
        return np.asarray(out, dtype=np.int64)


class TypeMap:
    """Append-only collection of (embedding, type) markers with L1 search."""

    def __init__(self, dim: int) -> None:
        self.dim = dim
        self._vectors: list[np.ndarray] = []
        self._types: list[TypeExpr] = []
        self._provenance: list[str] = []
        self._matrix: Optional[np.ndarray] = None
        self._forest: Optional[_Forest] = None

    def __len__(self) -> int:
        return len(self._vectors)

    @property
    def markers(self) -> list[Marker]:
        return [Marker(v, t, p) for v, t, p in
                zip(self._vectors, self._types, self._provenance)]

    def marker_type(self, index: int) -> TypeExpr:
        return self._types[index]

    def add_binding(self, vector: np.ndarray, t: TypeExpr,
                    provenance: str = "manual") -> int:
        """Append one marker; no retraining, the index refreshes lazily."""
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vec.shape != (self.dim,):
            from .tensor import ContractViolation

            raise ContractViolation(
                f"marker dimension {vec.shape[0]} does not match map dimension {self.dim}")
        norm = normalize_type(t)
        if norm == ANY:
            raise ValueError("markers for the top type are never created")
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        self._vectors.append(vec)
        self._types.append(norm)
        self._provenance.append(provenance)
        self._matrix = None
        self._forest = None
        return len(self._vectors) - 1

    def clone(self) -> "TypeMap":
        dup = TypeMap(self.dim)
        dup._vectors = list(self._vectors)
        dup._types = list(self._types)
        dup._provenance = list(self._provenance)
        return dup

    def _ensure_matrix(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self._vectors):
            self._matrix = np.vstack(self._vectors) if self._vectors else \
                np.zeros((0, self.dim))
        return self._matrix

    def nearest(self, query: np.ndarray, k: int,
                exclude: Optional[set[int]] = None) -> list[tuple[int, float]]:
        """k nearest (marker index, L1 distance); ties by insertion order."""
        if not self._vectors:
            raise EmptyMapError("the type map holds no markers")
        q = np.asarray(query, dtype=np.float64).reshape(-1)
        matrix = self._ensure_matrix()
        if len(self._vectors) <= EXACT_LIMIT:
            ids = np.arange(len(self._vectors))
        else:
            if self._forest is None:
                self._forest = _Forest(matrix, seed=len(self._vectors))
            want = max(k * 16, 256)
            ids = self._forest.candidates(q, want)
        if exclude:
            ids = np.asarray([i for i in ids if int(i) not in exclude], dtype=np.int64)
            if ids.size == 0:
                raise EmptyMapError("no markers left after exclusion")
        dists = np.abs(matrix[ids] - q).sum(axis=1)
        order = sorted(range(len(ids)), key=lambda j: (dists[j], ids[j]))[:k]
        return [(int(ids[j]), float(dists[j])) for j in order]

    def predict(self, query: np.ndarray, config: PredictionConfig = PredictionConfig(),
                exclude: Optional[set[int]] = None) -> list[tuple[TypeExpr, float]]:
        """Ranked (type, probability) candidates from the k nearest markers."""
        neighbours = self.nearest(query, config.k, exclude)
        weights: dict[str, float] = {}
        reps: dict[str, TypeExpr] = {}
        for idx, dist in neighbours:
            d = max(dist, _MIN_DISTANCE)
            t = self._types[idx]
            key = t.render()
            weights[key] = weights.get(key, 0.0) + d ** (-config.p)
            reps.setdefault(key, t)
        z = sum(weights.values())
        ranked = sorted(weights.items(), key=lambda item: (-item[1], item[0]))
        return [(reps[key], w / z) for key, w in ranked[:config.candidate_cap]]


# -- persistence ---------------------------------------------------------------

_MAGIC = b"HSTM"
_VERSION = 1


def save_map(path: str, tmap: TypeMap) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, tmap.dim, len(tmap)))
        for vec, t, prov in zip(tmap._vectors, tmap._types, tmap._provenance):
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())
            rendered = t.render().encode("utf-8")
            fh.write(struct.pack("<H", len(rendered)))
            fh.write(rendered)
            fh.write(struct.pack("<B", PROVENANCES.index(prov)))


class MapFormatError(Exception):
    """Map file is corrupt, truncated, or has an unsupported version."""


def load_map(path: str) -> TypeMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise MapFormatError(f"{path}: not a type map file")
    try:
        version, dim, count = struct.unpack_from("<III", blob, 4)
        if version != _VERSION:
            raise MapFormatError(f"{path}: unsupported map version {version}")
        tmap = TypeMap(dim)
        off = 16
        for _ in range(count):
            end = off + 4 * dim
            if end > len(blob):
                raise MapFormatError(f"{path}: truncated vector record")
            vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).astype(np.float64)
            off = end
            (tlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            rendered = blob[off:off + tlen].decode("utf-8")
            off += tlen
            (prov,) = struct.unpack_from("<B", blob, off)
            off += 1
            tmap._vectors.append(vec)
            tmap._types.append(parse_type(rendered))
            tmap._provenance.append(PROVENANCES[prov])
    except (struct.error, IndexError) as exc:
        raise MapFormatError(f"{path}: truncated or corrupt map file: {exc}") from None
    if off != len(blob):
        raise MapFormatError(f"{path}: trailing bytes after {count} records")
    return tmap
