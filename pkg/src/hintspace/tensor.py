"""Dense tensors with recorded reverse-mode gradients.

A deliberately small primitive set: exactly the operations the encoder
and losses need, each with a registered backward rule. Values are
float64 ndarrays; the recorded graph is the tape, and ``backward`` walks
it once per loss. Checkpoints store tensors as little-endian float32.

Subgradient conventions: |x| has gradient 0 at 0; the hinge passes
gradient only where its argument is strictly positive; segment_max
routes gradient to the lowest-index row among ties.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "ContractViolation",
    "Tensor",
    "ParamStore",
    "Adam",
    "tensor",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "hinge",
    "sum_all",
    "gather_rows",
    "concat_rows",
    "segment_sum",
    "segment_max",
    "l1_distance",
    "pairwise_l1",
    "gather_elements",
    "softmax_cross_entropy",
    "gru_cell",
    "save_checkpoint",
    "load_checkpoint",
]

debug_checks = False  # verify finiteness after every forward op


class ContractViolation(Exception):
    """An operation was called outside its contract (shapes, reuse)."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ContractViolation(message)


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "_done")

    def __init__(self, data: np.ndarray,
                 parents: tuple["Tensor", ...] = (),
                 backward_fn: Optional[Callable[[np.ndarray], None]] = None) -> None:
        self.data = data
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward_fn
        self._done = False
        if debug_checks and not np.all(np.isfinite(data)):
            raise ContractViolation("non-finite values produced by a forward op")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def tensor(data, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype))


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor participating in ``loss``."""
    _require(loss.data.shape == (), f"backward expects a scalar, got shape {loss.shape}")
    _require(not loss._done, "backward called twice on the same loss without reset")
    loss._done = True

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.accumulate(np.ones((), dtype=loss.data.dtype))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- arithmetic -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    bd = b.data.T if transpose_b else b.data
    _require(a.data.ndim == 2 and bd.ndim == 2 and a.shape[1] == bd.shape[0],
             f"matmul shape mismatch: {a.shape} @ {b.shape} (transpose_b={transpose_b})")
    out_data = a.data @ bd

    def back(g: np.ndarray) -> None:
        if transpose_b:
            a.accumulate(g @ b.data)
            b.accumulate(g.T @ a.data)
        else:
            a.accumulate(g @ b.data.T)
            b.accumulate(a.data.T @ g)

    return Tensor(out_data, (a, b), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        def back(g: np.ndarray) -> None:
            a.accumulate(g)
            b.accumulate(g)
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        # bias row added to each row of a matrix
        def back(g: np.ndarray) -> None:
            a.accumulate(g)
            b.accumulate(g.sum(axis=0))
    else:
        raise ContractViolation(f"add shape mismatch: {a.shape} + {b.shape}")
    return Tensor(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"sub shape mismatch: {a.shape} - {b.shape}")

    def back(g: np.ndarray) -> None:
        a.accumulate(g)
        b.accumulate(-g)

    return Tensor(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; also supports a (N,D) * (N,1) column broadcast."""
    column = (a.data.ndim == 2 and b.data.ndim == 2
              and b.shape == (a.shape[0], 1))
    _require(a.shape == b.shape or column,
             f"mul shape mismatch: {a.shape} * {b.shape}")

    def back(g: np.ndarray) -> None:
        a.accumulate(g * b.data)
        if column:
            b.accumulate((g * a.data).sum(axis=1, keepdims=True))
        else:
            b.accumulate(g * a.data)

    return Tensor(a.data * b.data, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    def back(g: np.ndarray) -> None:
        a.accumulate(g * c)

    return Tensor(a.data * c, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def back(g: np.ndarray) -> None:
        a.accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, (a,), back)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def back(g: np.ndarray) -> None:
        a.accumulate(g * (1.0 - out_data * out_data))

    return Tensor(out_data, (a,), back)


def hinge(a: Tensor, margin: float) -> Tensor:
    """max(a + margin, 0), elementwise; zero subgradient at the kink."""
    shifted = a.data + margin
    mask = shifted > 0

    def back(g: np.ndarray) -> None:
        a.accumulate(g * mask)

    return Tensor(np.where(mask, shifted, 0.0), (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g: np.ndarray) -> None:
        a.accumulate(np.full_like(a.data, float(g)))

    return Tensor(np.asarray(a.data.sum()), (a,), back)


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    _require(a.data.ndim == 2, f"gather_rows expects a matrix, got {a.shape}")
    _require(idx.size == 0 or (idx.min() >= 0 and idx.max() < a.shape[0]),
             "gather_rows index out of range")

    def back(g: np.ndarray) -> None:
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, idx, g)

    return Tensor(a.data[idx], (a,), back)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    _require(len(parts) > 0, "concat_rows needs at least one input")
    width = parts[0].shape[1]
    _require(all(p.data.ndim == 2 and p.shape[1] == width for p in parts),
             "concat_rows width mismatch")
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            p.accumulate(g[lo:hi])

    return Tensor(np.concatenate([p.data for p in parts], axis=0), tuple(parts), back)


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    seg = np.asarray(segment_ids, dtype=np.int64)
    _require(a.data.ndim == 2 and seg.shape == (a.shape[0],),
             f"segment_sum shape mismatch: {a.shape} with {seg.shape} ids")
    out_data = np.zeros((num_segments, a.shape[1]), dtype=a.data.dtype)
    np.add.at(out_data, seg, a.data)

    def back(g: np.ndarray) -> None:
        a.accumulate(g[seg])

    return Tensor(out_data, (a,), back)


def segment_max(a: Tensor, segment_ids: np.ndarray, num_segments: int,
                default: float = 0.0) -> Tensor:
    """Elementwise maximum over grouped rows; empty segments get ``default``.

    Gradient flows to the argmax element only; ties resolve to the
    lowest row index. The default fill carries no gradient.
    """
    seg = np.asarray(segment_ids, dtype=np.int64)
    _require(a.data.ndim == 2 and seg.shape == (a.shape[0],),
             f"segment_max shape mismatch: {a.shape} with {seg.shape} ids")
    rows, dim = a.shape
    raw = np.full((num_segments, dim), -np.inf, dtype=a.data.dtype)
    if rows:
        np.maximum.at(raw, seg, a.data)
    counts = np.bincount(seg, minlength=num_segments)
    empty = counts == 0
    out_data = raw.copy()
    out_data[empty] = default

    winner = np.full((num_segments, dim), rows, dtype=np.int64)
    if rows:
        row_idx = np.broadcast_to(np.arange(rows)[:, None], (rows, dim))
        candidate = np.where(a.data == raw[seg], row_idx, rows)
        np.minimum.at(winner, seg, candidate)

    def back(g: np.ndarray) -> None:
        if not rows:
            return
        mask = winner[seg] == np.arange(rows)[:, None]
        a.accumulate(np.where(mask, g[seg], 0.0))

    return Tensor(out_data, (a,), back)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Manhattan distance between two vectors; subgradient 0 at ties."""
    _require(a.data.ndim == 1 and a.shape == b.shape,
             f"l1_distance expects equal-length vectors, got {a.shape} and {b.shape}")
    diff = a.data - b.data
    sign = np.sign(diff)

    def back(g: np.ndarray) -> None:
        a.accumulate(g * sign)
        b.accumulate(-g * sign)

    return Tensor(np.asarray(np.abs(diff).sum()), (a, b), back)


def pairwise_l1(x: Tensor) -> Tensor:
    """All-pairs Manhattan distances between the rows of ``x``."""
    _require(x.data.ndim == 2, f"pairwise_l1 expects a matrix, got {x.shape}")
    diff = x.data[:, None, :] - x.data[None, :, :]
    out_data = np.abs(diff).sum(axis=2)
    sign = np.sign(diff)

    def back(g: np.ndarray) -> None:
        x.accumulate(((g + g.T)[:, :, None] * sign).sum(axis=1))

    return Tensor(out_data, (x,), back)


def gather_elements(m: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    _require(m.data.ndim == 2 and r.shape == c.shape, "gather_elements index mismatch")

    def back(g: np.ndarray) -> None:
        if m.grad is None:
            m.grad = np.zeros_like(m.data)
        np.add.at(m.grad, (r, c), g)

    return Tensor(m.data[r, c], (m,), back)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-row -log softmax probability of the target class."""
    t = np.asarray(targets, dtype=np.int64)
    _require(logits.data.ndim == 2 and t.shape == (logits.shape[0],),
             f"softmax_cross_entropy shape mismatch: {logits.shape} with {t.shape} targets")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    exp = np.exp(z - zmax)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = (z - zmax) - np.log(denom)
    losses = -log_probs[np.arange(z.shape[0]), t]
    softmax = exp / denom

    def back(g: np.ndarray) -> None:
        d = softmax.copy()
        d[np.arange(z.shape[0]), t] -= 1.0
        logits.accumulate(d * g[:, None])

    return Tensor(losses, (logits,), back)


# -- parameters ---------------------------------------------------------------


class ParamStore:
    """Named learnable tensors; creation order fixes the initialization."""

    INIT_RANGE = 0.1

    def __init__(self, seed: int = 0) -> None:
        self._rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple[int, ...]) -> Tensor:
        _require(name not in self._params, f"duplicate parameter name {name!r}")
        data = self._rng.uniform(-self.INIT_RANGE, self.INIT_RANGE, size=shape)
        t = Tensor(np.asarray(data, dtype=np.float64))
        self._params[name] = t
        return t

    def set(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(data, dtype=np.float64))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.set(k, v)


class Adam:
    """Adam with global L2 gradient clipping."""

    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, clip_norm: float = 5.0) -> None:
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.store.items() if p.grad is not None}
        if not grads:
            return
        total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        factor = self.clip_norm / total if total > self.clip_norm else 1.0
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            g = g * factor
            m = self._m.setdefault(name, np.zeros_like(g))
            v = self._v.setdefault(name, np.zeros_like(g))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            self.store[name].data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- GRU -----------------------------------------------------------------------


def gru_cell(x: Tensor, h: Tensor, params: ParamStore, prefix: str = "gru") -> Tensor:
    """Standard gated recurrent unit on row vectors.

    z = sigmoid(x W_z + h U_z + b_z), r = sigmoid(x W_r + h U_r + b_r),
    cand = tanh(x W_h + (r*h) U_h + b_h), out = (1-z)*h + z*cand.
    """
    _require(x.shape == h.shape and x.data.ndim == 2,
             f"gru_cell expects matching (N, D) inputs, got {x.shape} and {h.shape}")
    z = sigmoid(add(add(matmul(x, params[f"{prefix}/W_z"]),
                        matmul(h, params[f"{prefix}/U_z"])),
                    params[f"{prefix}/b_z"]))
    r = sigmoid(add(add(matmul(x, params[f"{prefix}/W_r"]),
                        matmul(h, params[f"{prefix}/U_r"])),
                    params[f"{prefix}/b_r"]))
    cand = tanh(add(add(matmul(x, params[f"{prefix}/W_h"]),
                        matmul(mul(r, h), params[f"{prefix}/U_h"])),
                    params[f"{prefix}/b_h"]))
    ones = tensor(np.ones_like(z.data))
    return add(mul(sub(ones, z), h), mul(z, cand))


def add_gru_params(store: ParamStore, dim: int, prefix: str = "gru") -> None:
    for gate in ("z", "r", "h"):
        store.add(f"{prefix}/W_{gate}", (dim, dim))
        store.add(f"{prefix}/U_{gate}", (dim, dim))
        store.add(f"{prefix}/b_{gate}", (dim,))


# -- checkpoints -----------------------------------------------------------------

_MAGIC = b"HSCK"
_VERSION = 1


def save_checkpoint(path: str, params: dict[str, np.ndarray], dim: int,
                    vocab_size: int, meta: dict) -> None:
    """Versioned binary archive: header, metadata, per-tensor records."""
    meta_bytes = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, dim, vocab_size))
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        for name in sorted(params):
            data = np.ascontiguousarray(params[name], dtype="<f4")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], int, int, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ContractViolation(f"{path}: not a checkpoint file")
    version, dim, vocab_size = struct.unpack_from("<III", blob, 4)
    if version != _VERSION:
        raise ContractViolation(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<Q", blob, 16)
    off = 24
    meta = json.loads(blob[off:off + meta_len].decode("utf-8"))
    off += meta_len
    params: dict[str, np.ndarray] = {}
    while off < len(blob):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        params[name] = data.reshape(shape).astype(np.float64)
    return params, dim, vocab_size, meta
