"""Command-line interface: extract, split, train, index, predict, eval, serve.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
Config files are flat key=value text; keys mirror the training and model
options (dim, steps, margin, lambda, batch_symbols, epochs, seed,
learning_rate, min_class_count, min_subtoken_count, vocab_cap,
train_corpus, valid_corpus, output).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .codegraph import EDGE_LABELS, GraphFormatError, read_corpus, write_corpus
from .extract import ExtractError, ExtractOptions, extract_file
from .gnn import GnnConfig
from .harness import (
    DivergenceError,
    ModelBundle,
    build_map,
    corpus_lattice,
    evaluate,
    extract_directory,
    save_report,
    split_corpus,
    train,
)
from .losses import LOSS_KINDS, TrainConfig
from .typemap import EmptyMapError, MapFormatError, PredictionConfig, load_map, save_map

__all__ = ["main", "load_config"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3

DEFAULT_THRESHOLDS = [round(0.05 * i, 2) for i in range(20)] + [0.999]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 1, not 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class DataError(Exception):
    pass


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def load_config(path: str) -> dict:
    """Flat key=value text; '#' starts a comment."""
    config: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = _coerce(value.strip())
    return config


def _read_corpus_file(path: str):
    try:
        return list(read_corpus(path))
    except (OSError, GraphFormatError) as exc:
        raise DataError(str(exc)) from None


def _corpus_args(values: list[str]) -> list[str]:
    paths: list[str] = []
    for value in values:
        paths.extend(p for p in value.replace("+", ",").split(",") if p)
    return paths


def _gnn_config_from(config: dict) -> GnnConfig:
    active = config.get("active_edges")
    edges = tuple(active.split(",")) if isinstance(active, str) else EDGE_LABELS
    return GnnConfig(
        dim=int(config.get("dim", 64)),
        steps=int(config.get("steps", 8)),
        active_edges=edges,
        use_inverse_edges=bool(config.get("use_inverse_edges", True)),
    )


def _train_config_from(config: dict, loss: str, seed: Optional[int]) -> TrainConfig:
    return TrainConfig(
        margin=float(config.get("margin", 2.0)),
        lambda_weight=float(config.get("lambda", 1.0)),
        batch_symbols=int(config.get("batch_symbols", 32)),
        epochs=int(config.get("epochs", 100)),
        seed=int(config.get("seed", 0)) if seed is None else seed,
        learning_rate=float(config.get("learning_rate", 1e-3)),
        min_class_count=int(config.get("min_class_count", 10)),
        loss=loss,
    )


def cmd_extract(args) -> int:
    options = ExtractOptions(
        active_edges=frozenset(set(EDGE_LABELS) - set(args.no_edge)),
        max_nodes=args.max_nodes,
    )
    graphs, diagnostics = extract_directory(args.directory, options)
    for note in diagnostics:
        print(f"skip: {note}", file=sys.stderr)
    if not graphs:
        raise DataError(f"no extractable Python files under {args.directory}")
    count = write_corpus(graphs, args.output)
    print(f"extracted {count} graphs -> {args.output}")
    return EXIT_OK


def cmd_split(args) -> int:
    graphs = _read_corpus_file(args.corpus)
    if not graphs:
        raise DataError(f"{args.corpus}: empty corpus")
    parts = split_corpus(graphs, args.seed)
    base = args.corpus[:-6] if args.corpus.endswith(".jsonl") else args.corpus
    for name, part in zip(("train", "valid", "test"), parts):
        path = f"{base}.{name}.jsonl"
        write_corpus(part, path)
        print(f"{path}: {len(part)} graphs")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    train_path = config.get("train_corpus")
    if not train_path:
        raise DataError(f"{args.config}: missing train_corpus")
    train_graphs = _read_corpus_file(str(train_path))
    valid_graphs = (
        _read_corpus_file(str(config["valid_corpus"]))
        if config.get("valid_corpus") else []
    )
    if not train_graphs:
        raise DataError("training corpus is empty")
    gnn_config = _gnn_config_from(config)
    train_config = _train_config_from(config, args.loss, args.seed)
    result = train(
        train_graphs,
        valid_graphs,
        gnn_config,
        train_config,
        log=lambda entry: print(json.dumps(entry), flush=True),
        min_subtoken_count=int(config.get("min_subtoken_count", 2)),
        vocab_cap=int(config.get("vocab_cap", 10_000)),
    )
    out = args.output or str(config.get("output", "model.ckpt"))
    result.bundle.save(out)
    print(f"saved checkpoint (best epoch {result.best_epoch}) -> {out}")
    return EXIT_OK


def cmd_index(args) -> int:
    bundle = _load_bundle(args.model)
    graphs = []
    for path in _corpus_args(args.corpus):
        graphs.extend(_read_corpus_file(path))
    if not graphs:
        raise DataError("no graphs to index")
    tmap, _ = build_map(bundle, graphs)
    save_map(args.output, tmap)
    print(f"indexed {len(tmap)} markers -> {args.output}")
    return EXIT_OK


def _load_bundle(path: str) -> ModelBundle:
    try:
        return ModelBundle.load(path)
    except Exception as exc:  # anything unloadable is a data problem
        raise DataError(f"cannot load model {path}: {exc}") from None


def cmd_predict(args) -> int:
    bundle = _load_bundle(args.model)
    try:
        tmap = load_map(args.map)
    except (OSError, MapFormatError) as exc:
        raise DataError(str(exc)) from None
    try:
        source = Path(args.file).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(str(exc)) from None
    try:
        result = extract_file(source, file_id=args.file)
    except ExtractError as exc:
        raise DataError(str(exc)) from None
    embeddings = bundle.embed_graph(result.graph)
    config = PredictionConfig(k=args.k, p=args.p)
    for row, sym in enumerate(result.graph.symbols):
        if sym.annotation is not None and not args.all:
            continue
        try:
            candidates = tmap.predict(embeddings[row], config)
        except EmptyMapError as exc:
            raise DataError(str(exc)) from None
        print(json.dumps({
            "symbol": sym.name,
            "kind": sym.kind,
            "candidates": [
                {"type": t.render(), "probability": round(p, 6)}
                for t, p in candidates[:args.top]
            ],
        }))
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = _load_bundle(args.model)
    try:
        tmap = load_map(args.map)
    except (OSError, MapFormatError) as exc:
        raise DataError(str(exc)) from None
    test_graphs = _read_corpus_file(args.test)
    if len(tmap) == 0:
        raise DataError("type map is empty; run `index` first")
    lattice = corpus_lattice([test_graphs], extra_types=[m.type for m in tmap.markers])
    counts = bundle.train_type_counts
    records = evaluate(bundle, tmap, test_graphs, lattice, counts,
                       PredictionConfig(k=args.k, p=args.p))
    if not records:
        raise DataError("test corpus has no annotated symbols")
    jpath, cpath = save_report(args.output, records, DEFAULT_THRESHOLDS)
    print(f"wrote {jpath} and {cpath}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import create_app

    try:
        host, port_text = args.addr.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        raise DataError(f"invalid address {args.addr!r}; expected host:port") from None
    bundle = _load_bundle(args.model)
    try:
        tmap = load_map(args.map)
    except (OSError, MapFormatError) as exc:
        raise DataError(str(exc)) from None
    ui_dir = args.ui
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(bundle, tmap, source_dir=args.src, checker_command=args.checker,
                     ui_dir=ui_dir)
    import uvicorn

    uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="warning")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hintspace",
                     description="Neural type-hint suggestion for Python code")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="turn a source tree into a graph corpus")
    p.add_argument("directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--no-edge", action="append", default=[], choices=EDGE_LABELS,
                   help="deactivate an edge label (repeatable)")
    p.add_argument("--max-nodes", type=int, default=50_000)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="70/10/20 file-level split with dedup")
    p.add_argument("corpus")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the encoder")
    p.add_argument("--config", required=True)
    p.add_argument("--loss", choices=LOSS_KINDS, default="combined")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="build the type map from annotated graphs")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", action="append", required=True,
                   help="corpus file(s); repeatable, also a+b or a,b")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("predict", help="suggest types for one source file")
    p.add_argument("--model", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("file")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--all", action="store_true",
                   help="include already-annotated symbols")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the review service")
    p.add_argument("--model", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--addr", default="127.0.0.1:8421")
    p.add_argument("--src", default=None, help="directory of source files to review")
    p.add_argument("--checker", default=None,
                   help="external checker command consulted on accept")
    p.add_argument("--ui", default=None,
                   help="static UI directory (default: frontend/dist when present)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
