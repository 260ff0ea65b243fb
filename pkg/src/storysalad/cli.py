"""Command-line pipelines: generate, hard-select, train, cluster, eval, analyze, heatmap, synth.

Every command writes ``<out>.manifest.json`` next to its main output. Exit codes: 0 on
success, 2 for usage or input errors, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("storysalad")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


# --- config files and manifests -------------------------------------------------------

def read_config_file(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes or underscores."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path} line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config_file(args.config)
    sub = _subparsers[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        if action.nargs == 0:  # store_true flags
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(value) if action.type else value
    sub.set_defaults(**defaults)
    # reparse so explicit flags override file values
    return parser.parse_args(argv)


def write_manifest(out: str | Path, args: argparse.Namespace, argv: list[str], started: float,
                   inputs: dict, outputs: dict, extra: dict | None = None) -> Path:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "seeds": {"seed": getattr(args, "seed", None)},
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": {k: str(v) for k, v in outputs.items() if v is not None},
        "version": __version__,
        "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} needs an explicit --seed")
    return args.seed


def _load_any_salads(path):
    from .saladgen import load_salads

    if not Path(path).exists():
        raise UsageError(f"no such salad file: {path}")
    return load_salads(path)


def _load_table(path):
    from .embedding import load_embeddings

    if not Path(path).exists():
        raise UsageError(f"no such embedding file: {path}")
    return load_embeddings(path)


def _pool_map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(x) for x in items]


# --- commands -------------------------------------------------------------------------

def cmd_generate(args, argv, started) -> int:
    from .corpus import load_corpus
    from .saladgen import PairingPolicy, generate_dataset, write_salads

    seed = _require_seed(args)
    if not Path(args.corpus).exists():
        raise UsageError(f"no such corpus: {args.corpus}")
    docs = load_corpus(args.corpus)
    words = [w.strip() for w in args.filter.split(",") if w.strip()] if args.filter else []
    policy = PairingPolicy(args.mode, words)
    salads = generate_dataset(docs, policy, args.n, seed, jobs=args.jobs)
    write_salads(salads, args.out)
    log.info("wrote %d salads to %s", len(salads), args.out)
    write_manifest(args.out, args, argv, started, {"corpus": args.corpus}, {"salads": args.out},
                   {"policy": policy.describe()})
    return EXIT_OK


def cmd_hard_select(args, argv, started) -> int:
    from .saladgen import select_hard

    salads = _load_any_salads(args.salads)
    table = _load_table(args.embeddings)
    chosen = select_hard(salads, table, args.k)
    with open(args.out, "w", encoding="utf-8") as fh:
        for salad, tsim in chosen:
            row = salad.to_json()
            row["tsim"] = tsim
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    log.info("kept %d of %d salads", len(chosen), len(salads))
    write_manifest(args.out, args, argv, started,
                   {"salads": args.salads, "embeddings": args.embeddings}, {"salads": args.out})
    return EXIT_OK


def _model_config(args):
    from .neural.config import ModelConfig

    return ModelConfig(
        embed_dim=args.embed_dim, lstm_hidden=args.hidden, lstm_layers=args.layers,
        cnn_filter_widths=tuple(int(w) for w in args.filter_widths.split(",")),
        cnn_filters_per_width=args.filters, dropout_rate=args.dropout,
        max_sentence_len=args.max_sentence_len, context_cap=args.context_cap,
        use_attention=args.attention, use_context=args.context, composition=args.composition,
        use_events=args.events, event_word_dim=args.event_word_dim, pretrained_events=args.pretrain)


def cmd_train(args, argv, started) -> int:
    from .neural.checkpoint import save_checkpoint
    from .neural.config import TrainConfig
    from .neural.train import pretrained_embedding, train, vocabulary_for

    seed = _require_seed(args)
    if args.pretrain and not args.events:
        raise UsageError("--pretrain applies to event models only (add --events)")
    salads = _load_any_salads(args.salads)
    if args.events and not all(s.is_event_salad for s in salads):
        raise UsageError("--events needs event-tuple salads")
    mc = _model_config(args)
    tc = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                     validation_fraction=args.validation_fraction,
                     stop_threshold=args.stop_threshold, patience=args.patience,
                     min_epochs=args.min_epochs, max_epochs=args.max_epochs,
                     pairs_per_salad=args.pairs_per_salad, seed=seed)
    vocab = vocabulary_for(salads, mc, args.vocab_limit)
    init = None
    if args.pretrain:
        from .events import PretrainConfig, encoder_init, pretrain_event_embeddings

        pc = PretrainConfig(word_dim=mc.event_word_dim, event_dim=mc.embed_dim,
                            steps=args.pretrain_steps, seed=seed)
        init = encoder_init(pretrain_event_embeddings(salads, pc, vocab).encoder)
    elif args.embeddings and not args.events:
        table = _load_table(args.embeddings)
        if table.dim != mc.embed_dim:
            raise UsageError(f"embeddings have dimension {table.dim}, model expects {mc.embed_dim}")
        init = {"embed": pretrained_embedding(vocab, table, seed=seed, scale=args.embed_scale)}
    model, history = train(salads, mc, tc, vocab=vocab, init=init, vocab_limit=args.vocab_limit)
    history_path = args.history or f"{args.out}.history.csv"
    history.to_csv(history_path)
    save_checkpoint(model, args.out, extra={"train_config": tc.to_dict(),
                                            "best_epoch": history.best_epoch})
    final = history.records[history.best_epoch - 1].val_acc if history.best_epoch else 0.0
    log.info("%s: best epoch %d, val_acc %.4f (%s)", model.variant, history.best_epoch, final,
             history.stop_reason)
    write_manifest(args.out, args, argv, started,
                   {"salads": args.salads, "embeddings": args.embeddings},
                   {"checkpoint": args.out, "history": history_path},
                   {"variant": model.variant, "best_val_acc": final,
                    "stop_reason": history.stop_reason})
    return EXIT_OK


class _ClusterJob:
    """Picklable per-salad clustering closure for worker processes."""

    def __init__(self, distance, table, model, restarts, seed):
        self.distance, self.table, self.model = distance, table, model
        self.restarts, self.seed = restarts, seed

    def __call__(self, indexed):
        from .clustering import cluster_salad
        from .metrics import clustering_accuracy
        from .saladgen import derive_seed

        index, salad = indexed
        pred = cluster_salad(salad, self.distance, table=self.table, model=self.model,
                             restarts=self.restarts, seed=derive_seed(self.seed, index))
        return {"salad_id": salad.id, "assignment": pred, "distance_source": self.distance,
                "ca": clustering_accuracy(salad, pred)}


def cmd_cluster(args, argv, started) -> int:
    from .neural.checkpoint import load_checkpoint

    seed = _require_seed(args)
    salads = _load_any_salads(args.salads)
    table = model = None
    if args.distance == "cosine":
        if not args.embeddings:
            raise UsageError("cosine clustering needs --embeddings")
        table = _load_table(args.embeddings)
    else:
        if not args.checkpoint:
            raise UsageError("learned clustering needs --checkpoint")
        if not Path(args.checkpoint).exists():
            raise UsageError(f"no such checkpoint: {args.checkpoint}")
        model = load_checkpoint(args.checkpoint)
    rows = _pool_map(_ClusterJob(args.distance, table, model, args.restarts, seed),
                     list(enumerate(salads)), args.jobs)
    with open(args.out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    mean = float(np.mean([r["ca"] for r in rows])) if rows else float("nan")
    log.info("clustered %d salads, mean CA %.4f", len(rows), mean)
    write_manifest(args.out, args, argv, started,
                   {"salads": args.salads, "embeddings": args.embeddings,
                    "checkpoint": args.checkpoint}, {"predictions": args.out})
    return EXIT_OK


def load_predictions(path) -> dict[str, dict]:
    if not Path(path).exists():
        raise UsageError(f"no such prediction file: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out[row["salad_id"]] = row
            except (KeyError, ValueError) as exc:
                raise UsageError(f"{path} line {lineno}: bad prediction row ({exc})") from None
    return out


class _EvalJob:
    def __init__(self, table):
        self.table = table

    def __call__(self, pair):
        from .embedding import topic_similarity
        from .metrics import clustering_accuracy, unif_baseline

        salad, assignment = pair
        return {"salad_id": salad.id, "n_items": len(salad),
                "tsim": topic_similarity(salad, self.table),
                "ca_model": clustering_accuracy(salad, assignment),
                "ca_unif": clustering_accuracy(salad, unif_baseline(salad))}


def cmd_eval(args, argv, started) -> int:
    from .analysis import correlation_report

    salads = _load_any_salads(args.salads)
    preds = load_predictions(args.predictions)
    table = _load_table(args.embeddings)
    missing = [s.id for s in salads if s.id not in preds]
    if missing:
        raise UsageError(f"no prediction for {len(missing)} salads, e.g. {missing[0]}")
    rows = _pool_map(_EvalJob(table), [(s, preds[s.id]["assignment"]) for s in salads], args.jobs)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["salad_id", "n_items", "tsim", "ca_model", "ca_unif"])
        for r in rows:
            w.writerow([r["salad_id"], r["n_items"], f"{r['tsim']:.10g}",
                        f"{r['ca_model']:.10g}", f"{r['ca_unif']:.10g}"])
    summary = {"mean_ca": float(np.mean([r["ca_model"] for r in rows])) if rows else None,
               "mean_ca_unif": float(np.mean([r["ca_unif"] for r in rows])) if rows else None,
               "rho_ca_tsim": None, "n": len(rows)}
    if len(rows) >= 3:
        try:
            summary["rho_ca_tsim"] = correlation_report(
                [{"ca": r["ca_model"], "tsim": r["tsim"]} for r in rows])["rho"]
        except ValueError as exc:
            log.warning("correlation not reported: %s", exc)
    summary_path = args.summary or f"{args.out}.summary.json"
    Path(summary_path).write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    write_manifest(args.out, args, argv, started,
                   {"salads": args.salads, "predictions": args.predictions,
                    "embeddings": args.embeddings}, {"report": args.out, "summary": summary_path})
    return EXIT_OK


def cmd_analyze(args, argv, started) -> int:
    from .analysis import BracketScheme, bin_movement, format_movement, movement_csv

    scheme = BracketScheme(args.lower, args.medium, args.good)
    run_a = {k: float(v["ca"]) for k, v in load_predictions(args.run_a).items()}
    run_b = {k: float(v["ca"]) for k, v in load_predictions(args.run_b).items()}
    matrix = bin_movement(run_a, run_b, scheme)
    report = {"labels": ["b", "m", "g"], "movement": matrix.tolist(),
              "scheme": [scheme.lower, scheme.medium, scheme.good], "n": len(run_a)}
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    if args.csv:
        Path(args.csv).write_text(movement_csv(matrix))
    print(format_movement(matrix))
    write_manifest(args.out, args, argv, started, {"run_a": args.run_a, "run_b": args.run_b},
                   {"report": args.out, "csv": args.csv})
    return EXIT_OK


def cmd_heatmap(args, argv, started) -> int:
    from .neural.checkpoint import load_checkpoint
    from .neural.heatmap import export_heatmap, render_heatmap, write_heatmap_json

    salads = {s.id: s for s in _load_any_salads(args.salads)}
    if args.salad_id not in salads:
        raise UsageError(f"salad {args.salad_id} not found in {args.salads}")
    if not Path(args.checkpoint).exists():
        raise UsageError(f"no such checkpoint: {args.checkpoint}")
    model = load_checkpoint(args.checkpoint)
    export = export_heatmap(model, salads[args.salad_id], args.s1, args.s2)
    json_path = args.json or f"{args.out}.json"
    write_heatmap_json(export, json_path)
    render_heatmap(export, args.out)
    write_manifest(args.out, args, argv, started,
                   {"salads": args.salads, "checkpoint": args.checkpoint},
                   {"image": args.out, "json": json_path})
    return EXIT_OK


def cmd_synth(args, argv, started) -> int:
    from . import synthetic
    from .corpus import write_corpus
    from .embedding import write_embeddings
    from .events import write_event_salads

    seed = _require_seed(args)
    outputs = {"out": args.out}
    if args.kind == "event":
        write_event_salads(synthetic.event_salads(args.n, seed), args.out)
    else:
        make = synthetic.separable_corpus if args.kind == "separable" else synthetic.contrast_corpus
        docs, table = make(args.n, seed)
        write_corpus(docs, args.out)
        if args.embeddings:
            write_embeddings(table, args.embeddings)
            outputs["embeddings"] = args.embeddings
    write_manifest(args.out, args, argv, started, {}, outputs)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

_subparsers: dict[str, argparse.ArgumentParser] = {}


def _common(p: argparse.ArgumentParser, seed: bool = False, jobs: bool = False):
    p.add_argument("--config", help="key = value file of option defaults; flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    if seed:
        p.add_argument("--seed", type=int, help="random seed (required)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storysalad",
                                     description="Narrative mixtures: generation, models, clustering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        _subparsers[name] = p
        return p

    p = add("generate", cmd_generate, "sample salads from a document corpus")
    p.add_argument("--corpus", required=True, help="corpus JSONL")
    p.add_argument("--mode", choices=["random", "group_key", "category_filter"], default="random")
    p.add_argument("--filter", help="comma-separated key words for category_filter mode")
    p.add_argument("--n", type=int, required=True, help="number of salads")
    p.add_argument("--out", required=True, help="output salad JSONL")
    _common(p, seed=True, jobs=True)

    p = add("hard-select", cmd_hard_select, "keep the k most topically similar salads")
    p.add_argument("--salads", required=True)
    p.add_argument("--embeddings", required=True, help="word vector text file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True, help="salad JSONL with a tsim field per line")
    _common(p)

    p = add("train", cmd_train, "train a sentence-pair classifier and write a checkpoint")
    p.add_argument("--salads", required=True, help="training salads (JSONL)")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--history", help="history CSV (default <out>.history.csv)")
    p.add_argument("--attention", action="store_true", help="add mutual attention")
    p.add_argument("--context", action="store_true", help="add the mixture context reader")
    p.add_argument("--events", action="store_true", help="event-tuple inputs")
    p.add_argument("--pretrain", action="store_true", help="pretrain event embeddings first")
    p.add_argument("--pretrain-steps", type=int, default=500)
    p.add_argument("--composition", choices=["concat", "sum"], default="concat")
    p.add_argument("--embeddings", help="initialise word embeddings from this vector file")
    p.add_argument("--embed-scale", type=float, default=1.0,
                   help="mean row norm of initial embeddings taken from --embeddings")
    p.add_argument("--embed-dim", type=int, default=50)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--filter-widths", default="3,4,5")
    p.add_argument("--filters", type=int, default=32, help="filters per width")
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--max-sentence-len", type=int, default=60)
    p.add_argument("--context-cap", type=int, default=512)
    p.add_argument("--event-word-dim", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--validation-fraction", type=float, default=0.05)
    p.add_argument("--stop-threshold", type=float, default=1e-5)
    p.add_argument("--patience", type=int, default=1)
    p.add_argument("--min-epochs", type=int, default=1)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--pairs-per-salad", type=int, default=16)
    p.add_argument("--vocab-limit", type=int, default=100_000)
    _common(p, seed=True)

    p = add("cluster", cmd_cluster, "two-way k-medoids over each salad")
    p.add_argument("--salads", required=True)
    p.add_argument("--distance", choices=["cosine", "learned"], required=True)
    p.add_argument("--embeddings", help="word vectors (cosine mode)")
    p.add_argument("--checkpoint", help="trained classifier (learned mode)")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", required=True, help="prediction JSONL")
    _common(p, seed=True, jobs=True)

    p = add("eval", cmd_eval, "per-salad CA, UNIF baseline and topic similarity")
    p.add_argument("--salads", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--summary", help="summary JSON (default <out>.summary.json)")
    _common(p, jobs=True)

    p = add("analyze", cmd_analyze, "accuracy-bracket movement between two prediction runs")
    p.add_argument("--run-a", required=True, help="baseline predictions")
    p.add_argument("--run-b", required=True, help="comparison predictions")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", help="also write the movement matrix as CSV")
    p.add_argument("--lower", type=float, default=0.5)
    p.add_argument("--medium", type=float, default=0.65)
    p.add_argument("--good", type=float, default=0.8)
    _common(p)

    p = add("heatmap", cmd_heatmap, "export attention weights for one sentence pair")
    p.add_argument("--salads", required=True)
    p.add_argument("--salad-id", required=True)
    p.add_argument("--s1", type=int, required=True, help="index of the first sentence")
    p.add_argument("--s2", type=int, required=True, help="index of the second sentence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="PNG path")
    p.add_argument("--json", help="weights JSON (default <out>.json)")
    _common(p)

    p = add("synth", cmd_synth, "write a synthetic corpus with known structure")
    p.add_argument("--kind", choices=["separable", "contrast", "event"], required=True)
    p.add_argument("--n", type=int, required=True,
                   help="document pairs (separable/contrast) or salads (event)")
    p.add_argument("--out", required=True, help="corpus JSONL, or salad JSONL for events")
    p.add_argument("--embeddings", help="also write the matching word vectors")
    _common(p, seed=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .neural.train import NumericalError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"storysalad: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = time.time()
    try:
        return args.func(args, argv, started)
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (UsageError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
