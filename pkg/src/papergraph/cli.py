"""Command-line pipeline: documents in, graphs, labels, checkpoints,
selections, and prompts out.

Every stage reads and writes plain files so stages can be rerun or swapped
independently, and every stage writes a run manifest (resolved config, seed,
input digests, tool versions) from which its outputs can be reproduced
byte for byte. Exit codes: 0 ok, 2 bad input, 3 missing dependency such as
an embedding or checkpoint, 4 broken internal invariant.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, kernels
from .docmodel import ParsedDocument, load_document, segment_document, segmented_to_json, validate_document
from .embstore import EmbeddingTable, Role, read_table
from .errors import MissingEmbedding, PapergraphError, ShapeMismatch
from .gat import (
    GatModel,
    GraphTensors,
    TrainConfig,
    fd_check,
    init_node_features,
    load_checkpoint,
    predict_salient,
    save_checkpoint,
    train,
)
from .graph import NodeKind, build_graph, dump_graph, graph_stats, validate_graph
from .labels import generate_labels, load_feedback, make_queries, read_labels, write_labels
from .metrics import Selection, format_scores, read_selections, score_selection, write_selections
from .prompt import PromptBundle, assemble_prompt, format_report, reduction_report

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING_DEP = 3
EXIT_INTERNAL = 4

ALLOWED_K = (1, 3, 5)
ALLOWED_M = (3, 5)


class CliError(Exception):
    """Input or configuration problem that maps to a specific exit code."""

    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "backend": kernels.BACKEND,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs, key=str)},
        "outputs": sorted(outputs),
    }
    path = out_dir / f"{command}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_docs(docs_dir: str) -> tuple[list[ParsedDocument], list[Path]]:
    root = Path(docs_dir)
    if not root.is_dir():
        raise CliError(f"--docs: not a directory: {docs_dir}")
    paths = sorted(root.glob("*.json"))
    if not paths:
        raise CliError(f"--docs: no .json documents in {docs_dir}")
    docs = []
    for path in paths:
        try:
            doc = load_document(path)
        except (PapergraphError, ValueError) as exc:
            raise CliError(f"{path}: {exc}") from exc
        problems = validate_document(doc)
        if problems:
            raise CliError(f"{path}: " + "; ".join(problems))
        docs.append(doc)
    return docs, paths


def _load_embeddings(paths: list[str]) -> dict[Role, EmbeddingTable]:
    tables: dict[Role, EmbeddingTable] = {}
    for raw in paths or []:
        path = Path(raw)
        if not path.is_file():
            raise CliError(f"--embeddings: no such file: {raw}", EXIT_MISSING_DEP)
        try:
            table = read_table(path)
        except PapergraphError as exc:
            raise CliError(f"{raw}: {exc}") from exc
        if table.role in tables:
            raise CliError(f"--embeddings: duplicate role {table.role.name.lower()} from {raw}")
        tables[table.role] = table
    return tables


def _require_role(tables: dict[Role, EmbeddingTable], role: Role) -> EmbeddingTable:
    if role not in tables:
        raise CliError(
            f"no {role.name.lower()} embeddings given (pass --embeddings with a file of that role)",
            EXIT_MISSING_DEP,
        )
    return tables[role]


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PAPERGRAPH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise CliError(f"PAPERGRAPH_SEED must be an integer, got {env!r}") from exc
    return 0


def _check_grid(args) -> None:
    if args.allow_custom:
        return
    if args.k not in ALLOWED_K:
        raise CliError(f"--k must be one of {ALLOWED_K} (or pass --allow-custom), got {args.k}")
    if args.m not in ALLOWED_M:
        raise CliError(f"--m must be one of {ALLOWED_M} (or pass --allow-custom), got {args.m}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_docs(fn, items: list, workers: int) -> list:
    """Order-preserving map, optionally on a thread pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _build_one(doc: ParsedDocument):
    seg = segment_document(doc)
    graph = build_graph(seg, doc.sections)
    problems = validate_graph(graph)
    if problems:
        raise CliError(f"{doc.doc_id}: graph invariant broken: " + "; ".join(problems), EXIT_INTERNAL)
    return seg, graph


def _stats_table(stats_list) -> str:
    lines = ["doc_id\tnodes\theadings\tsub_headings\tpassages\tsentences\thier_edges\tseq_edges\tmax_depth"]
    for st in stats_list:
        counts = st.counts
        total = sum(counts.values())
        lines.append(
            "\t".join(
                str(v)
                for v in (
                    st.doc_id,
                    total,
                    counts[NodeKind.HEADING],
                    counts[NodeKind.SUB_HEADING],
                    counts[NodeKind.PASSAGE],
                    counts[NodeKind.SENTENCE],
                    st.n_hier,
                    st.n_seq,
                    st.max_depth,
                )
            )
        )
    return "\n".join(lines) + "\n"


def cmd_build_graph(args) -> int:
    docs, paths = _load_docs(args.docs)
    out = _out_dir(args)
    built = _map_docs(_build_one, docs, args.workers)
    outputs = []
    stats_list = []
    for doc, (seg, graph) in zip(docs, built):
        stats_list.append(graph_stats(graph))
        if not args.stats_only:
            name = f"{doc.doc_id}.graph.txt"
            dump_graph(graph, out / name)
            outputs.append(name)
        if args.emit_segments:
            name = f"{doc.doc_id}.segments.json"
            (out / name).write_text(
                json.dumps(segmented_to_json(seg), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            outputs.append(name)
    (out / "stats.tsv").write_text(_stats_table(stats_list), encoding="utf-8")
    outputs.append("stats.tsv")
    config = {
        "docs": args.docs,
        "stats_only": args.stats_only,
        "emit_segments": args.emit_segments,
        "workers": args.workers,
    }
    _write_manifest(out, "build-graph", config, paths, outputs)
    return EXIT_OK


def cmd_stats(args) -> int:
    docs, _ = _load_docs(args.docs)
    built = _map_docs(_build_one, docs, args.workers)
    table = _stats_table([graph_stats(graph) for _, graph in built])
    sys.stdout.write(table)
    if args.out:
        out = _out_dir(args)
        (out / "stats.tsv").write_text(table, encoding="utf-8")
    return EXIT_OK


def _load_feedback_dir(feedback_dir: str):
    root = Path(feedback_dir)
    if not root.is_dir():
        raise CliError(f"--feedback: not a directory: {feedback_dir}")
    paths = sorted(root.glob("*.json"))
    if not paths:
        raise CliError(f"--feedback: no .json files in {feedback_dir}")
    feedbacks = []
    for path in paths:
        try:
            feedbacks.append(load_feedback(path))
        except (PapergraphError, ValueError) as exc:
            raise CliError(f"{path}: {exc}") from exc
    return feedbacks, paths


def cmd_gen_labels(args) -> int:
    _check_grid(args)
    feedbacks, fb_paths = _load_feedback_dir(args.feedback)
    out = _out_dir(args)
    outputs = []
    config = {
        "feedback": args.feedback,
        "k": args.k,
        "m": args.m,
        "cosine": args.cosine,
        "overlap": args.overlap,
        "emit_queries": args.emit_queries,
        "workers": args.workers,
    }

    if args.emit_queries:
        for fb in feedbacks:
            queries = make_queries(fb, args.k, overlap=args.overlap)
            payload = {
                "doc_id": fb.doc_id,
                "queries": [{"id": q.key, "text": q.text} for q in queries],
            }
            name = f"{fb.doc_id}.queries.json"
            (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            outputs.append(name)
        _write_manifest(out, "gen-labels", config, fb_paths, outputs)
        return EXIT_OK

    tables = _load_embeddings(args.embeddings)
    queries = _require_role(tables, Role.DPR_QUERY)
    contexts = _require_role(tables, Role.DPR_CONTEXT)
    similarity = "cosine" if args.cosine else "dot"

    def label_one(fb):
        return generate_labels(fb, args.k, args.m, queries, contexts, similarity, overlap=args.overlap)

    labelsets = _map_docs(label_one, feedbacks, args.workers)
    write_labels(labelsets, out / "labels.tsv")
    outputs.append("labels.tsv")
    inputs = fb_paths + [Path(p) for p in args.embeddings]
    _write_manifest(out, "gen-labels", config, inputs, outputs)
    return EXIT_OK


def cmd_train(args) -> int:
    docs, doc_paths = _load_docs(args.docs)
    tables = _load_embeddings(args.embeddings)
    sentences = _require_role(tables, Role.SENTENCE)
    labels_path = Path(args.labels)
    if not labels_path.is_file():
        raise CliError(f"--labels: no such file: {args.labels}", EXIT_MISSING_DEP)
    label_sets = {ls.doc_id: ls for ls in read_labels(labels_path)}

    seed = _resolve_seed(args)
    dataset = []
    for doc in docs:
        if doc.doc_id not in label_sets:
            continue
        seg = segment_document(doc)
        graph = build_graph(seg, doc.sections)
        x = init_node_features(graph, sentences)
        dataset.append((GraphTensors.from_graph(graph), x, label_sets[doc.doc_id]))
    if not dataset:
        raise CliError("no documents with both labels and embeddings")

    cfg = TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        seed=seed,
        val_fraction=args.val_fraction,
        clip_norm=args.clip_norm if args.clip_norm > 0 else None,
    )
    out = _out_dir(args)
    config = {
        "docs": args.docs,
        "labels": args.labels,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "val_fraction": cfg.val_fraction,
        "clip_norm": cfg.clip_norm,
        "seed": seed,
        "fd_check": args.fd_check,
    }
    inputs = doc_paths + [Path(p) for p in args.embeddings] + [labels_path]

    if args.fd_check:
        gt, x, ls = dataset[0]
        model = GatModel.init(seed)
        results = fd_check(model, gt, x, ls, seed=seed)
        lines = ["group\tn_checked\tmax_abs_diff\tmax_rel_err\tstatus"]
        all_ok = True
        for r in results:
            lines.append(f"{r.name}\t{r.n_checked}\t{r.max_abs_diff:.3e}\t{r.max_rel_err:.3e}\t"
                         + ("ok" if r.passed else "FAIL"))
            all_ok = all_ok and r.passed
        sys.stdout.write("\n".join(lines) + "\n")
        if not all_ok:
            raise CliError("finite-difference gradient check failed", EXIT_INTERNAL)
        _write_manifest(out, "train", config, inputs, [])
        return EXIT_OK

    model, history, best_epoch = train(dataset, cfg)
    ckpt_name = "model.gat1"
    meta = {
        "seed": seed,
        "config": cfg.to_dict(),
        "best_epoch": best_epoch,
        "val_loss": history[best_epoch - 1].val_loss if history else None,
        "backend": kernels.BACKEND,
        "version": __version__,
    }
    save_checkpoint(model, out / ckpt_name, meta)
    hist_lines = ["epoch\ttrain_loss\tval_loss"]
    for row in history:
        hist_lines.append(f"{row.epoch}\t{row.train_loss:.6f}\t{row.val_loss:.6f}")
    (out / "history.tsv").write_text("\n".join(hist_lines) + "\n", encoding="utf-8")
    outputs = [ckpt_name, ckpt_name + ".meta.json", "history.tsv"]
    _write_manifest(out, "train", config, inputs, outputs)
    return EXIT_OK


def cmd_select(args) -> int:
    docs, doc_paths = _load_docs(args.docs)
    tables = _load_embeddings(args.embeddings)
    sentences = _require_role(tables, Role.SENTENCE)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.is_file():
        raise CliError(f"--checkpoint: no such file: {args.checkpoint}", EXIT_MISSING_DEP)
    try:
        model = load_checkpoint(ckpt_path)
    except PapergraphError as exc:
        raise CliError(f"{args.checkpoint}: {exc}") from exc

    def select_one(doc):
        seg = segment_document(doc)
        graph = build_graph(seg, doc.sections)
        x = init_node_features(graph, sentences)
        return Selection(doc.doc_id, frozenset(predict_salient(model, graph, x)))

    selections = _map_docs(select_one, docs, args.workers)
    out = _out_dir(args)
    write_selections(selections, out / "selections.tsv")
    config = {"docs": args.docs, "checkpoint": args.checkpoint, "workers": args.workers}
    inputs = doc_paths + [Path(p) for p in args.embeddings] + [ckpt_path]
    _write_manifest(out, "select", config, inputs, ["selections.tsv"])
    return EXIT_OK


def cmd_prompt(args) -> int:
    docs, doc_paths = _load_docs(args.docs)
    sel_path = Path(args.selections)
    if not sel_path.is_file():
        raise CliError(f"--selections: no such file: {args.selections}", EXIT_MISSING_DEP)
    selections = {s.doc_id: s for s in read_selections(sel_path)}

    feedbacks = {}
    fb_paths: list[Path] = []
    if args.mode == "train":
        if not args.feedback:
            raise CliError("--mode train requires --feedback")
        fbs, fb_paths = _load_feedback_dir(args.feedback)
        feedbacks = {fb.doc_id: fb for fb in fbs}

    out = _out_dir(args)
    outputs = []
    segmented = []
    chosen: dict[str, frozenset[int]] = {}
    for doc in docs:
        seg = segment_document(doc)
        segmented.append(seg)
        sel = selections.get(doc.doc_id)
        ids = sel.passage_ids if sel else frozenset()
        chosen[doc.doc_id] = ids
        if not ids:
            print(f"note: no passages selected for {doc.doc_id}; prompt skipped", file=sys.stderr)
            continue
        known = {p.passage_id for p in seg.passages}
        stray = sorted(ids - known)
        if stray:
            raise CliError(f"{doc.doc_id}: selection names unknown passages {stray}")
        texts = tuple(p.text for p in seg.passages if p.passage_id in ids)
        if args.mode == "train":
            if doc.doc_id not in feedbacks:
                raise CliError(f"{doc.doc_id}: no feedback file for train mode", EXIT_MISSING_DEP)
            bundle = PromptBundle(doc.doc_id, texts, "train", feedbacks[doc.doc_id])
        else:
            bundle = PromptBundle(doc.doc_id, texts, "infer")
        name = f"{doc.doc_id}.prompt.txt"
        (out / name).write_text(assemble_prompt(bundle), encoding="utf-8")
        outputs.append(name)

    report = reduction_report(segmented, chosen)
    (out / "reduction.tsv").write_text(format_report(report), encoding="utf-8")
    outputs.append("reduction.tsv")
    config = {"docs": args.docs, "selections": args.selections, "mode": args.mode,
              "feedback": args.feedback}
    _write_manifest(out, "prompt", config, doc_paths + [sel_path] + fb_paths, outputs)
    return EXIT_OK


def cmd_score(args) -> int:
    sel_path = Path(args.selections)
    lab_path = Path(args.labels)
    for path, flag in ((sel_path, "--selections"), (lab_path, "--labels")):
        if not path.is_file():
            raise CliError(f"{flag}: no such file: {path}", EXIT_MISSING_DEP)
    selections = {s.doc_id: s for s in read_selections(sel_path)}
    golds = {ls.doc_id: ls for ls in read_labels(lab_path)}
    only_sel = sorted(set(selections) - set(golds))
    only_gold = sorted(set(golds) - set(selections))
    if only_sel or only_gold:
        raise CliError(
            f"document sets differ: only in selections {only_sel}, only in labels {only_gold}"
        )
    scores = [score_selection(selections[d], golds[d]) for d in sorted(selections)]
    table = format_scores(scores)
    sys.stdout.write(table)
    if args.out:
        out = _out_dir(args)
        (out / "scores.tsv").write_text(table, encoding="utf-8")
        _write_manifest(out, "score", {"selections": args.selections, "labels": args.labels},
                        [sel_path, lab_path], ["scores.tsv"])
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, *, docs=False, feedback=False, embeddings=False,
                out=False, workers=False) -> None:
    if docs:
        p.add_argument("--docs", required=True, help="directory of document .json files")
    if feedback:
        p.add_argument("--feedback", help="directory of feedback .json files")
    if embeddings:
        p.add_argument("--embeddings", action="append", default=[],
                       help="embedding file (repeatable; role read from the header)")
    if out:
        p.add_argument("--out", required=True, help="output directory")
    if workers:
        p.add_argument("--workers", type=int, default=1, help="worker threads for per-document stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="papergraph",
                                     description="Document graphs, weak labels, salient-passage "
                                                 "selection, and prompt assembly.")
    parser.add_argument("--version", action="version", version=f"papergraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="build document graphs and stats")
    _add_common(p, docs=True, out=True, workers=True)
    p.add_argument("--stats-only", action="store_true", help="write only the stats table")
    p.add_argument("--emit-segments", action="store_true",
                   help="also write per-document segment files for external encoders")
    p.set_defaults(fn=cmd_build_graph)

    p = sub.add_parser("stats", help="print the per-document graph stats table")
    _add_common(p, docs=True, workers=True)
    p.add_argument("--out", help="optional directory to also write stats.tsv")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("gen-labels", help="retrieve weak labels from feedback queries")
    _add_common(p, feedback=True, embeddings=True, out=True, workers=True)
    p.add_argument("--k", type=int, default=5, help="query window size in sentences")
    p.add_argument("--m", type=int, default=3, help="passages retrieved per query")
    p.add_argument("--allow-custom", action="store_true",
                   help="permit k/m values outside the supported grid")
    p.add_argument("--cosine", action="store_true", help="cosine similarity instead of inner product")
    p.add_argument("--overlap", action="store_true", help="stride-1 overlapping query windows")
    p.add_argument("--emit-queries", action="store_true",
                   help="write query text files for external encoders and stop")
    p.set_defaults(fn=cmd_gen_labels)

    p = sub.add_parser("train", help="train the salience classifier")
    _add_common(p, docs=True, embeddings=True, out=True)
    p.add_argument("--labels", required=True, help="label file from gen-labels")
    p.add_argument("--seed", type=int, default=None, help="seed (default: PAPERGRAPH_SEED or 0)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--clip-norm", type=float, default=5.0,
                   help="global gradient-norm cap (0 disables clipping)")
    p.add_argument("--fd-check", action="store_true",
                   help="verify gradients against finite differences and exit")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("select", help="pick salient passages with a trained checkpoint")
    _add_common(p, docs=True, embeddings=True, out=True, workers=True)
    p.add_argument("--checkpoint", required=True, help="checkpoint from train")
    p.set_defaults(fn=cmd_select)

    p = sub.add_parser("prompt", help="assemble prompts from selections")
    _add_common(p, docs=True, feedback=True, out=True)
    p.add_argument("--selections", required=True, help="selection file from select")
    p.add_argument("--mode", choices=("infer", "train"), default="infer")
    p.set_defaults(fn=cmd_prompt)

    p = sub.add_parser("score", help="score selections against gold labels")
    p.add_argument("--selections", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", help="optional directory to also write scores.tsv")
    p.set_defaults(fn=cmd_score)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"papergraph: error: {exc}", file=sys.stderr)
        return exc.code
    except MissingEmbedding as exc:
        print(f"papergraph: {exc}", file=sys.stderr)
        return EXIT_MISSING_DEP
    except ShapeMismatch as exc:
        print(f"papergraph: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except PapergraphError as exc:
        print(f"papergraph: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"papergraph: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
