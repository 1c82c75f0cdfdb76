"""Acceptance gate. One criterion per test, one visible pass/fail line each.

Every tolerance and runtime bound here is pinned by the project contract;
the checks run against independent oracles (brute-force enumeration, dense
references, golden bytes), never against the implementation's own output.
"""

import json
import shutil
import sys
import time

import numpy as np
import pytest

from papergraph.cli import main
from papergraph.docmodel import ParsedDocument, Section, document_to_json, segment_document
from papergraph.embstore import EmbeddingTable, Role, context_key, write_table
from papergraph.gat import (
    GatModel,
    GraphTensors,
    TrainConfig,
    attention_maps,
    fd_check,
    forward,
    init_node_features,
    predict_salient,
    train,
)
from papergraph.graph import NodeKind, build_graph, graph_stats
from papergraph.labels import FeedbackDocument, generate_labels
from papergraph.metrics import pooled_binary_f1
from papergraph.prompt import PromptBundle, assemble_prompt, reduction_report
from papergraph.synthetic import make_corpus

from .conftest import ACCEPTANCE_LINES, fake_vector, figure_toy_document
from .test_prompt import FEEDBACK as GOLDEN_FEEDBACK
from .test_prompt import GOLDEN as GOLDEN_DIR
from .test_prompt import PASSAGES as GOLDEN_PASSAGES
from .oracles import (
    brute_force_edges,
    dense_adjacency,
    dense_reference_logits,
    oracle_label_ids,
    random_segmented_doc,
)


def report(criterion: str, ok: bool, detail: str) -> None:
    """One line per criterion, echoed in the terminal summary after the run."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    sys.__stderr__.write(line + "\n")


def thirty_node_document() -> ParsedDocument:
    """Fixed document whose graph has exactly 30 nodes (1+2+2+7+18)."""
    p3 = "Alpha beta gamma. Delta epsilon zeta. Eta theta iota."
    p2 = "Kappa lambda mu. Nu xi omicron."
    sections = (
        Section(
            "Methods",
            1,
            children=(
                Section("Design", 2, body=p3 + "\n" + p2),
                Section("Data", 2, body=p3),
            ),
        ),
        Section("Results", 1, body=p2 + "\n" + p3 + "\n" + p2 + "\n" + p3),
    )
    return ParsedDocument("fixed-030", "Fixed Thirty", sections)


def sentence_features(graph, rng: np.random.Generator, dim: int) -> np.ndarray:
    x = np.zeros((len(graph.nodes), dim), dtype=np.float32)
    for node in graph.nodes:
        if node.kind == NodeKind.SENTENCE:
            x[node.node_id] = rng.standard_normal(dim).astype(np.float32)
    return x


class TestCriterion1GraphConstruction:
    def test_brute_force_equivalence(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(101)
        for _ in range(1000):
            seg, sections = random_segmented_doc(rng, max_nodes=200)
            graph = build_graph(seg, sections)
            got = {(e.src, e.dst, e.kind.value) for e in graph.edges}
            want, n_nodes = brute_force_edges(seg, sections)
            assert got == want
            assert len(graph.nodes) == n_nodes
            st = graph_stats(graph)
            assert st.n_hier == n_nodes - 1

        toy = figure_toy_document()
        graph = build_graph(segment_document(toy), toy.sections)
        counts = graph_stats(graph).counts
        assert len(graph.nodes) == 15
        assert counts == {
            NodeKind.PAPER: 1,
            NodeKind.HEADING: 2,
            NodeKind.SUB_HEADING: 2,
            NodeKind.PASSAGE: 4,
            NodeKind.SENTENCE: 6,
        }
        elapsed = time.perf_counter() - t0
        ok = elapsed < 10.0
        report(
            "criterion 1 graph construction",
            ok,
            f"1000 random trees + toy layout match brute force in {elapsed:.1f}s",
        )
        assert ok


class TestCriterion2AttentionNormalization:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(202)
        worst = 0.0
        for i in range(100):
            seg, sections = random_segmented_doc(rng, max_nodes=60)
            graph = build_graph(seg, sections)
            x = sentence_features(graph, rng, 768)
            model = GatModel.init(int(rng.integers(2**31)))
            gt, maps = attention_maps(model, graph, x)
            assert len(maps) == 3
            for alpha in maps:
                sums = np.add.reduceat(alpha, gt.starts[:-1], axis=0)
                worst = max(worst, float(np.abs(sums - 1.0).max()))
        ok = worst <= 1e-6
        report(
            "criterion 2 attention normalization",
            ok,
            f"max |sum - 1| = {worst:.2e} over 100 graphs x 3 layers (tol 1e-6)",
        )
        assert ok


class TestCriterion3GradientCheck:
    def test_finite_differences_full_architecture(self):
        t0 = time.perf_counter()
        doc = thirty_node_document()
        graph = build_graph(segment_document(doc), doc.sections)
        assert len(graph.nodes) == 30
        rng = np.random.default_rng(303)
        x = sentence_features(graph, rng, 768)
        model = GatModel.init(0)
        results = fd_check(model, graph, x, frozenset({0, 2, 5}), step=1e-4, tol=1e-4, seed=303)
        elapsed = time.perf_counter() - t0
        assert len(results) == 18
        worst = max(r.max_rel_err for r in results)
        checked = sum(r.n_checked for r in results)
        ok = all(r.passed and r.n_checked > 0 for r in results) and elapsed < 60.0
        report(
            "criterion 3 gradient check",
            ok,
            f"{checked} components, 18/18 groups, max rel err {worst:.2e} "
            f"(tol 1e-4, step 1e-4, 64-bit) in {elapsed:.1f}s",
        )
        assert ok


class TestCriterion4DenseOracle:
    def test_forward_matches_dense_reference(self):
        rng = np.random.default_rng(404)
        worst = 0.0
        for i in range(50):
            seg, sections = random_segmented_doc(rng, max_nodes=50)
            graph = build_graph(seg, sections)
            gt = GraphTensors.from_graph(graph)
            x = sentence_features(graph, rng, 768).astype(np.float64)
            model = GatModel.init(int(rng.integers(2**31))).astype(np.float64)
            got = forward(model, gt, x)
            params = {k: t.data for k, t in model.params.items()}
            adj = dense_adjacency(gt.n_nodes, graph.edges)
            want = dense_reference_logits(params, adj, x, gt.passage_rows)
            err = np.abs(got - want) / np.maximum(np.abs(want), 1e-8)
            worst = max(worst, float(err.max()))
        ok = worst <= 1e-5
        report(
            "criterion 4 dense-oracle equivalence",
            ok,
            f"max relative gap {worst:.2e} over 50 (model, graph) pairs (tol 1e-5)",
        )
        assert ok


class TestCriterion5PlantedSignalLearning:
    def test_holdout_f1_and_reduction(self):
        t0 = time.perf_counter()
        docs, table = make_corpus(n_docs=50, seed=7, dim=768)
        dataset = [
            (GraphTensors.from_graph(d.graph), init_node_features(d.graph, table), d.label_set())
            for d in docs[:40]
        ]
        model, _, best_epoch = train(dataset, TrainConfig(epochs=30, seed=1))
        pairs = []
        selections = {}
        for d in docs[40:]:
            gt = GraphTensors.from_graph(d.graph)
            x = init_node_features(d.graph, table)
            pred = frozenset(predict_salient(model, gt, x))
            universe = frozenset(p.passage_id for p in d.segmented.passages)
            pairs.append((pred, d.salient, universe))
            selections[d.segmented.doc_id] = pred
        f1 = pooled_binary_f1(pairs)
        ratio = reduction_report([d.segmented for d in docs[40:]], selections).token_ratio
        elapsed = time.perf_counter() - t0
        ok = f1 >= 0.95 and ratio < 0.8 and elapsed < 300.0
        report(
            "criterion 5 planted-signal learning",
            ok,
            f"holdout F1 {f1:.4f} (>= 0.95), token ratio {ratio:.3f} (< 0.8), "
            f"best epoch {best_epoch}, {elapsed:.0f}s (< 300s)",
        )
        assert ok


class TestCriterion6LabelOracle:
    def test_oracle_equality_and_monotonicity(self):
        rng = np.random.default_rng(606)
        dim = 16
        sections = ("summary", "strengths", "weaknesses", "questions")
        for case in range(500):
            doc_id = f"doc-{case}"
            n_passages = int(rng.integers(1, 12))
            k = int(rng.choice([1, 3, 5]))
            fb_sections = {
                s: tuple(
                    f"s{j} words here."
                    for j in range(int(rng.integers(0, 7)))
                )
                for s in sections
            }
            fb = FeedbackDocument(doc_id, *[fb_sections[s] for s in sections])
            contexts = EmbeddingTable(dim=dim, role=Role.DPR_CONTEXT)
            context_vecs = {}
            for pid in range(n_passages):
                v = rng.standard_normal(dim).astype(np.float32)
                contexts.add(context_key(doc_id, pid), v)
                context_vecs[pid] = v.astype(np.float64)
            queries = EmbeddingTable(dim=dim, role=Role.DPR_QUERY)
            query_vecs = {}
            for s in sections:
                n_windows = -(-len(fb_sections[s]) // k) if fb_sections[s] else 0
                for w in range(n_windows):
                    v = rng.standard_normal(dim).astype(np.float32)
                    queries.add(f"{doc_id}/{s}/q{w}", v)
                    query_vecs[(s, w)] = v.astype(np.float64)

            got3 = generate_labels(fb, k, 3, queries, contexts)
            got5 = generate_labels(fb, k, 5, queries, contexts)
            want3 = oracle_label_ids(fb, k, 3, query_vecs, context_vecs)
            want5 = oracle_label_ids(fb, k, 5, query_vecs, context_vecs)
            assert got3.passage_ids == want3
            assert got5.passage_ids == want5
            assert got3.passage_ids <= got5.passage_ids
        report(
            "criterion 6 label-generation oracle",
            True,
            "500 random instances equal the score-sort-union oracle; m=3 subset of m=5 on all",
        )


class TestCriterion7PromptBytes:
    def test_goldens_and_prefix(self):
        infer_text = assemble_prompt(PromptBundle("doc", GOLDEN_PASSAGES, mode="infer"))
        train_text = assemble_prompt(
            PromptBundle("doc", GOLDEN_PASSAGES, mode="train", feedback=GOLDEN_FEEDBACK)
        )
        golden_infer = (GOLDEN_DIR / "infer_two_passages.txt").read_bytes()
        golden_train = (GOLDEN_DIR / "train_two_passages.txt").read_bytes()
        exact = (
            infer_text.encode("utf-8") == golden_infer
            and train_text.encode("utf-8") == golden_train
        )
        prefix = train_text.startswith(infer_text) and len(train_text) > len(infer_text)
        ok = exact and prefix
        report(
            "criterion 7 prompt byte-exactness",
            ok,
            f"goldens byte-identical in both modes ({len(golden_infer)}/{len(golden_train)} bytes); "
            "infer is a strict prefix of train",
        )
        assert ok


class TestCriterion8Determinism:
    @pytest.fixture()
    def mini_corpus(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("accept8")
        docs_dir, fb_dir, emb_dir = root / "docs", root / "feedback", root / "emb"
        for d in (docs_dir, fb_dir, emb_dir):
            d.mkdir()
        docs, sentences = make_corpus(n_docs=2, seed=88, dim=768, min_passages=4, max_passages=5)
        contexts = EmbeddingTable(dim=768, role=Role.DPR_CONTEXT)
        queries = EmbeddingTable(dim=768, role=Role.DPR_QUERY)
        for doc in docs:
            doc_id = doc.parsed.doc_id
            (docs_dir / f"{doc_id}.json").write_text(
                json.dumps(document_to_json(doc.parsed)) + "\n", encoding="utf-8"
            )
            (fb_dir / f"{doc_id}.json").write_text(
                json.dumps(
                    {
                        "doc_id": doc_id,
                        "summary": ["The study builds graphs."],
                        "strengths": ["Clear method."],
                        "weaknesses": ["Small corpus."],
                        "questions": ["What about scale?"],
                    }
                )
                + "\n",
                encoding="utf-8",
            )
            for p in doc.segmented.passages:
                contexts.add(
                    context_key(doc_id, p.passage_id),
                    fake_vector(768, doc_id, "ctx", str(p.passage_id)),
                )
            for section in ("summary", "strengths", "weaknesses", "questions"):
                queries.add(f"{doc_id}/{section}/q0", fake_vector(768, doc_id, "q", section))
        write_table(sentences, emb_dir / "sentences.emb")
        write_table(contexts, emb_dir / "contexts.emb")
        write_table(queries, emb_dir / "queries.emb")
        return root

    def run_pipeline(self, corpus, out_root):
        docs = str(corpus / "docs")
        emb = corpus / "emb"
        steps = {
            "graphs": ["build-graph", "--docs", docs, "--emit-segments"],
            "labels": [
                "gen-labels", "--feedback", str(corpus / "feedback"),
                "--embeddings", str(emb / "queries.emb"),
                "--embeddings", str(emb / "contexts.emb"),
                "--k", "5", "--m", "3",
            ],
            "train": [
                "train", "--docs", docs, "--embeddings", str(emb / "sentences.emb"),
                "--labels", str(out_root / "labels" / "labels.tsv"),
                "--epochs", "2", "--seed", "88",
            ],
            "select": [
                "select", "--docs", docs, "--embeddings", str(emb / "sentences.emb"),
                "--checkpoint", str(out_root / "train" / "model.gat1"),
            ],
            "prompt": [
                "prompt", "--docs", docs,
                "--selections", str(out_root / "select" / "selections.tsv"),
            ],
            "score": [
                "score", "--selections", str(out_root / "select" / "selections.tsv"),
                "--labels", str(out_root / "labels" / "labels.tsv"),
            ],
        }
        for name, argv in steps.items():
            assert main(argv + ["--out", str(out_root / name)]) == 0, name

    def test_pipeline_reruns_bit_identical(self, mini_corpus, tmp_path):
        # identical command lines both times: manifests must match too
        run_root = tmp_path / "run"
        self.run_pipeline(mini_corpus, run_root)
        files_a = sorted(p.relative_to(run_root) for p in run_root.rglob("*") if p.is_file())
        snapshot = {rel: (run_root / rel).read_bytes() for rel in files_a}
        shutil.rmtree(run_root)
        self.run_pipeline(mini_corpus, run_root)
        files_b = sorted(p.relative_to(run_root) for p in run_root.rglob("*") if p.is_file())
        assert files_a == files_b and files_a
        diffs = [str(rel) for rel in files_a if (run_root / rel).read_bytes() != snapshot[rel]]
        n_manifests = sum(1 for rel in files_a if rel.name.endswith(".manifest.json"))
        ok = not diffs
        report(
            "criterion 8 determinism",
            ok,
            f"two pipeline runs: {len(files_a)} files bit-identical "
            f"(incl. checkpoint + {n_manifests} manifests)"
            + (f"; diffs: {diffs}" if diffs else ""),
        )
        assert ok
