"""Query windowing, top-m retrieval, and weak-label consolidation."""

import numpy as np
import pytest

from papergraph.embstore import EmbeddingTable, Role, context_key, query_key
from papergraph.errors import DimMismatch, IoFailure, MissingEmbedding
from papergraph.labels import (
    FeedbackDocument,
    LabelSet,
    Query,
    generate_labels,
    load_feedback,
    make_queries,
    read_labels,
    retrieve_top_m,
    write_labels,
)

from .oracles import oracle_label_ids

DIM = 8


def tables_from_vectors(doc_id, query_vecs, context_vecs):
    """query_vecs: {(section, window_index): vec}; context_vecs: {pid: vec}."""
    qt = EmbeddingTable(dim=DIM, role=Role.DPR_QUERY)
    for (section, idx), vec in query_vecs.items():
        qt.add(query_key(doc_id, section, idx), vec)
    ct = EmbeddingTable(dim=DIM, role=Role.DPR_CONTEXT)
    for pid, vec in context_vecs.items():
        ct.add(context_key(doc_id, pid), vec)
    return qt, ct


def random_instance(rng):
    """A random feedback document with embeddings for every window and passage."""
    fb = FeedbackDocument(
        "doc",
        summary=tuple(f"Summary {i}." for i in range(rng.integers(0, 7))),
        strengths=tuple(f"Strength {i}." for i in range(rng.integers(0, 7))),
        weaknesses=tuple(f"Weakness {i}." for i in range(rng.integers(0, 7))),
        questions=tuple(f"Question {i}." for i in range(rng.integers(0, 7))),
    )
    k = int(rng.choice([1, 3, 5]))
    m = int(rng.choice([3, 5]))
    query_vecs = {
        (q.section, q.window_index): rng.standard_normal(DIM).astype(np.float32)
        for q in make_queries(fb, k)
    }
    n_passages = int(rng.integers(1, 11))
    context_vecs = {pid: rng.standard_normal(DIM).astype(np.float32) for pid in range(n_passages)}
    return fb, k, m, query_vecs, context_vecs


class TestMakeQueries:
    def test_trailing_short_window_kept(self):
        fb = FeedbackDocument("d", summary=tuple("abcde"))
        windows = [q.text for q in make_queries(fb, 3)]
        assert windows == ["a b c", "d e"]

    def test_k_one_is_one_query_per_sentence(self):
        fb = FeedbackDocument("d", questions=("q1", "q2", "q3"))
        assert [q.text for q in make_queries(fb, 1)] == ["q1", "q2", "q3"]

    def test_six_sentences_k_five(self):
        fb = FeedbackDocument("d", strengths=tuple("abcdef"))
        windows = [q.text for q in make_queries(fb, 5)]
        assert windows == ["a b c d e", "f"]

    def test_window_index_restarts_per_section(self):
        fb = FeedbackDocument("d", summary=("a", "b"), weaknesses=("c", "d"))
        queries = make_queries(fb, 1)
        assert [(q.section, q.window_index) for q in queries] == [
            ("summary", 0),
            ("summary", 1),
            ("weaknesses", 0),
            ("weaknesses", 1),
        ]

    def test_empty_sections_yield_nothing(self):
        assert make_queries(FeedbackDocument("d"), 3) == []

    def test_overlap_stride_one(self):
        fb = FeedbackDocument("d", summary=tuple("abcde"))
        windows = [q.text for q in make_queries(fb, 3, overlap=True)]
        assert windows == ["a b c", "b c d", "c d e", "d e", "e"]

    def test_k_below_one_rejected(self):
        with pytest.raises(ValueError, match="k must be"):
            make_queries(FeedbackDocument("d", summary=("a",)), 0)

    def test_query_key_shape(self):
        q = Query("doc-1", "summary", 2, "text")
        assert q.key == "doc-1/summary/q2"


class TestRetrieveTopM:
    def test_orthonormal_picks_aligned_passage(self):
        passages = [(i, np.eye(4, dtype=np.float32)[i]) for i in range(4)]
        assert retrieve_top_m(np.eye(4)[2], passages, 1) == [2]

    def test_saturation_returns_all(self):
        passages = [(i, np.full(3, i, dtype=np.float32)) for i in range(3)]
        got = retrieve_top_m(np.ones(3), passages, 10)
        assert sorted(got) == [0, 1, 2]

    def test_ties_break_to_smaller_id(self):
        passages = [(i, np.ones(3, dtype=np.float32)) for i in (4, 1, 3, 2)]
        assert retrieve_top_m(np.ones(3), passages, 3) == [1, 2, 3]

    def test_dot_vs_cosine(self):
        q = np.array([1.0, 0.0])
        passages = [(0, np.array([10.0, 10.0], dtype=np.float32)),
                    (1, np.array([0.9, 0.0], dtype=np.float32))]
        assert retrieve_top_m(q, passages, 1, similarity="dot") == [0]
        assert retrieve_top_m(q, passages, 1, similarity="cosine") == [1]

    def test_cosine_zero_norm_scores_zero(self):
        passages = [(0, np.zeros(2, dtype=np.float32)),
                    (1, np.array([-1.0, 0.0], dtype=np.float32))]
        # zero vector scores 0.0, beating the negatively aligned passage
        assert retrieve_top_m(np.array([1.0, 0.0]), passages, 1, similarity="cosine") == [0]

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            retrieve_top_m(np.ones(3), [(0, np.ones(4, dtype=np.float32))], 1)

    def test_unknown_similarity(self):
        with pytest.raises(ValueError, match="similarity"):
            retrieve_top_m(np.ones(2), [(0, np.ones(2, dtype=np.float32))], 1, similarity="l2")

    def test_against_independent_sort(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(1, 12))
            q = rng.standard_normal(DIM)
            passages = [(pid, rng.standard_normal(DIM).astype(np.float32)) for pid in range(n)]
            m = int(rng.integers(1, 7))
            scores = sorted(
                ((-float(np.asarray(q, np.float64) @ np.asarray(v, np.float64)), pid) for pid, v in passages)
            )
            assert retrieve_top_m(q, passages, m) == [pid for _, pid in scores[:m]]


class TestGenerateLabels:
    def test_single_query_top_m(self):
        fb = FeedbackDocument("doc", summary=("only sentence",))
        q_vec = np.zeros(DIM, dtype=np.float32)
        q_vec[0] = 1.0
        context_vecs = {pid: np.zeros(DIM, dtype=np.float32) for pid in range(5)}
        for pid in context_vecs:
            context_vecs[pid][0] = 5.0 - pid  # descending alignment with the query
        qt, ct = tables_from_vectors("doc", {("summary", 0): q_vec}, context_vecs)
        labels = generate_labels(fb, k=3, m=3, query_table=qt, context_table=ct)
        assert labels.passage_ids == frozenset({0, 1, 2})
        assert (labels.k, labels.m) == (3, 3)

    def test_union_across_sections(self):
        fb = FeedbackDocument("doc", summary=("s",), questions=("q",))
        vec_a = np.zeros(DIM, dtype=np.float32)
        vec_a[0] = 1.0
        vec_b = np.zeros(DIM, dtype=np.float32)
        vec_b[1] = 1.0
        context_vecs = {0: vec_a, 1: vec_b, 2: np.zeros(DIM, dtype=np.float32)}
        qt, ct = tables_from_vectors("doc", {("summary", 0): vec_a, ("questions", 0): vec_b}, context_vecs)
        labels = generate_labels(fb, k=1, m=1, query_table=qt, context_table=ct)
        assert labels.passage_ids == frozenset({0, 1})

    def test_m_monotonicity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            fb, k, _, query_vecs, context_vecs = random_instance(rng)
            if fb.is_empty():
                continue
            qt, ct = tables_from_vectors("doc", query_vecs, context_vecs)
            small = generate_labels(fb, k, 3, qt, ct)
            large = generate_labels(fb, k, 5, qt, ct)
            assert small.passage_ids <= large.passage_ids

    def test_context_order_invariance(self):
        rng = np.random.default_rng(6)
        fb, k, m, query_vecs, context_vecs = random_instance(rng)
        while fb.is_empty():
            fb, k, m, query_vecs, context_vecs = random_instance(rng)
        qt, ct = tables_from_vectors("doc", query_vecs, context_vecs)
        shuffled = EmbeddingTable(dim=DIM, role=Role.DPR_CONTEXT)
        for pid in sorted(context_vecs, reverse=True):
            shuffled.add(context_key("doc", pid), context_vecs[pid])
        assert generate_labels(fb, k, m, qt, ct) == generate_labels(fb, k, m, qt, shuffled)

    def test_size_bound(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            fb, k, m, query_vecs, context_vecs = random_instance(rng)
            if fb.is_empty():
                continue
            qt, ct = tables_from_vectors("doc", query_vecs, context_vecs)
            labels = generate_labels(fb, k, m, qt, ct)
            assert len(labels.passage_ids) <= len(query_vecs) * m
            assert labels.passage_ids <= set(context_vecs)

    def test_matches_oracle(self):
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 50:
            fb, k, m, query_vecs, context_vecs = random_instance(rng)
            if fb.is_empty():
                continue
            qt, ct = tables_from_vectors("doc", query_vecs, context_vecs)
            got = generate_labels(fb, k, m, qt, ct)
            assert got.passage_ids == oracle_label_ids(fb, k, m, query_vecs, context_vecs)
            checked += 1

    def test_missing_query_embedding_named(self):
        fb = FeedbackDocument("doc", summary=("a", "b", "c", "d"))
        query_vecs = {("summary", 0): np.ones(DIM, dtype=np.float32)}  # window 1 missing
        qt, ct = tables_from_vectors("doc", query_vecs, {0: np.ones(DIM, dtype=np.float32)})
        with pytest.raises(MissingEmbedding, match="doc/summary/q1"):
            generate_labels(fb, k=3, m=3, query_table=qt, context_table=ct)

    def test_no_passages_named(self):
        fb = FeedbackDocument("doc", summary=("a",))
        qt, ct = tables_from_vectors("doc", {("summary", 0): np.ones(DIM, dtype=np.float32)}, {})
        with pytest.raises(MissingEmbedding, match="doc/p0"):
            generate_labels(fb, k=1, m=3, query_table=qt, context_table=ct)

    def test_other_documents_in_table_ignored(self):
        fb = FeedbackDocument("doc", summary=("a",))
        qt, ct = tables_from_vectors(
            "doc", {("summary", 0): np.ones(DIM, dtype=np.float32)}, {0: np.ones(DIM, dtype=np.float32)}
        )
        ct.add("doc2/p0", np.full(DIM, 9.0, dtype=np.float32))
        ct.add("doc/pXYZ", np.full(DIM, 9.0, dtype=np.float32))  # malformed suffix skipped
        labels = generate_labels(fb, k=1, m=5, query_table=qt, context_table=ct)
        assert labels.passage_ids == frozenset({0})


class TestLabelIo:
    def test_round_trip(self, tmp_path):
        sets = [
            LabelSet("a", frozenset({3, 1, 2}), 3, 5),
            LabelSet("b", frozenset(), 1, 3),
        ]
        path = tmp_path / "labels.tsv"
        write_labels(sets, path)
        assert read_labels(path) == sets
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "a\t3\t5\t1,2,3"
        assert lines[1] == "b\t1\t3\t"

    def test_empty_list(self, tmp_path):
        path = tmp_path / "labels.tsv"
        write_labels([], path)
        assert path.read_bytes() == b""
        assert read_labels(path) == []


class TestLoadFeedback:
    def test_valid(self, tmp_path):
        path = tmp_path / "fb.json"
        path.write_text('{"doc_id": "d", "summary": ["a", "b"], "questions": ["q"]}', encoding="utf-8")
        fb = load_feedback(path)
        assert fb == FeedbackDocument("d", summary=("a", "b"), questions=("q",))

    def test_missing_doc_id(self, tmp_path):
        path = tmp_path / "fb.json"
        path.write_text('{"summary": ["a"]}', encoding="utf-8")
        with pytest.raises(ValueError, match="doc_id"):
            load_feedback(path)

    def test_all_sections_empty(self, tmp_path):
        path = tmp_path / "fb.json"
        path.write_text('{"doc_id": "d"}', encoding="utf-8")
        with pytest.raises(ValueError, match="empty"):
            load_feedback(path)

    def test_bad_json(self, tmp_path):
        path = tmp_path / "fb.json"
        path.write_text("nope{", encoding="utf-8")
        with pytest.raises(ValueError, match="invalid JSON"):
            load_feedback(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            load_feedback(tmp_path / "absent.json")
