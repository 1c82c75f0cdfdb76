"""Weak-label generation: query windows, top-m retrieval, consolidation.

Each feedback section is cut into consecutive k-sentence windows; every
window is one query. A query retrieves the top-m passages by embedding
similarity, and the union of all retrieved passage ids over all queries
becomes the document's label set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embstore import EmbeddingTable, context_key, query_key
from .errors import DimMismatch, IoFailure, MissingEmbedding

__all__ = [
    "SECTIONS",
    "FeedbackDocument",
    "Query",
    "LabelSet",
    "make_queries",
    "retrieve_top_m",
    "generate_labels",
    "load_feedback",
    "write_labels",
    "read_labels",
]

SECTIONS = ("summary", "strengths", "weaknesses", "questions")


@dataclass(frozen=True)
class FeedbackDocument:
    doc_id: str
    summary: tuple[str, ...] = ()
    strengths: tuple[str, ...] = ()
    weaknesses: tuple[str, ...] = ()
    questions: tuple[str, ...] = ()

    def sections(self) -> list[tuple[str, tuple[str, ...]]]:
        return [(name, getattr(self, name)) for name in SECTIONS]

    def is_empty(self) -> bool:
        return not any(sentences for _, sentences in self.sections())


@dataclass(frozen=True)
class Query:
    doc_id: str
    section: str
    window_index: int
    text: str

    @property
    def key(self) -> str:
        return query_key(self.doc_id, self.section, self.window_index)


@dataclass(frozen=True)
class LabelSet:
    doc_id: str
    passage_ids: frozenset[int]
    k: int
    m: int

    def sorted_ids(self) -> list[int]:
        return sorted(self.passage_ids)


def make_queries(fb: FeedbackDocument, k: int, overlap: bool = False) -> list[Query]:
    """Cut each section into consecutive k-sentence windows, in order.

    Windows do not overlap by default; a trailing window shorter than k is
    kept rather than dropped. With overlap=True the window start advances
    one sentence at a time instead of k (an extension, off by default).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    stride = 1 if overlap else k
    queries: list[Query] = []
    for section, sentences in fb.sections():
        for window_index, start in enumerate(range(0, len(sentences), stride)):
            window = sentences[start : start + k]
            queries.append(Query(fb.doc_id, section, window_index, " ".join(window)))
    return queries


def retrieve_top_m(
    q_vec: np.ndarray,
    passages: list[tuple[int, np.ndarray]],
    m: int,
    similarity: str = "dot",
) -> list[int]:
    """Rank passages against one query vector; returns min(m, n) ids.

    Scores are inner products (or cosine), computed in double precision so
    the ordering is stable. Ties break toward the smaller passage id.
    """
    q = np.asarray(q_vec, dtype=np.float64)
    scored: list[tuple[float, int]] = []
    for passage_id, vec in passages:
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != q.shape:
            raise DimMismatch(f"passage {passage_id}: dim {v.shape} vs query {q.shape}")
        scored.append((float(q @ v), passage_id))
    if similarity == "cosine":
        q_norm = float(np.linalg.norm(q))
        rescored = []
        for (score, passage_id), (_, vec) in zip(scored, passages):
            v_norm = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
            denom = q_norm * v_norm
            rescored.append((score / denom if denom > 0.0 else 0.0, passage_id))
        scored = rescored
    elif similarity != "dot":
        raise ValueError(f"unknown similarity {similarity!r}")
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [passage_id for _, passage_id in scored[: min(m, len(scored))]]


def _doc_passages(context_table: EmbeddingTable, doc_id: str) -> list[tuple[int, np.ndarray]]:
    prefix = f"{doc_id}/p"
    passages: list[tuple[int, np.ndarray]] = []
    for entry_id, vec in context_table.entries.items():
        if entry_id.startswith(prefix):
            suffix = entry_id[len(prefix) :]
            if suffix.isdigit():
                passages.append((int(suffix), vec))
    passages.sort(key=lambda item: item[0])
    return passages


def generate_labels(
    fb: FeedbackDocument,
    k: int,
    m: int,
    query_table: EmbeddingTable,
    context_table: EmbeddingTable,
    similarity: str = "dot",
    overlap: bool = False,
) -> LabelSet:
    """Union of top-m retrievals over every query window of the feedback."""
    passages = _doc_passages(context_table, fb.doc_id)
    if not passages:
        raise MissingEmbedding(context_key(fb.doc_id, 0))
    selected: set[int] = set()
    for query in make_queries(fb, k, overlap=overlap):
        if query.key not in query_table:
            raise MissingEmbedding(query.key)
        selected.update(retrieve_top_m(query_table[query.key], passages, m, similarity))
    return LabelSet(fb.doc_id, frozenset(selected), k, m)


def load_feedback(path: str | Path) -> FeedbackDocument:
    """Read a feedback JSON file: doc_id plus four sentence arrays."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "doc_id" not in data:
        raise ValueError(f"{path}: feedback file must be an object with doc_id")
    fb = FeedbackDocument(
        doc_id=str(data["doc_id"]),
        **{name: tuple(str(s) for s in data.get(name, [])) for name in SECTIONS},
    )
    if fb.is_empty():
        raise ValueError(f"{path}: all feedback sections are empty")
    return fb


def write_labels(labelsets: list[LabelSet], path: str | Path) -> None:
    """One line per document: doc_id, k, m, comma-separated passage ids."""
    lines = []
    for ls in labelsets:
        ids = ",".join(str(i) for i in ls.sorted_ids())
        lines.append(f"{ls.doc_id}\t{ls.k}\t{ls.m}\t{ids}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_labels(path: str | Path) -> list[LabelSet]:
    labelsets = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc_id, k, m, ids = line.split("\t")
        passage_ids = frozenset(int(i) for i in ids.split(",") if i != "")
        labelsets.append(LabelSet(doc_id, passage_ids, int(k), int(m)))
    return labelsets
