"""Planted-signal synthetic corpus.

Builds small documents whose salient passages are detectable from their
sentence embeddings alone: every sentence of a salient passage gets a fixed
unit direction scaled by a signal strength plus isotropic Gaussian noise,
every other sentence gets pure noise. A classifier that learns the planted
direction can recover the salient set; the corpus exists so training can be
tested end to end without any pretrained encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .docmodel import ParsedDocument, Section, SegmentedDocument, segment_document
from .embstore import EmbeddingTable, Role, sentence_key
from .graph import DocGraph, build_graph
from .labels import LabelSet

_VOCAB = (
    "model", "graph", "layer", "signal", "result", "method", "training",
    "sample", "feature", "score", "node", "edge", "value", "passage",
    "section", "metric", "update", "vector", "weight", "input", "output",
    "measure", "effect", "design", "setup", "baseline", "variant", "case",
    "margin", "spread", "trend", "phase", "stage", "round", "batch", "step",
)


@dataclass(frozen=True)
class SynthDoc:
    parsed: ParsedDocument
    segmented: SegmentedDocument
    graph: DocGraph
    salient: frozenset[int]

    def label_set(self) -> LabelSet:
        return LabelSet(self.parsed.doc_id, self.salient, k=0, m=0)


def _sentence(rng: np.random.Generator) -> str:
    n = int(rng.integers(5, 10))
    words = [_VOCAB[int(i)] for i in rng.integers(0, len(_VOCAB), size=n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def _passage(rng: np.random.Generator) -> str:
    # 6-10 sentences: passage-level signal is the mean over sentences, so
    # longer passages separate cleanly from noise at the default strengths
    return " ".join(_sentence(rng) for _ in range(int(rng.integers(6, 11))))


def _build_sections(rng: np.random.Generator, n_passages: int) -> tuple[Section, ...]:
    n_headings = int(rng.integers(2, 5))
    leaves: list[list[str]] = []
    headings = []
    for h in range(n_headings):
        n_subs = int(rng.integers(0, 3))
        if n_subs == 0:
            slot: list[str] = []
            leaves.append(slot)
            headings.append((f"Heading {h + 1}", slot, []))
        else:
            subs = []
            for s in range(n_subs):
                slot = []
                leaves.append(slot)
                subs.append((f"Sub heading {h + 1}.{s + 1}", slot))
            headings.append((f"Heading {h + 1}", None, subs))

    # Every leaf section gets one passage, the rest land uniformly at random.
    for slot in leaves:
        slot.append(_passage(rng))
    for _ in range(n_passages - len(leaves)):
        leaves[int(rng.integers(0, len(leaves)))].append(_passage(rng))

    sections = []
    for title, slot, subs in headings:
        if slot is not None:
            sections.append(Section(title, 1, body="\n".join(slot)))
        else:
            children = tuple(
                Section(sub_title, 2, body="\n".join(sub_slot)) for sub_title, sub_slot in subs
            )
            sections.append(Section(title, 1, children=children))
    return tuple(sections)


def make_corpus(
    n_docs: int = 50,
    seed: int = 0,
    dim: int = 768,
    signal: float = 0.8,
    noise: float = 0.3,
    min_passages: int = 8,
    max_passages: int = 20,
) -> tuple[list[SynthDoc], EmbeddingTable]:
    """Generate documents plus one sentence-embedding table for all of them."""
    root = np.random.SeedSequence(seed)
    dir_seq, doc_seq = root.spawn(2)
    dir_rng = np.random.Generator(np.random.PCG64(dir_seq))
    direction = dir_rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)

    table = EmbeddingTable(dim, Role.SENTENCE)
    docs: list[SynthDoc] = []
    for idx, child in enumerate(doc_seq.spawn(n_docs)):
        rng = np.random.Generator(np.random.PCG64(child))
        doc_id = f"synth-{idx:03d}"
        n_passages = int(rng.integers(min_passages, max_passages + 1))
        sections = _build_sections(rng, n_passages)
        parsed = ParsedDocument(doc_id, f"Synthetic document {idx}", sections)
        seg = segment_document(parsed)

        n = len(seg.passages)
        flags = rng.random(n) < 0.45
        if not flags.any():
            flags[int(rng.integers(0, n))] = True
        salient = frozenset(p.passage_id for p, f in zip(seg.passages, flags) if f)

        for passage, flag in zip(seg.passages, flags):
            for sentence in passage.sentences:
                vec = rng.standard_normal(dim) * noise
                if flag:
                    vec += signal * direction
                table.add(sentence_key(doc_id, sentence.sentence_id), vec.astype(np.float32))

        graph = build_graph(seg, sections)
        docs.append(SynthDoc(parsed, seg, graph, salient))
    return docs, table
