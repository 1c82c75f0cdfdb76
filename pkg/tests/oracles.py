"""Independent reference implementations the tests compare against.

Each oracle restates a contract from first principles with the dumbest
algorithm that could work, sharing no code with the implementation under
test: edges are enumerated rule by rule over an explicit id walk, labels
come from a score-sort-take loop, and the attention network is recomputed
with a dense masked V x V softmax instead of edge segments.
"""

from __future__ import annotations

import numpy as np

from papergraph.docmodel import Passage, SegmentedDocument, Section, Sentence
from papergraph.labels import FeedbackDocument

# ---------------------------------------------------------------------------
# Graph oracle


def brute_force_edges(seg: SegmentedDocument, sections: tuple[Section, ...]):
    """Enumerate the expected undirected edge set as {(src, dst, kind)}.

    Ids follow the documented depth-first document order: root 0, then for
    each heading its node, its direct passages (each followed by its
    sentences), then each sub-heading likewise.
    """
    by_path: dict[tuple[str, ...], list[Passage]] = {}
    for p in seg.passages:
        by_path.setdefault(p.section_path, []).append(p)

    next_id = 1
    edges: set[tuple[int, int, str]] = set()

    def add(u: int, v: int, kind: str) -> None:
        edges.add((min(u, v), max(u, v), kind))

    def place_passages(parent_id: int, path: tuple[str, ...]) -> None:
        nonlocal next_id
        prev_passage = None
        for passage in by_path.get(path, []):
            pid = next_id
            next_id += 1
            add(parent_id, pid, "hier")
            if prev_passage is not None:
                add(prev_passage, pid, "seq")
            prev_passage = pid
            prev_sentence = None
            for _ in passage.sentences:
                sid = next_id
                next_id += 1
                add(pid, sid, "hier")
                if prev_sentence is not None:
                    add(prev_sentence, sid, "seq")
                prev_sentence = sid

    for section in sections:
        heading_id = next_id
        next_id += 1
        add(0, heading_id, "hier")
        place_passages(heading_id, (section.heading_text,))
        for child in section.children:
            sub_id = next_id
            next_id += 1
            add(heading_id, sub_id, "hier")
            place_passages(sub_id, (section.heading_text, child.heading_text))
    return edges, next_id


def random_segmented_doc(rng: np.random.Generator, max_nodes: int = 200):
    """Random section tree + segmentation pair for graph tests.

    Sentences get placeholder text; graph construction never reads it.
    """
    doc_id = f"doc-{int(rng.integers(0, 10**9)):09d}"
    sections = []
    passages = []
    sentence_id = 0
    passage_id = 0
    # Budget in nodes: root + whatever the loop below spends.
    budget = int(rng.integers(8, max_nodes + 1)) - 1

    def spend(cost: int) -> bool:
        nonlocal budget
        if budget < cost:
            return False
        budget -= cost
        return True

    def make_passages(path, n):
        nonlocal passage_id, sentence_id
        for _ in range(n):
            n_sent = int(rng.integers(1, 5))
            if not spend(1 + n_sent):
                return
            sents = []
            for _ in range(n_sent):
                sents.append(Sentence(sentence_id, f"s{sentence_id}."))
                sentence_id += 1
            passages.append(Passage(passage_id, path, " ".join(s.text for s in sents), tuple(sents)))
            passage_id += 1

    n_headings = int(rng.integers(1, 6))
    for h in range(n_headings):
        if not spend(1):
            break
        title = f"H{h}"
        n_subs = int(rng.integers(0, 4))
        children = []
        if n_subs == 0:
            make_passages((title,), int(rng.integers(0, 4)))
        else:
            # A heading may carry direct passages alongside its sub-sections.
            if rng.random() < 0.3:
                make_passages((title,), int(rng.integers(1, 3)))
            for s in range(n_subs):
                if not spend(1):
                    break
                sub_title = f"H{h}.{s}"
                children.append(Section(sub_title, 2))
                make_passages((title, sub_title), int(rng.integers(0, 4)))
        sections.append(Section(title, 1, children=tuple(children)))

    if not passages:
        # Graphs need at least one passage; retry with a fresh draw.
        return random_segmented_doc(rng, max_nodes)
    return SegmentedDocument(doc_id, tuple(passages)), tuple(sections)


# ---------------------------------------------------------------------------
# Label oracle


def oracle_label_ids(
    fb: FeedbackDocument,
    k: int,
    m: int,
    query_vecs: dict[tuple[str, int], np.ndarray],
    context_vecs: dict[int, np.ndarray],
    cosine: bool = False,
) -> frozenset[int]:
    """Score-sort-union reference: chunk sections into k-sentence windows,
    score every passage per window in float64, keep the top m (ties to the
    smaller passage id), union everything."""
    out: set[int] = set()
    for section in ("summary", "strengths", "weaknesses", "questions"):
        sentences = getattr(fb, section)
        windows = [sentences[i : i + k] for i in range(0, len(sentences), k)]
        for w_idx, _window in enumerate(windows):
            q = np.asarray(query_vecs[(section, w_idx)], dtype=np.float64)
            scored = []
            for pid, vec in context_vecs.items():
                v = np.asarray(vec, dtype=np.float64)
                if cosine:
                    nq, nv = np.linalg.norm(q), np.linalg.norm(v)
                    score = 0.0 if nq == 0 or nv == 0 else float(q @ v / (nq * nv))
                else:
                    score = float(q @ v)
                scored.append((score, pid))
            scored.sort(key=lambda t: (-t[0], t[1]))
            out.update(pid for _, pid in scored[:m])
    return frozenset(out)


# ---------------------------------------------------------------------------
# Dense attention oracle


def _dense_gat_layer(x, w, a, adj, slope=0.2):
    """One attention layer via a full masked V x V softmax; returns (V, H*O)."""
    n = x.shape[0]
    heads, out_dim, _ = w.shape
    cols = []
    for h in range(heads):
        z = x @ w[h].T
        s_dst = z @ a[h, :out_dim]
        s_src = z @ a[h, out_dim:]
        scores = s_dst[:, None] + s_src[None, :]
        scores = np.where(scores > 0, scores, slope * scores)
        scores = np.where(adj, scores, -np.inf)
        scores = scores - scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights = weights / weights.sum(axis=1, keepdims=True)
        cols.append(weights @ z)
    return np.concatenate(cols, axis=1), n


def dense_reference_logits(params: dict[str, np.ndarray], adj: np.ndarray, x: np.ndarray, passage_rows):
    """Full eval-mode forward with dense attention; mirrors the architecture
    from the written contract, not from the implementation."""

    def elu(v):
        return np.where(v > 0, v, np.expm1(np.minimum(v, 0)))

    def silu(v):
        return v / (1.0 + np.exp(-v))

    h, _ = _dense_gat_layer(x, params["l1.w"], params["l1.a"], adj)
    h = elu(h + x @ params["l1.res_w"].T + params["l1.res_b"])
    h2, _ = _dense_gat_layer(h, params["l2.w"], params["l2.a"], adj)
    h = elu(h2 + h @ params["l2.res_w"].T + params["l2.res_b"])
    h, _ = _dense_gat_layer(h, params["l3.w"], params["l3.a"], adj)

    hp = h[np.asarray(passage_rows)]
    hp = silu(hp @ params["mlp.w1"].T + params["mlp.b1"])
    hp = hp @ params["mlp.w2"].T + params["mlp.b2"]
    mu = hp.mean(axis=-1, keepdims=True)
    var = ((hp - mu) ** 2).mean(axis=-1, keepdims=True)
    hp = (hp - mu) / np.sqrt(var + 1e-5)
    hp = silu(hp * params["mlp.ln_g"] + params["mlp.ln_b"])
    return hp @ params["mlp.w3"].T + params["mlp.b3"]


def dense_adjacency(n_nodes: int, edges) -> np.ndarray:
    """Boolean (V, V) neighborhood matrix with self-loops."""
    adj = np.eye(n_nodes, dtype=bool)
    for e in edges:
        adj[e.src, e.dst] = True
        adj[e.dst, e.src] = True
    return adj
