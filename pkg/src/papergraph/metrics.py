"""Set precision/recall/F1 of predicted selections against label sets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DocMismatch
from .labels import LabelSet


@dataclass(frozen=True)
class Selection:
    """A predicted set of passage ids for one document."""

    doc_id: str
    passage_ids: frozenset[int]

    def sorted_ids(self) -> list[int]:
        return sorted(self.passage_ids)


@dataclass(frozen=True)
class SelectionScore:
    doc_id: str
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int


@dataclass(frozen=True)
class MacroScore:
    precision: float
    recall: float
    f1: float
    n_docs: int


def _rate(hits: int, total: int, other_total: int) -> float:
    # Vacuous case: nothing predicted and nothing to find counts as perfect.
    if total == 0:
        return 1.0 if other_total == 0 else 0.0
    return hits / total


def score_selection(pred: Selection, gold: LabelSet) -> SelectionScore:
    """Standard set overlap scores; empty-vs-empty scores as all ones."""
    if pred.doc_id != gold.doc_id:
        raise DocMismatch(f"selection is for {pred.doc_id}, labels for {gold.doc_id}")
    hits = len(pred.passage_ids & gold.passage_ids)
    precision = _rate(hits, len(pred.passage_ids), len(gold.passage_ids))
    recall = _rate(hits, len(gold.passage_ids), len(pred.passage_ids))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return SelectionScore(pred.doc_id, precision, recall, f1, len(pred.passage_ids), len(gold.passage_ids))


def macro_average(scores: list[SelectionScore]) -> MacroScore:
    """Unweighted mean of per-document rates."""
    n = len(scores)
    if n == 0:
        return MacroScore(0.0, 0.0, 0.0, 0)
    return MacroScore(
        sum(s.precision for s in scores) / n,
        sum(s.recall for s in scores) / n,
        sum(s.f1 for s in scores) / n,
        n,
    )


def format_scores(scores: list[SelectionScore]) -> str:
    """Tab-separated per-document rows plus a MACRO summary row."""
    lines = ["doc_id\tprecision\trecall\tf1\tn_pred\tn_gold"]
    for s in scores:
        lines.append(f"{s.doc_id}\t{s.precision:.4f}\t{s.recall:.4f}\t{s.f1:.4f}\t{s.n_pred}\t{s.n_gold}")
    m = macro_average(scores)
    lines.append(f"MACRO\t{m.precision:.4f}\t{m.recall:.4f}\t{m.f1:.4f}\t{m.n_docs}\t-")
    return "\n".join(lines) + "\n"


def write_selections(selections: list[Selection], path: str | Path) -> None:
    """One line per document: doc_id, then comma-separated passage ids."""
    lines = []
    for sel in sorted(selections, key=lambda s: s.doc_id):
        ids = ",".join(str(i) for i in sel.sorted_ids())
        lines.append(f"{sel.doc_id}\t{ids}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_selections(path: str | Path) -> list[Selection]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc_id, _, ids = line.partition("\t")
        out.append(Selection(doc_id, frozenset(int(i) for i in ids.split(",") if i != "")))
    return out


def pooled_binary_f1(pairs: list[tuple[frozenset[int], frozenset[int], frozenset[int]]]) -> float:
    """Micro F1 over (predicted, gold, universe) triples pooled across docs."""
    tp = fp = fn = 0
    for pred, gold, universe in pairs:
        tp += len(pred & gold)
        fp += len((pred - gold) & universe)
        fn += len(gold - pred)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom
