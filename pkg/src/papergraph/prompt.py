"""Prompt assembly and the token-reduction report.

The template is frozen; goldens in the test suite pin it byte for byte.
Selected passages go under the "Research Paper Passages" heading separated
by single blank lines. Training mode appends the four feedback sections;
inference mode stops after the feedback heading, so the inference output
is always a strict prefix of the training output for the same selection.

Token counts are whitespace-delimited. That is the simplest reproducible
counter; absolute numbers are not comparable across tokenizers, ratios are
the quantity that matters here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .docmodel import SegmentedDocument
from .errors import EmptySelection, UnknownPassageId
from .labels import FeedbackDocument

TEMPLATE_HEADER = (
    "Below is an instruction that describes a task,\n"
    "paired with an input that provides further\n"
    "context. Write a response that appropriately\n"
    "completes the request.\n"
    "\n"
    "### Instruction:\n"
    "\n"
    "Generate a structured feedback for the research\n"
    "paper passages provided below. The feedback\n"
    "should include a summary of the paper, its\n"
    "strengths, weaknesses, and questions for\n"
    "the authors. Consider that the feedback is being\n"
    "given for a paper submitted to the ICLR conference.\n"
    "\n"
    "### Research Paper Passages:\n"
)

FEEDBACK_HEADING = "### Feedback for the paper:\n"

_SECTION_HEADINGS = (
    ("summary", "**Summary**"),
    ("strengths", "**Strengths**"),
    ("weaknesses", "**Weaknesses**"),
    ("questions", "**Questions**"),
)


@dataclass(frozen=True)
class PromptBundle:
    """Inputs for one prompt: ordered passage texts, optional feedback."""

    doc_id: str
    passages: tuple[str, ...]
    mode: str = "infer"
    feedback: FeedbackDocument | None = None

    def __post_init__(self):
        if self.mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {self.mode!r}")
        if self.mode == "train" and self.feedback is None:
            raise ValueError("train mode requires a feedback document")


def assemble_prompt(b: PromptBundle) -> str:
    """Render the bundle to the exact prompt text."""
    if not b.passages:
        raise EmptySelection(f"no passages selected for {b.doc_id}")
    parts = [TEMPLATE_HEADER, "\n", "\n\n".join(b.passages), "\n\n", FEEDBACK_HEADING]
    if b.mode == "train":
        sections = [
            heading + "\n\n" + " ".join(getattr(b.feedback, attr))
            for attr, heading in _SECTION_HEADINGS
        ]
        parts.append("\n" + "\n\n".join(sections) + "\n")
    return "".join(parts)


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count."""
    return len(text.split())


@dataclass(frozen=True)
class DocReduction:
    doc_id: str
    full_tokens: int
    selected_tokens: int
    full_passages: int
    selected_passages: int


@dataclass(frozen=True)
class ReductionReport:
    rows: tuple[DocReduction, ...]
    avg_full_tokens: float
    avg_selected_tokens: float
    avg_full_passages: float
    avg_selected_passages: float

    @property
    def token_ratio(self) -> float:
        """Corpus-level selected/full token ratio (pooled, not mean of ratios)."""
        full = sum(r.full_tokens for r in self.rows)
        return sum(r.selected_tokens for r in self.rows) / full if full else 1.0


def reduction_report(
    docs: list[SegmentedDocument], selections: dict[str, frozenset[int] | set[int]]
) -> ReductionReport:
    """Token and passage counts, full vs selected, per document and averaged."""
    rows = []
    for doc in docs:
        known = {p.passage_id for p in doc.passages}
        chosen = set(selections.get(doc.doc_id, set()))
        stray = sorted(chosen - known)
        if stray:
            raise UnknownPassageId(f"{doc.doc_id}: unknown passage ids {stray}")
        full_tokens = sum(count_tokens(p.text) for p in doc.passages)
        sel_tokens = sum(count_tokens(p.text) for p in doc.passages if p.passage_id in chosen)
        rows.append(
            DocReduction(doc.doc_id, full_tokens, sel_tokens, len(doc.passages), len(chosen))
        )
    n = len(rows)
    if n == 0:
        return ReductionReport((), 0.0, 0.0, 0.0, 0.0)
    return ReductionReport(
        tuple(rows),
        sum(r.full_tokens for r in rows) / n,
        sum(r.selected_tokens for r in rows) / n,
        sum(r.full_passages for r in rows) / n,
        sum(r.selected_passages for r in rows) / n,
    )


def format_report(report: ReductionReport) -> str:
    """Tab-separated table with a trailing corpus-average row."""
    lines = ["doc_id\tfull_tokens\tselected_tokens\tfull_passages\tselected_passages"]
    for r in report.rows:
        lines.append(
            f"{r.doc_id}\t{r.full_tokens}\t{r.selected_tokens}\t{r.full_passages}\t{r.selected_passages}"
        )
    lines.append(
        "AVERAGE\t%.2f\t%.2f\t%.2f\t%.2f"
        % (
            report.avg_full_tokens,
            report.avg_selected_tokens,
            report.avg_full_passages,
            report.avg_selected_passages,
        )
    )
    return "\n".join(lines) + "\n"
