"""Parsed-document representation, validation, and segmentation.

A parsed document is a section tree (heading -> optional sub-heading).
Segmentation splits every section body at newline characters into passages
and splits each passage into sentences with a deterministic rule-based
splitter. Passage and sentence ids are zero-based document-order indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyDocument, IoFailure

__all__ = [
    "Section",
    "ParsedDocument",
    "Sentence",
    "Passage",
    "SegmentedDocument",
    "validate_document",
    "segment_document",
    "split_sentences",
    "normalize_whitespace",
    "load_document",
    "document_to_json",
    "document_from_json",
    "segmented_to_json",
    "segmented_from_json",
]


@dataclass(frozen=True)
class Section:
    heading_text: str
    level: int
    body: str = ""
    children: tuple["Section", ...] = ()


@dataclass(frozen=True)
class ParsedDocument:
    doc_id: str
    title: str
    sections: tuple[Section, ...] = ()


@dataclass(frozen=True)
class Sentence:
    sentence_id: int
    text: str


@dataclass(frozen=True)
class Passage:
    passage_id: int
    section_path: tuple[str, ...]
    text: str
    sentences: tuple[Sentence, ...] = field(default=())


@dataclass(frozen=True)
class SegmentedDocument:
    doc_id: str
    passages: tuple[Passage, ...]


def validate_document(doc: ParsedDocument) -> list[str]:
    """Check document invariants; returns a violation message per breach.

    Violations are data, not exceptions: an empty list means the document
    is well-formed. Nesting deeper than two levels is legal here (it is
    flattened during segmentation), but level numbering must be consistent:
    top-level sections are level 1 and every child is parent level + 1.
    """
    violations: list[str] = []
    if not doc.doc_id:
        violations.append("doc_id empty")

    def check(section: Section, path: str, expected_level: int) -> None:
        if section.level != expected_level:
            violations.append(
                f"section {path!r}: level {section.level}, expected {expected_level}"
            )
        for child in section.children:
            check(child, f"{path}/{child.heading_text}", section.level + 1)

    for section in doc.sections:
        check(section, section.heading_text, 1)
    return violations


# Trailing tokens after which a period never ends a sentence.
_ABBREVIATIONS = frozenset(
    {
        "al", "cf", "dr", "e.g", "eq", "eqs", "etc", "fig", "figs", "i.e",
        "mr", "mrs", "ms", "no", "nos", "prof", "resp", "sec", "secs", "vs",
    }
)
_CLOSERS = "\"')]}’”"


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def _is_abbreviation(text: str, dot_index: int) -> bool:
    # Trailing alphabetic token (dots allowed inside, e.g. "e.g") before the period.
    end = dot_index
    start = end
    while start > 0 and (text[start - 1].isalpha() or text[start - 1] == "."):
        start -= 1
    token = text[start:end].strip(".")
    if not token:
        return False
    if len(token) == 1 and token.isupper():
        return True  # single-letter initial, as in "J. Smith"
    return token.lower() in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split a passage into sentences.

    A boundary is a terminal . ! ? (optionally followed by closing quotes
    or brackets), then whitespace, then an uppercase letter or digit, and
    the period must not terminate a known abbreviation. Joining the result
    with single spaces reconstructs the passage up to whitespace
    normalization.
    """
    n = len(text)
    sentences: list[str] = []
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in ".!?":
            j = i + 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            if j < n and text[j].isspace():
                k = j
                while k < n and text[k].isspace():
                    k += 1
                next_starts_sentence = k < n and (text[k].isupper() or text[k].isdigit())
                if next_starts_sentence and not (ch == "." and _is_abbreviation(text, i)):
                    piece = text[start:j].strip()
                    if piece:
                        sentences.append(piece)
                    start = k
                    i = k
                    continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _section_units(sections: tuple[Section, ...]):
    """Yield (section_path, body) in document order.

    Sections nested deeper than the sub-heading tier contribute their body
    under the nearest level-2 ancestor's path, preserving document order.
    """

    def descend_flattened(section: Section, path: tuple[str, ...]):
        for child in section.children:
            yield path, child.body
            yield from descend_flattened(child, path)

    for heading in sections:
        head_path = (heading.heading_text,)
        yield head_path, heading.body
        for sub in heading.children:
            sub_path = (heading.heading_text, sub.heading_text)
            yield sub_path, sub.body
            yield from descend_flattened(sub, sub_path)


def segment_document(doc: ParsedDocument) -> SegmentedDocument:
    """Split section bodies into passages (at newlines) and sentences.

    Blank-only segments are dropped. Assumes validate_document(doc) == [].
    Raises EmptyDocument when no section yields a passage.
    """
    passages: list[Passage] = []
    next_sentence_id = 0
    for path, body in _section_units(doc.sections):
        for segment in body.split("\n"):
            text = segment.strip()
            if not text:
                continue
            sentence_texts = split_sentences(text)
            sentences = tuple(
                Sentence(next_sentence_id + offset, s)
                for offset, s in enumerate(sentence_texts)
            )
            next_sentence_id += len(sentences)
            passages.append(Passage(len(passages), path, text, sentences))
    if not passages:
        raise EmptyDocument(f"document {doc.doc_id!r} has no passages")
    return SegmentedDocument(doc.doc_id, tuple(passages))


def document_from_json(data: dict) -> ParsedDocument:
    """Build a ParsedDocument from the on-disk JSON shape."""

    def section_from(obj: dict) -> Section:
        if not isinstance(obj, dict):
            raise ValueError(f"section entry is not an object: {obj!r}")
        try:
            heading = obj["heading_text"]
            level = obj["level"]
        except KeyError as exc:
            raise ValueError(f"section missing field {exc}") from None
        children = tuple(section_from(c) for c in obj.get("children", []))
        return Section(str(heading), int(level), str(obj.get("body", "")), children)

    if not isinstance(data, dict):
        raise ValueError("document file must contain a JSON object")
    for key in ("doc_id", "title", "sections"):
        if key not in data:
            raise ValueError(f"document missing field {key!r}")
    sections = tuple(section_from(s) for s in data["sections"])
    return ParsedDocument(str(data["doc_id"]), str(data["title"]), sections)


def document_to_json(doc: ParsedDocument) -> dict:
    def section_to(section: Section) -> dict:
        return {
            "heading_text": section.heading_text,
            "level": section.level,
            "body": section.body,
            "children": [section_to(c) for c in section.children],
        }

    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "sections": [section_to(s) for s in doc.sections],
    }


def load_document(path: str | Path) -> ParsedDocument:
    """Read a parsed-document JSON file (UTF-8)."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    return document_from_json(data)


def segmented_to_json(seg: SegmentedDocument) -> dict:
    return {
        "doc_id": seg.doc_id,
        "passages": [
            {
                "passage_id": p.passage_id,
                "section_path": list(p.section_path),
                "text": p.text,
                "sentences": [
                    {"sentence_id": s.sentence_id, "text": s.text} for s in p.sentences
                ],
            }
            for p in seg.passages
        ],
    }


def segmented_from_json(data: dict) -> SegmentedDocument:
    passages = tuple(
        Passage(
            int(p["passage_id"]),
            tuple(p["section_path"]),
            str(p["text"]),
            tuple(Sentence(int(s["sentence_id"]), str(s["text"])) for s in p["sentences"]),
        )
        for p in data["passages"]
    )
    return SegmentedDocument(str(data["doc_id"]), passages)
