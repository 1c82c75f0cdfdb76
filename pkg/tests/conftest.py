"""Shared fixtures: tiny documents and deterministic pseudo-embeddings."""

from __future__ import annotations

import hashlib

import numpy as np
import pytest

from papergraph.docmodel import ParsedDocument, Section, segment_document
from papergraph.graph import build_graph


def fake_vector(dim: int, *parts: str) -> np.ndarray:
    """Unit vector derived from a hash of the given strings; float32."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    seed = np.frombuffer(digest, dtype=np.uint64)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed.tolist())))
    vec = rng.standard_normal(dim)
    return (vec / np.linalg.norm(vec)).astype(np.float32)


# one line per acceptance criterion, echoed after capture ends so the
# verdicts always appear in the terminal output
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def figure_toy_document() -> ParsedDocument:
    """2 headings, 2 sub-headings, 4 passages, 6 sentences."""
    sections = (
        Section(
            "Introduction",
            1,
            children=(
                Section("Motivation", 2, body="First point. Second point.\nThird point here."),
                Section("Setup", 2, body="Fourth point. Fifth point."),
            ),
        ),
        Section("Conclusion", 1, body="Final remark."),
    )
    return ParsedDocument("toy-001", "Toy Paper", sections)


@pytest.fixture
def toy_doc() -> ParsedDocument:
    return figure_toy_document()


@pytest.fixture
def toy_graph(toy_doc):
    seg = segment_document(toy_doc)
    return build_graph(seg, toy_doc.sections), seg
