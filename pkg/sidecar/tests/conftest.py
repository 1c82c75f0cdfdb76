"""Shared fixtures: engine-shaped interchange files."""

from __future__ import annotations

import json

import pytest

from payloads import SIDECAR_ACCEPTANCE_LINES, queries_payload, segments_payload


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if SIDECAR_ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria (sidecar)")
        for line in SIDECAR_ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def segments_file(tmp_path):
    path = tmp_path / "doc-a.segments.json"
    path.write_text(json.dumps(segments_payload()) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def queries_file(tmp_path):
    path = tmp_path / "doc-a.queries.json"
    path.write_text(json.dumps(queries_payload()) + "\n", encoding="utf-8")
    return path
