"""Readers for the engine's interchange files.

The engine emits one `<doc_id>.segments.json` per document (build-graph
--emit-segments) and one `<doc_id>.queries.json` per feedback document
(gen-labels --emit-queries). The sidecar turns them into (id, text) units:

  sentence     <doc_id>/s<sentence_id>      one per sentence
  dpr_context  <doc_id>/p<passage_id>       one per passage
  dpr_query    id taken verbatim from the query file

The input path may be one file or a directory; directories are scanned for
the role's file suffix and processed in sorted order so output is stable.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import EmptyInput, SidecarError

_SUFFIX = {
    "sentence": ".segments.json",
    "dpr_context": ".segments.json",
    "dpr_query": ".queries.json",
}


class InputError(SidecarError):
    """The input file is missing, unparsable, or malformed."""


def resolve_files(role: str, input_path: str | Path) -> list[Path]:
    path = Path(input_path)
    if path.is_file():
        return [path]
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.name.endswith(_SUFFIX[role]))
        if not files:
            raise EmptyInput(f"{path}: no *{_SUFFIX[role]} files for role {role}")
        return files
    raise InputError(f"no such file or directory: {input_path}")


def _load_json(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def _units_from_segments(path: Path, role: str) -> list[tuple[str, str]]:
    data = _load_json(path)
    try:
        doc_id = str(data["doc_id"])
        units: list[tuple[str, str]] = []
        for passage in data["passages"]:
            if role == "dpr_context":
                units.append((f"{doc_id}/p{int(passage['passage_id'])}", str(passage["text"])))
            else:
                for sentence in passage["sentences"]:
                    units.append(
                        (f"{doc_id}/s{int(sentence['sentence_id'])}", str(sentence["text"]))
                    )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed segment file: {exc!r}") from exc
    return units


def _units_from_queries(path: Path) -> list[tuple[str, str]]:
    data = _load_json(path)
    try:
        return [(str(q["id"]), str(q["text"])) for q in data["queries"]]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed query file: {exc!r}") from exc


def load_units(role: str, input_path: str | Path) -> list[tuple[str, str]]:
    """Collect every (id, text) unit for the role, in file-then-document order."""
    units: list[tuple[str, str]] = []
    for path in resolve_files(role, input_path):
        if role == "dpr_query":
            units.extend(_units_from_queries(path))
        else:
            units.extend(_units_from_segments(path, role))
    seen: set[str] = set()
    for entry_id, _ in units:
        if entry_id in seen:
            raise InputError(f"duplicate id across inputs: {entry_id!r}")
        seen.add(entry_id)
    if not units:
        raise EmptyInput(f"{input_path}: no texts to encode for role {role}")
    return units
