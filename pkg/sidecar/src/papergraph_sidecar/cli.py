"""papergraph-embed: encode engine interchange files into EMB1 tables.

    papergraph-embed sentence     segments/        sentences.emb --fake
    papergraph-embed dpr_context  segments/        contexts.emb  --fake
    papergraph-embed dpr_query    doc.queries.json queries.emb   --fake

Exit codes: 0 ok, 2 input error, 3 missing dependency (encoder could not
be loaded), 4 internal failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import EncoderLoadFailure, SidecarError, __version__
from .emb1 import write_table
from .fake import encode_fake
from .inputs import load_units

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING_DEP = 3
EXIT_INTERNAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="papergraph-embed",
        description="Encode sentences, passages, or query windows into an EMB1 table.",
    )
    parser.add_argument("role", choices=("sentence", "dpr_query", "dpr_context"))
    parser.add_argument("input", help="segment/query file, or a directory of them")
    parser.add_argument("output", help="EMB1 file to write")
    parser.add_argument("--batch", type=int, default=32, help="encoder batch size")
    parser.add_argument("--fake", action="store_true",
                        help="deterministic hash-derived unit vectors; no model needed")
    parser.add_argument("--seed", type=int, default=0, help="seed for --fake vectors")
    parser.add_argument("--model", default=None, help="override the pretrained model name")
    parser.add_argument("--version", action="version", version=f"papergraph-embed {__version__}")
    return parser


def run(args: argparse.Namespace) -> int:
    units = load_units(args.role, args.input)
    texts = [text for _, text in units]
    if args.fake:
        vectors = encode_fake(args.role, texts, args.seed)
    else:
        from .encoders import encode_real

        vectors = encode_real(args.role, texts, args.batch, args.model)
    records = [(entry_id, vectors[i]) for i, (entry_id, _) in enumerate(units)]
    out = Path(args.output)
    if out.parent and not out.parent.is_dir():
        out.parent.mkdir(parents=True, exist_ok=True)
    write_table(args.role, records, out)
    print(f"wrote {len(records)} {args.role} vectors (dim {vectors.shape[1]}) to {out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except EncoderLoadFailure as exc:
        print(f"papergraph-embed: {exc}", file=sys.stderr)
        return EXIT_MISSING_DEP
    except SidecarError as exc:
        print(f"papergraph-embed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"papergraph-embed: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
