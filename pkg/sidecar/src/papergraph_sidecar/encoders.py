"""Real pretrained encoders, loaded lazily.

The sentence role uses a sentence-transformers model; the retrieval roles
use the dual-encoder (query/context) models. Anything that prevents a
model from producing vectors — missing package, missing weights, no
network — surfaces as EncoderLoadFailure so the caller can fall back or
report a missing dependency. Inference runs in eval mode with gradients
off; with fixed weights it is deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np

from . import EncoderLoadFailure

DEFAULT_MODELS = {
    "sentence": "sentence-transformers/all-mpnet-base-v2",
    "dpr_query": "facebook/dpr-question_encoder-single-nq-base",
    "dpr_context": "facebook/dpr-ctx_encoder-single-nq-base",
}


def encode_real(role: str, texts: list[str], batch: int, model_name: str | None = None) -> np.ndarray:
    name = model_name or DEFAULT_MODELS[role]
    if role == "sentence":
        return _encode_sentences(name, texts, batch)
    return _encode_dpr(role, name, texts, batch)


def _encode_sentences(name: str, texts: list[str], batch: int) -> np.ndarray:
    try:
        from sentence_transformers import SentenceTransformer

        model = SentenceTransformer(name)
    except Exception as exc:  # import error, download failure, bad name
        raise EncoderLoadFailure(f"cannot load sentence encoder {name!r}: {exc}") from exc
    vecs = model.encode(
        texts,
        batch_size=batch,
        convert_to_numpy=True,
        normalize_embeddings=False,
        show_progress_bar=False,
    )
    return np.asarray(vecs, dtype=np.float32)


def _encode_dpr(role: str, name: str, texts: list[str], batch: int) -> np.ndarray:
    try:
        import torch
        from transformers import (
            DPRContextEncoder,
            DPRContextEncoderTokenizerFast,
            DPRQuestionEncoder,
            DPRQuestionEncoderTokenizerFast,
        )

        if role == "dpr_query":
            tokenizer = DPRQuestionEncoderTokenizerFast.from_pretrained(name)
            model = DPRQuestionEncoder.from_pretrained(name)
        else:
            tokenizer = DPRContextEncoderTokenizerFast.from_pretrained(name)
            model = DPRContextEncoder.from_pretrained(name)
    except Exception as exc:
        raise EncoderLoadFailure(f"cannot load {role} encoder {name!r}: {exc}") from exc
    model.eval()
    out: list[np.ndarray] = []
    with torch.no_grad():
        for i in range(0, len(texts), batch):
            chunk = texts[i : i + batch]
            tokens = tokenizer(chunk, padding=True, truncation=True, return_tensors="pt")
            pooled = model(**tokens).pooler_output
            out.append(pooled.cpu().numpy().astype(np.float32))
    return np.concatenate(out, axis=0)
