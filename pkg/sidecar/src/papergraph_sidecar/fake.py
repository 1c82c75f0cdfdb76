"""Deterministic fake encoder: no model downloads, stable across runs.

Each vector is a unit-normalized draw from a PCG64 stream seeded with
sha256(seed, role, text), so the vector is a pure function of the text —
byte-identical texts get byte-identical vectors (cosine 1.0) no matter
which document or id they came from, mirroring how a real frozen encoder
behaves.
"""

from __future__ import annotations

import hashlib

import numpy as np

DIM = 768


def fake_vector(seed: int, role: str, text: str, dim: int = DIM) -> np.ndarray:
    material = f"{seed}\x1f{role}\x1f{text}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    words = np.frombuffer(digest, dtype=np.uint64)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words.tolist())))
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32)


def encode_fake(role: str, texts: list[str], seed: int, dim: int = DIM) -> np.ndarray:
    return np.stack([fake_vector(seed, role, text, dim) for text in texts])
