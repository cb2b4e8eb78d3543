"""Seeded random streams and corrupted-triple sampling."""

from __future__ import annotations

import zlib
from typing import Container

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed`` (e.g. "init", "negatives")."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def sample_negative(
    n_entities,
    pos,
    rng: np.random.Generator,
    known: Container | None = None,
    max_tries: int = 100,
) -> tuple[int, int, int]:
    """Corrupt the head or the tail of ``pos`` with a uniformly drawn entity.

    ``n_entities`` may also be a KnowledgeGraph, whose facts then serve as
    ``known`` unless given explicitly.

    The replacement never equals the entity it replaces. Draws that hit a
    ``known`` fact are redrawn, up to
    ``max_tries`` times; the last draw is then accepted as is.
    """
    if hasattr(n_entities, "n_entities"):
        if known is None:
            known = n_entities.triple_set
        n_entities = n_entities.n_entities
    if n_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    h, r, t = (int(x) for x in pos)
    cand = (h, r, t)
    for _ in range(max_tries):
        # uniform over the entities other than the one being replaced
        e = int(rng.integers(n_entities - 1))
        if rng.random() < 0.5:
            cand = (e + (e >= h), r, t)
        else:
            cand = (h, r, e + (e >= t))
        if known is None or cand not in known:
            break
    return cand
