"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .kg_store import KnowledgeGraph, build_graph

__all__ = ["check_triples", "check_graph"]


def check_triples(X, n_entities: int | None = None, n_relations: int | None = None, allow_empty=False) -> np.ndarray:
    """Coerce ``X`` to an ``(n, 3)`` int64 array of (head, relation, tail) ids.

    Raises ValueError on a wrong shape, non-integral or negative ids, and ids
    outside the given vocabulary sizes.
    """
    if isinstance(X, KnowledgeGraph):
        return X.triples
    arr = np.asarray(X)
    if arr.size == 0:
        if not allow_empty:
            raise ValueError("expected at least one triple")
        return np.zeros((0, 3), dtype=np.int64)
    arr = check_array(arr, dtype=None, ensure_2d=True)
    if arr.shape[1] != 3:
        raise ValueError(f"triples must have 3 columns, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.issubdtype(arr.dtype, np.floating) or not np.all(arr == np.round(arr)):
            raise ValueError("triple ids must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0:
        raise ValueError("triple ids must be non-negative")
    if n_entities is not None and arr[:, [0, 2]].max() >= n_entities:
        raise ValueError(f"entity id {int(arr[:, [0, 2]].max())} outside [0, {n_entities})")
    if n_relations is not None and arr[:, 1].max() >= n_relations:
        raise ValueError(f"relation id {int(arr[:, 1].max())} outside [0, {n_relations})")
    return arr


def check_graph(X, n_entities: int | None = None, n_relations: int | None = None) -> KnowledgeGraph:
    """Return ``X`` if it is a KnowledgeGraph, else index it as an array of triples.

    Without ``n_entities`` the entity count is taken as ``max id + 1``.
    """
    if isinstance(X, KnowledgeGraph):
        return X
    arr = check_triples(X, n_entities, n_relations)
    if n_entities is None:
        n_entities = int(arr[:, [0, 2]].max()) + 1
    relations = None if n_relations is None else {str(i): i for i in range(n_relations)}
    return build_graph(arr, n_entities, relations=relations)
