"""Token feature providers.

The extractor consumes per-token embedding rows through a small interface:
``embed`` maps a token sequence to a (n, dim) float64 matrix, ``parameters``
exposes trainable arrays (possibly none) and ``backward`` turns a gradient on
the embedding rows into parameter gradients.

Two implementations:

* ``HashedFeatureProvider`` (default): each row mixes seeded-hash Gaussian
  vectors for the token and its immediate neighbors.  No trained weights,
  deterministic per (seed, dim, token sequence) — a cheap stand-in for a
  contextual encoder that is adequate for lexically planted corpora.
* ``LookupFeatureProvider``: a trainable embedding table addressed by a
  stable hash bucket per token.
"""
from __future__ import annotations

import hashlib
from typing import Mapping, Protocol, Sequence

import numpy as np


class FeatureProvider(Protocol):
    dim: int

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...

    def embed_isolated(self, tokens: Sequence[str]) -> np.ndarray: ...

    def parameters(self) -> dict[str, np.ndarray]: ...

    def backward(self, tokens: Sequence[str], grad: np.ndarray) -> dict[str, np.ndarray]: ...

    def config(self) -> dict: ...


def _stable_seed(*parts) -> int:
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little")


class HashedFeatureProvider:
    """Deterministic contextual token features from hash-seeded projections."""

    kind = "hashed"

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("feature dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _vec(self, key: str) -> np.ndarray:
        vec = self._cache.get(key)
        if vec is None:
            rng = np.random.Generator(np.random.PCG64(_stable_seed(self.seed, self.dim, key)))
            vec = rng.standard_normal(self.dim) / np.sqrt(self.dim)
            self._cache[key] = vec
        return vec

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        n = len(tokens)
        out = np.empty((n, self.dim))
        for i, tok in enumerate(tokens):
            left = tokens[i - 1] if i > 0 else "<s>"
            right = tokens[i + 1] if i < n - 1 else "</s>"
            out[i] = (self._vec("C|" + tok)
                      + 0.5 * self._vec("L|" + left)
                      + 0.5 * self._vec("R|" + right))
        return out

    def embed_isolated(self, tokens: Sequence[str]) -> np.ndarray:
        """Context-free rows: each token's own vector without neighbors.

        This is the view the value network scores label rows against; it
        identifies which words occur where without leaking the extractor's
        window context.
        """
        out = np.empty((len(tokens), self.dim))
        for i, tok in enumerate(tokens):
            out[i] = self._vec("C|" + tok)
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def backward(self, tokens: Sequence[str], grad: np.ndarray) -> dict[str, np.ndarray]:
        return {}

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "seed": self.seed}


class LookupFeatureProvider:
    """Trainable embedding table addressed by stable hash buckets."""

    kind = "lookup"

    def __init__(self, dim: int = 64, seed: int = 0, buckets: int = 4096):
        if dim < 1 or buckets < 1:
            raise ValueError("dim and buckets must be >= 1")
        self.dim = dim
        self.seed = seed
        self.buckets = buckets
        rng = np.random.Generator(np.random.PCG64(_stable_seed(seed, dim, buckets, "table")))
        self.table = rng.standard_normal((buckets, dim)) / np.sqrt(dim)

    def _indices(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([_stable_seed(self.seed, tok) % self.buckets for tok in tokens],
                        dtype=np.int64)

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        return self.table[self._indices(tokens)]

    def embed_isolated(self, tokens: Sequence[str]) -> np.ndarray:
        return self.embed(tokens)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"features/table": self.table}

    def backward(self, tokens: Sequence[str], grad: np.ndarray) -> dict[str, np.ndarray]:
        dtable = np.zeros_like(self.table)
        np.add.at(dtable, self._indices(tokens), grad)
        return {"features/table": dtable}

    def config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "seed": self.seed, "buckets": self.buckets}


def make_feature_provider(config: Mapping) -> FeatureProvider:
    kind = config.get("kind", "hashed")
    dim = int(config.get("dim", 64))
    seed = int(config.get("seed", 0))
    if kind == "hashed":
        return HashedFeatureProvider(dim=dim, seed=seed)
    if kind == "lookup":
        return LookupFeatureProvider(dim=dim, seed=seed, buckets=int(config.get("buckets", 4096)))
    raise ValueError(f"unknown feature provider kind {kind!r}")
