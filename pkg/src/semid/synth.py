"""Seeded Gaussian-mixture corpora with controllable conflict rates."""
from __future__ import annotations

import numpy as np

from .core import EmbeddingSet


def gen_synthetic(n: int, d: int, clusters: int, spread: float, seed: int = 0,
                  intrinsic_dim: int | None = None, key_prefix: str = "doc") -> EmbeddingSet:
    """Draw ``n`` points around ``clusters`` random unit-norm means.

    Each point is its cluster mean plus Gaussian noise with expected norm
    about ``spread``; ``spread=0`` repeats each mean exactly. With
    ``intrinsic_dim`` set, each cluster's noise lives in its own random
    subspace of that dimension, which is the main lever on the greedy conflict
    rate (lower dimension, more conflicts). Values are rounded to float32 so
    binary files hold them exactly.
    """
    if n < 1 or clusters < 1 or d < 1:
        raise ValueError("n, d and clusters must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    if intrinsic_dim is not None and not 1 <= intrinsic_dim:
        raise ValueError("intrinsic_dim must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((clusters, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    member = rng.integers(clusters, size=n)
    if intrinsic_dim is None or intrinsic_dim >= d:
        noise = rng.standard_normal((n, d)) * (spread / np.sqrt(d))
    else:
        r = intrinsic_dim
        bases = np.linalg.qr(rng.standard_normal((clusters, d, r)))[0]
        z = rng.standard_normal((n, r)) * (spread / np.sqrt(r))
        noise = np.einsum("ndr,nr->nd", bases[member], z)
    X = (means[member] + noise).astype(np.float32).astype(np.float64)
    width = len(str(n - 1))
    keys = tuple(f"{key_prefix}{i:0{width}d}" for i in range(n))
    return EmbeddingSet(keys, X)
