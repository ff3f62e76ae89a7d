"""Small synthetic graphs used by tests and demos."""

from __future__ import annotations

import numpy as np

from .graph import Graph


def balanced_tree(depth: int, branching: int = 2) -> Graph:
    """Balanced tree whose leaves sit ``depth`` edges below the root (depth 5 binary -> 63 nodes)."""
    n = sum(branching**i for i in range(depth + 1))
    edges = [((i - 1) // branching, i) for i in range(1, n)]
    return Graph(n, np.array(edges))


def cycle(n: int) -> Graph:
    return Graph(n, np.array([(i, (i + 1) % n) for i in range(n)]))


def path(n: int) -> Graph:
    return Graph(n, np.array([(i, i + 1) for i in range(n - 1)]).reshape(-1, 2))


def star(leaves: int) -> Graph:
    return Graph(leaves + 1, np.array([(0, i) for i in range(1, leaves + 1)]))


def complete(n: int) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    return Graph(n, np.stack([iu, ju], axis=1))


def random_connected(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Random spanning tree plus Erdos-Renyi extra edges."""
    order = rng.permutation(n)
    edges = [(order[i], order[rng.integers(0, i)]) for i in range(1, n)]
    iu, ju = np.triu_indices(n, k=1)
    extra = rng.random(len(iu)) < p
    edges += list(zip(iu[extra], ju[extra]))
    return Graph(n, np.array(edges))


def sbm(
    sizes: list[int],
    p_in: float,
    p_out: float,
    rng: np.random.Generator,
    feat_dim: int = 8,
    signal: float = 2.0,
) -> Graph:
    """Stochastic block model with noisy Gaussian features centred per block."""
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = len(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    means = rng.normal(size=(len(sizes), feat_dim))
    means *= signal / np.linalg.norm(means, axis=1, keepdims=True)
    feats = means[labels] + rng.normal(scale=1.0, size=(n, feat_dim)) / np.sqrt(feat_dim)
    return Graph(n, np.stack([iu[keep], ju[keep]], axis=1), features=feats, labels=labels)


def xor_heterophilic(n: int, degree: int, rng: np.random.Generator, noise: float = 0.1) -> Graph:
    """Labels are XOR of two binary feature bits; every edge joins opposite labels."""
    bits = rng.integers(0, 2, size=(n, 2))
    labels = bits[:, 0] ^ bits[:, 1]
    feats = bits + rng.normal(scale=noise, size=(n, 2))
    zero, one = np.flatnonzero(labels == 0), np.flatnonzero(labels == 1)
    edges = set()
    for u in range(n):
        pool = one if labels[u] == 0 else zero
        for v in rng.choice(pool, size=min(degree, len(pool)), replace=False):
            edges.add((min(u, v), max(u, v)))
    return Graph(n, np.array(sorted(edges)), features=feats, labels=labels)
