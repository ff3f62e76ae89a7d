"""Graphs and their token sequences.

A graph with N nodes and M edges becomes N + M tokens: nodes first in id
order, then edges in input order.  Tokens carry node identifiers built from
Laplacian eigenvectors and a learned node/edge type embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import torch

from . import geometry as geo
from .geometry import ProductSignature
from .tensor import DTYPE


@dataclass
class Graph:
    n_nodes: int
    edges: np.ndarray  # (M, 2) int64, u < v, unique
    features: np.ndarray | None = None
    edge_features: np.ndarray | None = None
    labels: np.ndarray | None = None
    masks: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = canonical_edges(self.edges, self.n_nodes)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.shape[0] != self.n_nodes:
                raise ValueError(f"feature rows {self.features.shape[0]} != N={self.n_nodes}")
            if not np.isfinite(self.features).all():
                raise ValueError("node features contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n_nodes,):
                raise ValueError(f"labels shape {self.labels.shape} != ({self.n_nodes},)")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        return sp.csr_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(self.n_nodes, self.n_nodes))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes)

    def neighbors(self) -> list[np.ndarray]:
        adj = self.adjacency()
        return [adj.indices[adj.indptr[i] : adj.indptr[i + 1]] for i in range(self.n_nodes)]

    def relabel(self, perm: np.ndarray) -> "Graph":
        """Node i of self becomes node perm[i]."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        e = perm[self.edges]
        feats = None if self.features is None else self.features[inv]
        labels = None if self.labels is None else self.labels[inv]
        return Graph(self.n_nodes, e, feats, self.edge_features, labels)


def canonical_edges(edges, n_nodes: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= n_nodes):
        raise ValueError(f"edge endpoint outside [0, {n_nodes})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    _, idx = np.unique(e, axis=0, return_index=True)
    return e[np.sort(idx)]


def normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^-1/2 A D^-1/2; isolated nodes get a zero D^-1/2 entry."""
    a = g.adjacency().toarray()
    deg = a.sum(axis=1)
    dinv = np.zeros_like(deg)
    nz = deg > 0
    dinv[nz] = deg[nz] ** -0.5
    return np.eye(g.n_nodes) - dinv[:, None] * a * dinv[None, :]


def laplacian_eigvecs(g: Graph, k: int, random_flip: bool = False, rng: np.random.Generator | None = None):
    """Eigenvectors of the k smallest eigenvalues, ascending.

    Each column is signed so that its largest-magnitude entry (first one on
    ties) is positive.  Returns (vectors (N, k), eigenvalues (k,)).
    """
    if k > g.n_nodes:
        raise ValueError(f"k={k} exceeds number of nodes N={g.n_nodes}")
    lam, vec = np.linalg.eigh(normalized_laplacian(g))
    lam, vec = lam[:k], vec[:, :k].copy()
    for j in range(k):
        col = vec[:, j]
        mag = np.abs(col)
        i = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
        if col[i] < 0:
            vec[:, j] = -col
    if random_flip:
        rng = rng or np.random.default_rng()
        vec *= rng.choice([-1.0, 1.0], size=k)
    return vec, lam


def hop_premix(x: np.ndarray, g: Graph, hops: int) -> np.ndarray:
    """Apply X <- D^-1/2 (A + I) D^-1/2 X ``hops`` times."""
    if hops < 0:
        raise ValueError("hops must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if hops == 0:
        return x
    a = g.adjacency() + sp.identity(g.n_nodes, format="csr")
    dinv = sp.diags(np.asarray(a.sum(axis=1)).ravel() ** -0.5)
    s = (dinv @ a @ dinv).tocsr()
    for _ in range(hops):
        x = s @ x
    return x


def tokenize(
    node_feats: torch.Tensor,
    edge_feats: torch.Tensor | None,
    edges: torch.Tensor,
    ids: torch.Tensor,
    type_emb: torch.Tensor,
) -> torch.Tensor:
    """Node u -> X_u + 2 P_u + E_0; edge (u, v) -> X_uv + P_u + P_v + E_1.

    All inputs already have feature width d.  Returns ((N + M), d).
    """
    n, d = node_feats.shape
    if ids.shape != (n, d):
        raise ValueError(f"identifier shape {tuple(ids.shape)} != node features {(n, d)}")
    if type_emb.shape != (2, d):
        raise ValueError(f"type embedding shape {tuple(type_emb.shape)} != (2, {d})")
    nodes = node_feats + 2 * ids + type_emb[0]
    e = ids[edges[:, 0]] + ids[edges[:, 1]] + type_emb[1]
    if edge_feats is not None:
        e = e + edge_feats
    return torch.cat([nodes, e], dim=0)


def lift_to_manifold(tokens: torch.Tensor, sig: ProductSignature) -> torch.Tensor:
    return geo.prod_expmap0(geo.prod_clip_tangent(tokens, sig), sig)


def to_torch(a: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(a), dtype=DTYPE)
