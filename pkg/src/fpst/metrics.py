"""Objectives and evaluation metrics."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse.csgraph as csgraph
import torch
import torch.nn.functional as F

from . import geometry as geo
from .geometry import ProductSignature
from .graph import Graph


def pairwise_distances(h: torch.Tensor, sig: ProductSignature, cols: torch.Tensor | None = None) -> torch.Tensor:
    """Product distances between rows of h (N, d): (N, N), or (N, K) against ``cols``."""
    if cols is None:
        return geo.product_distance(h.unsqueeze(1), h.unsqueeze(0), sig)
    return geo.product_distance(h.unsqueeze(1), h[cols], sig)


def nonneighbor_mask(g: Graph) -> np.ndarray:
    mask = ~g.adjacency().toarray().astype(bool)
    np.fill_diagonal(mask, False)
    return mask


def directed_edges(g: Graph) -> np.ndarray:
    return np.concatenate([g.edges, g.edges[:, ::-1]])


def reconstruction_loss(
    h: torch.Tensor,
    g: Graph,
    sig: ProductSignature,
    neg_samples: int | None = None,
    rng: np.random.Generator | None = None,
    mask: np.ndarray | None = None,
) -> torch.Tensor:
    """-sum over (u, v) of log softmax of -d(u, v) against {v} and u's non-neighbors.

    Edges count in both orientations.  ``neg_samples=None`` uses every
    non-neighbor; otherwise K candidates per anchor are drawn uniformly and
    those that are neighbors (or u itself) are dropped.
    """
    e = directed_edges(g)
    if len(e) == 0:
        return h.sum() * 0
    u, v = torch.as_tensor(e[:, 0]), torch.as_tensor(e[:, 1])
    if neg_samples is None:
        dist = pairwise_distances(h, sig)
        neg = torch.as_tensor(nonneighbor_mask(g) if mask is None else mask)
        scores = -dist
    else:
        rng = rng or np.random.default_rng()
        cand = rng.integers(0, g.n_nodes, size=(g.n_nodes, neg_samples))
        adj = g.adjacency()
        is_nbr = np.asarray(adj[np.repeat(np.arange(g.n_nodes), neg_samples), cand.ravel()]).reshape(cand.shape) > 0
        neg = torch.as_tensor(~is_nbr & (cand != np.arange(g.n_nodes)[:, None]))
        scores = -pairwise_distances(h, sig, torch.as_tensor(cand))
    has_neg = neg.any(dim=1)
    safe = torch.where(neg | ~has_neg[:, None], scores, torch.full_like(scores, -torch.inf))
    lse_neg = torch.where(has_neg, torch.logsumexp(safe, dim=1), torch.full_like(has_neg, -torch.inf, dtype=h.dtype))
    pos = -geo.product_distance(h[u], h[v], sig)
    return (torch.logaddexp(pos, lse_neg[u]) - pos).sum()


def average_precision(dist_row: np.ndarray, u: int, relevant: np.ndarray) -> float:
    order = np.argsort(dist_row, kind="stable")
    order = order[order != u]
    hits = np.isin(order, relevant)
    ranks = np.flatnonzero(hits) + 1
    # correctly rounded sums keep the result independent of summation order
    return math.fsum((np.arange(1, len(ranks) + 1) / ranks).tolist()) / len(ranks)


def map_from_distances(dist: np.ndarray, g: Graph) -> float:
    """Mean over non-isolated nodes of AP of the true neighbors; ties by node id."""
    nbrs = g.neighbors()
    aps = [average_precision(dist[u], u, nbrs[u]) for u in range(g.n_nodes) if len(nbrs[u])]
    return math.fsum(aps) / len(aps) if aps else 0.0


def map_score(h: torch.Tensor, g: Graph, sig: ProductSignature, chunk: int = 1024) -> float:
    if g.n_nodes < 2:
        raise ValueError("mAP needs at least two nodes")
    with torch.no_grad():
        rows = [pairwise_distances_block(h, sig, s, chunk) for s in range(0, g.n_nodes, chunk)]
    return map_from_distances(np.concatenate(rows), g)


def pairwise_distances_block(h, sig, start, chunk):
    return geo.product_distance(h[start : start + chunk].unsqueeze(1), h.unsqueeze(0), sig).numpy()


def node_clf_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits, labels)


def classification_metrics(preds, labels, mask=None) -> dict[str, float]:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if mask is not None:
        preds, labels = preds[mask], labels[mask]
    if len(labels) == 0:
        raise ValueError("empty evaluation set")
    acc = float(np.mean(preds == labels))
    # micro-F1 pools TP/FP/FN over classes; for single-label data it equals accuracy
    tp = float(np.sum(preds == labels))
    fp = fn = len(labels) - tp
    f1 = 2 * tp / (2 * tp + fp + fn)
    return {"accuracy": acc, "micro_f1": f1}


def homophily(g: Graph) -> float:
    if g.labels is None:
        raise ValueError("graph has no labels")
    if g.n_edges == 0:
        raise ValueError("graph has no edges")
    y = g.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))


def hop_distances(g: Graph) -> np.ndarray:
    return csgraph.shortest_path(g.adjacency(), method="D", unweighted=True)


def graph_sectional_curvature(g: Graph, m: int, b: int, c: int, dist: np.ndarray | None = None) -> float:
    """K_G(m; b, c) = mean_a [d(a,m)^2 + d(b,c)^2/4 - (d(a,b)^2 + d(a,c)^2)/2]."""
    if b == c:
        raise ValueError("b and c must be distinct")
    if dist is None:
        dist = hop_distances(g)
    if not np.isfinite(dist).all():
        raise ValueError("graph is disconnected")
    if dist[m, b] != 1 or dist[m, c] != 1:
        raise ValueError(f"{b} and {c} must both be neighbors of {m}")
    terms = dist[:, m] ** 2 + dist[b, c] ** 2 / 4 - (dist[:, b] ** 2 + dist[:, c] ** 2) / 2
    return float(terms.mean())


def curvature_histogram(g: Graph, samples_per_node: int, seed: int = 0) -> list[float]:
    """K_G over up to ``samples_per_node`` neighbor pairs (b < c) of every node with degree >= 2."""
    rng = np.random.default_rng(seed)
    dist = hop_distances(g)
    out = []
    for m, nb in enumerate(g.neighbors()):
        if len(nb) < 2:
            continue
        iu, ju = np.triu_indices(len(nb), k=1)
        pick = np.arange(len(iu))
        if len(iu) > samples_per_node:
            pick = np.sort(rng.choice(len(iu), size=samples_per_node, replace=False))
        out.extend(graph_sectional_curvature(g, m, nb[iu[i]], nb[ju[i]], dist) for i in pick)
    return out
