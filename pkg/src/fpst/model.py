"""The full graph model: tokenizer, stereographic encoder and task heads."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import geometry as geo
from .attention import Encoder
from .graph import Graph, laplacian_eigvecs, lift_to_manifold, to_torch, tokenize
from .nn import StLogitHead, uniform_


class GraphInputs:
    """Tensors derived once per graph: features, eigenvectors, edge index."""

    def __init__(self, g: Graph, features: np.ndarray, eigvecs: np.ndarray):
        self.graph = g
        self.features = to_torch(features)
        self.eigvecs = to_torch(eigvecs)
        self.edges = torch.as_tensor(g.edges, dtype=torch.long).reshape(-1, 2)

    @classmethod
    def build(cls, g: Graph, features: np.ndarray, k: int, random_flip: bool = False, rng=None) -> "GraphInputs":
        vec, _ = laplacian_eigvecs(g, min(k, g.n_nodes), random_flip, rng)
        return cls(g, features, vec)


class FPST(nn.Module):
    def __init__(
        self,
        in_dim: int,
        eig_dim: int,
        dim: int = 16,
        heads: int = 2,
        layers: int = 1,
        n_classes: int | None = None,
        mode: str = "linearized",
        act: str = "relu",
        dropout: float = 0.0,
        layernorm: bool = True,
        kappa_init: float = 0.0,
        learn_kappa: bool = True,
    ):
        super().__init__()
        self.dim, self.heads = dim, heads
        self.feat_proj = nn.Parameter(uniform_(torch.empty(in_dim, dim), in_dim))
        self.feat_bias = nn.Parameter(torch.zeros(dim))
        self.id_proj = nn.Parameter(uniform_(torch.empty(eig_dim, dim), eig_dim))
        self.type_emb = nn.Parameter(uniform_(torch.empty(2, dim), dim))
        self.dropout = dropout
        self.encoder = Encoder(
            dim, heads, layers, mode=mode, act=act, dropout=dropout, layernorm=layernorm, kappa_init=kappa_init
        )
        for b in self.encoder.blocks:
            b.kappa.requires_grad_(learn_kappa)
        self.head = StLogitHead(dim, n_classes) if n_classes else None

    def tokens(self, inp: GraphInputs) -> torch.Tensor:
        x = inp.features @ self.feat_proj + self.feat_bias
        ids = inp.eigvecs @ self.id_proj
        t = tokenize(x, None, inp.edges, ids, self.type_emb)
        return F.dropout(t, self.dropout, self.training)

    def forward(self, inp: GraphInputs) -> torch.Tensor:
        """Final-layer node representations (N, d) on the last signature."""
        x = lift_to_manifold(self.tokens(inp), self.encoder.first_signature)
        out = self.encoder(x)
        return out[: inp.graph.n_nodes]

    def logits(self, inp: GraphInputs) -> torch.Tensor:
        if self.head is None:
            raise RuntimeError("model was built without a classification head")
        return self.head(self(inp), self.encoder.last_signature)

    @property
    def signature(self) -> geo.ProductSignature:
        return self.encoder.last_signature

    def kappas(self) -> list[float]:
        return self.encoder.kappas()

    def post_step(self) -> None:
        if self.head is not None:
            self.head.project_(self.encoder.last_signature)
