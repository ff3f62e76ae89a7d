"""Product-stereographic multi-head attention and the Transformer encoder.

Each head h owns a curvature kappa_h.  Values are points of the head's
stereographic space, queries and keys are tangent vectors at those values.
Scores are computed at the origin after parallel transport, passed through the
positive feature map ``phi(u) = elu(u) + 1`` and used as Einstein-midpoint
weights.  The linearized path reassociates the same sums so that nothing of
size n x n is ever formed.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from . import geometry as geo
from .geometry import EPS_DEN, ProductSignature
from .nn import StFFN, StLayerNorm, interlayer_transfer, uniform_
from .tensor import DomainError, check_finite

MODES = ("dense", "linearized")
VALUE_FRAC = 0.5 * (1 - 1e-3)


def phi(u: torch.Tensor) -> torch.Tensor:
    return F.elu(u) + 1


def qkv_project(x: torch.Tensor, wq: torch.Tensor, wk: torch.Tensor, wv: torch.Tensor, sig: ProductSignature, k):
    """Queries/keys as tangent vectors at the values; values on the head's space.

    ``x`` is (n, d) on ``sig``; weights are (d, d').
    """
    u = geo.prod_logmap0(x, sig)
    return u @ wq, u @ wk, value_map(u @ wv, k)


def value_map(u: torch.Tensor, k) -> torch.Tensor:
    """exp0 onto the head's space; on a sphere values stay in the open hemisphere (lambda > 1)."""
    return geo.expmap0(geo.clip_tangent(u, k, VALUE_FRAC), k)


def attention_scores(q: torch.Tensor, key: torch.Tensor, v: torch.Tensor, k) -> torch.Tensor:
    """alpha_ij = phi(PT_{V_i->0} Q_i) . phi(PT_{V_j->0} K_j), an (n, n) matrix."""
    fq = phi(geo.transport0(v, q, k))
    fk = phi(geo.transport0(v, key, k))
    return fq @ fk.T


def aggregate_dense(v: torch.Tensor, alpha: torch.Tensor, k, eps: float = EPS_DEN) -> torch.Tensor:
    return geo.einstein_midpoint(v, alpha, k, eps)


def aggregate_linearized(q: torch.Tensor, key: torch.Tensor, v: torch.Tensor, k, eps: float = EPS_DEN) -> torch.Tensor:
    """Einstein-midpoint aggregation in O(n d'^2) time and O(n d' + d'^2) memory."""
    lam = geo.conformal_factor(v, k)  # (n, 1)
    lm1 = lam - 1
    if bool((lm1.abs() < 1e-9).any()):
        raise DomainError("conformal factor too close to 1 for linearized aggregation")
    fq = phi(geo.transport0(v, q, k))
    fk = phi(geo.transport0(v, key, k)) * lm1
    v_t = lam / lm1 * v
    kv = fk.T @ v_t  # (d', d')
    num = fq @ kv
    den = fq @ fk.sum(dim=0, keepdim=True).T  # (n, 1)
    if bool((den <= eps).any()):
        bad = torch.nonzero((den <= eps).reshape(-1))[0].item()
        raise DomainError(f"linearized normalizer <= {eps} at row {bad}")
    return geo.mobius_scalar(0.5, num / den, k)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, mode: str = "linearized"):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        dh = dim // heads
        self.heads, self.mode = heads, mode
        self.wq = nn.Parameter(uniform_(torch.empty(heads, dim, dh), dim))
        self.wk = nn.Parameter(uniform_(torch.empty(heads, dim, dh), dim))
        self.wv = nn.Parameter(uniform_(torch.empty(heads, dim, dh), dim))

    def forward(self, x: torch.Tensor, sig: ProductSignature) -> torch.Tensor:
        u = geo.prod_logmap0(x, sig)
        out = []
        for h in range(self.heads):
            k = sig.kappas[h]
            q, key, v = u @ self.wq[h], u @ self.wk[h], value_map(u @ self.wv[h], k)
            if self.mode == "dense":
                out.append(aggregate_dense(v, attention_scores(q, key, v, k), k))
            else:
                out.append(aggregate_linearized(q, key, v, k))
        return torch.cat(out, dim=-1)


class TransformerBlock(nn.Module):
    """Pre-LN block: X = MHA(LN(X_in)) (+) X_in; X_out = FFN(LN(X)) (+) X.

    ``kappa`` holds this layer's per-head curvatures.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        mode: str = "linearized",
        hidden: int | None = None,
        act: str = "relu",
        dropout: float = 0.0,
        layernorm: bool = True,
        kappa_init: float = 0.0,
    ):
        super().__init__()
        self.kappa = nn.Parameter(torch.full((heads,), float(kappa_init)))
        self.head_dim = dim // heads
        self.attn = MultiHeadAttention(dim, heads, mode)
        self.ffn = StFFN(dim, hidden or 2 * dim, act, dropout)
        self.ln1 = StLayerNorm(dim) if layernorm else None
        self.ln2 = StLayerNorm(dim) if layernorm else None

    @property
    def signature(self) -> ProductSignature:
        return ProductSignature(self.kappa, self.head_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        sig = self.signature
        h = self.ln1(x, sig) if self.ln1 is not None else x
        x = geo.prod_mobius_add(self.attn(h, sig), x, sig)
        h = self.ln2(x, sig) if self.ln2 is not None else x
        x = geo.prod_mobius_add(self.ffn(h, sig), x, sig)
        return check_finite(x, "transformer block output")


class Encoder(nn.Module):
    """Stack of blocks; between layers points move via exp0^{l+1} o log0^{l}."""

    def __init__(self, dim: int, heads: int, layers: int, **block_kw):
        super().__init__()
        if layers < 1:
            raise ValueError("need at least one layer")
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads, **block_kw) for _ in range(layers))

    @property
    def first_signature(self) -> ProductSignature:
        return self.blocks[0].signature

    @property
    def last_signature(self) -> ProductSignature:
        return self.blocks[-1].signature

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i + 1 < len(self.blocks):
                x = interlayer_transfer(x, block.signature, self.blocks[i + 1].signature)
        return x

    def kappas(self) -> list[float]:
        return [float(k) for b in self.blocks for k in b.kappa.detach()]


def encode(x: torch.Tensor, encoder: Encoder) -> tuple[torch.Tensor, ProductSignature]:
    return encoder(x), encoder.last_signature
