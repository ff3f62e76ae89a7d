"""Stereographic neural layers.

Every layer here follows one pattern: pull the product-space input back to
the tangent space at the origin, run a Euclidean map there, push the result
forward again, ``exp0(f(log0(X)))`` blockwise.  At kappa = 0 both maps are the
identity and each layer is exactly its Euclidean counterpart.
"""

from __future__ import annotations

import math
from typing import Callable

import torch
import torch.nn.functional as F
from torch import nn

from . import geometry as geo
from .geometry import ProductSignature

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "relu": torch.relu,
    "elu": F.elu,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
}
EPS_LN = 1e-5


def activation(kind: str) -> Callable[[torch.Tensor], torch.Tensor]:
    try:
        return ACTIVATIONS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)}") from None


def st_wrap(
    f: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    sig: ProductSignature,
    out_sig: ProductSignature | None = None,
    in_width: int | None = None,
    out_width: int | None = None,
) -> torch.Tensor:
    """exp0(f(log0(x))) blockwise; ``out_sig`` defaults to ``sig``.

    On positively curved blocks f's output is clipped to the injectivity
    radius before exp0.
    """
    out_sig = sig if out_sig is None else out_sig
    u = geo.prod_logmap0(x, sig, in_width)
    return geo.prod_expmap0(geo.prod_clip_tangent(f(u), out_sig, out_width), out_sig, out_width)


def uniform_(w: torch.Tensor, fan_in: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        return w.uniform_(-bound, bound)


class StLinear(nn.Module):
    """Bias-free stereographic linear map ``exp0(log0(X) W)``."""

    def __init__(self, d_in: int, d_out: int):
        super().__init__()
        self.weight = nn.Parameter(uniform_(torch.empty(d_in, d_out), d_in))

    def forward(self, x, sig, out_sig=None, in_width=None, out_width=None):
        return st_wrap(lambda u: u @ self.weight, x, sig, out_sig, in_width, out_width)


def st_linear(x: torch.Tensor, weight: torch.Tensor, sig: ProductSignature, **kw) -> torch.Tensor:
    return st_wrap(lambda u: u @ weight, x, sig, **kw)


def st_activation(x: torch.Tensor, kind: str, sig: ProductSignature, width: int | None = None) -> torch.Tensor:
    return st_wrap(activation(kind), x, sig, in_width=width, out_width=width)


def layer_norm(u: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, eps: float = EPS_LN) -> torch.Tensor:
    mu = u.mean(dim=-1, keepdim=True)
    var = ((u - mu) ** 2).mean(dim=-1, keepdim=True)
    return (u - mu) / torch.sqrt(var + eps) * gain + bias


class StLayerNorm(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, x, sig):
        return st_wrap(lambda u: layer_norm(u, self.gain, self.bias), x, sig)


def st_layernorm(x, gain, bias, sig):
    return st_wrap(lambda u: layer_norm(u, gain, bias), x, sig)


class StFFN(nn.Module):
    """st_linear -> st_activation -> st_linear with hidden width ``hidden``.

    The inner Euclidean maps mix all H blocks, which is where information
    crosses between the per-head geometries.  Dropout acts on tangent
    coordinates only, right before the hidden exp0.
    """

    def __init__(self, dim: int, hidden: int, act: str = "relu", dropout: float = 0.0):
        super().__init__()
        self.lin1 = StLinear(dim, hidden)
        self.lin2 = StLinear(hidden, dim)
        self.act = act
        self.dropout = dropout
        self.hidden = hidden

    def forward(self, x, sig):
        hw = self.hidden // sig.heads
        drop = lambda u: F.dropout(u @ self.lin1.weight, self.dropout, self.training)  # noqa: E731
        h = st_wrap(drop, x, sig, out_width=hw)
        h = st_activation(h, self.act, sig, width=hw)
        return self.lin2(h, sig, in_width=hw)


def st_ffn(x, w1, w2, act, sig):
    hw = w1.shape[1] // sig.heads
    h = st_linear(x, w1, sig, out_width=hw)
    h = st_activation(h, act, sig, width=hw)
    return st_linear(h, w2, sig, in_width=hw)


def interlayer_transfer(x: torch.Tensor, sig_from: ProductSignature, sig_to: ProductSignature) -> torch.Tensor:
    """Move points between product spaces through the shared tangent space at the origin."""
    if sig_from.dim != sig_to.dim or sig_from.heads != sig_to.heads:
        raise ValueError("transfer needs matching dimension and head count")
    return geo.prod_expmap0(geo.prod_clip_tangent(geo.prod_logmap0(x, sig_from), sig_to), sig_to)


# ---------------------------------------------------------------------------
# logits


def st_logits(x: torch.Tensor, a: torch.Tensor, p: torch.Tensor, sig: ProductSignature) -> torch.Tensor:
    """Signed, scaled hyperplane distances: one logit per class.

    ``x`` is (n, d); ``a`` and ``p`` are (C, d).  Per block the logit is
    ``sign(<-p (+) x, a>) * lambda_p |a| * d(x, H_{a,p})``; blocks are summed.
    """
    n, C = x.shape[0], a.shape[0]
    xs, as_, ps = sig.split(x), sig.split(a), sig.split(p)
    total = x.new_zeros(n, C)
    for h in range(sig.heads):
        k = sig.kappas[h]
        xb = xs[h].unsqueeze(1)  # (n, 1, d')
        ab = as_[h].unsqueeze(0)  # (1, C, d')
        pb = ps[h].unsqueeze(0)
        dist = geo.hyperplane_distance(xb, ab, pb, k, signed=True)
        scale = geo.conformal_factor(ps[h], k, keepdim=False) * geo.norm(as_[h])
        total = total + scale.unsqueeze(0) * dist
    return total


class StLogitHead(nn.Module):
    """Per-class hyperplanes (a_c, p_c) in the final product space."""

    def __init__(self, dim: int, n_classes: int):
        super().__init__()
        self.a = nn.Parameter(uniform_(torch.empty(n_classes, dim), dim))
        self.p = nn.Parameter(torch.zeros(n_classes, dim))

    def forward(self, x, sig):
        return st_logits(x, self.a, self.p, sig)

    def project_(self, sig: ProductSignature) -> None:
        with torch.no_grad():
            self.p.copy_(geo.prod_project(self.p, sig))
