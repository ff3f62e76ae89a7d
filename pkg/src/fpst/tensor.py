"""Tensor plumbing on top of PyTorch.

All math in the package runs on float64 torch tensors with autograd. This
module adds the pieces torch does not give us directly: finiteness guards,
checked domain ops, a two-group Adam wrapper that refuses missing gradients,
and a central-difference gradient checker.
"""

from __future__ import annotations

from typing import Callable, Iterable

import torch
from torch import nn

DTYPE = torch.float64
KAPPA_MAX = 10.0

torch.set_default_dtype(DTYPE)


class NonFiniteError(FloatingPointError):
    """Raised when a computation produces NaN or Inf."""


class DomainError(ValueError):
    """Raised when an op is evaluated outside its mathematical domain."""


def tensor(data, requires_grad: bool = False) -> torch.Tensor:
    return torch.tensor(data, dtype=DTYPE, requires_grad=requires_grad)


def check_finite(t: torch.Tensor, what: str = "tensor") -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        bad = int((~torch.isfinite(t)).sum())
        raise NonFiniteError(f"{what} has {bad} non-finite value(s), shape {tuple(t.shape)}")
    return t


def safe_log(x: torch.Tensor) -> torch.Tensor:
    if bool((x <= 0).any()):
        raise DomainError(f"log of non-positive value (min {float(x.min())})")
    return torch.log(x)


def safe_sqrt(x: torch.Tensor) -> torch.Tensor:
    if bool((x < 0).any()):
        raise DomainError(f"sqrt of negative value (min {float(x.min())})")
    return torch.sqrt(x)


def sign(x: torch.Tensor) -> torch.Tensor:
    """Piecewise-constant sign; gradient is zero everywhere."""
    return torch.sign(x).detach()


def norm(x: torch.Tensor, dim: int = -1, keepdim: bool = False, min_norm: float = 0.0) -> torch.Tensor:
    """L2 norm along ``dim``; ``min_norm > 0`` makes it differentiable at zero."""
    sq = (x * x).sum(dim=dim, keepdim=keepdim)
    if min_norm > 0:
        return sq.clamp_min(min_norm * min_norm).sqrt()
    return sq.sqrt()


def is_curvature(name: str) -> bool:
    return name.split(".")[-1] == "kappa"


def param_groups(model: nn.Module) -> tuple[list[tuple[str, nn.Parameter]], list[tuple[str, nn.Parameter]]]:
    """Split named parameters into (weights, curvatures)."""
    weights, curvs = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        (curvs if is_curvature(name) else weights).append((name, p))
    return weights, curvs


class Adam:
    """Adam with a weights group and a curvatures group.

    Wraps ``torch.optim.Adam``. Every step first checks that each parameter
    received a gradient, then updates, zeroes gradients, clamps curvatures to
    ``[-KAPPA_MAX, KAPPA_MAX]`` and runs the model's post-step hooks (ball
    projection of manifold-valued parameters).
    """

    def __init__(
        self,
        model: nn.Module,
        lr_weights: float = 1e-2,
        lr_curvatures: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.model = model
        weights, curvs = param_groups(model)
        self.named = weights + curvs
        self.curvatures = [p for _, p in curvs]
        groups = []
        if weights:
            groups.append({"params": [p for _, p in weights], "lr": lr_weights, "weight_decay": weight_decay})
        if curvs:
            groups.append({"params": self.curvatures, "lr": lr_curvatures, "weight_decay": 0.0})
        self.opt = torch.optim.Adam(groups, betas=betas, eps=eps)

    @property
    def state(self):
        return self.opt.state

    def step(self) -> None:
        missing = [name for name, p in self.named if p.grad is None]
        if missing:
            raise RuntimeError(f"missing gradient for parameter(s): {', '.join(missing)}")
        for name, p in self.named:
            check_finite(p.grad, f"gradient of {name}")
        self.opt.step()
        self.opt.zero_grad(set_to_none=False)
        with torch.no_grad():
            for k in self.curvatures:
                k.clamp_(-KAPPA_MAX, KAPPA_MAX)
        hook = getattr(self.model, "post_step", None)
        if hook is not None:
            hook()


def adam_step(optimizer: Adam) -> None:
    optimizer.step()


def gradcheck(
    f: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    h: float = 1e-6,
    floor: float = 1e-8,
) -> float:
    """Max relative error between autograd and central differences.

    The relative error of coordinate i is ``|g_i - fd_i| / max(|g_i|, |fd_i|, floor)``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    x0 = x.detach().clone().to(DTYPE)
    xg = x0.clone().requires_grad_(True)
    out = f(xg)
    if out.numel() != 1:
        raise ValueError(f"f must return a scalar, got shape {tuple(out.shape)}")
    (grad,) = torch.autograd.grad(out, xg, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(x0)
    flat = x0.reshape(-1)
    fd = torch.empty_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            xp = flat.clone()
            xm = flat.clone()
            xp[i] += h
            xm[i] -= h
            fp = float(f(xp.reshape(x0.shape)))
            fm = float(f(xm.reshape(x0.shape)))
            if fp != fp or fm != fm:
                raise NonFiniteError(f"f returned NaN at perturbed coordinate {i}")
            fd[i] = (fp - fm) / (2 * h)
    g = grad.reshape(-1)
    denom = torch.maximum(torch.maximum(g.abs(), fd.abs()), torch.full_like(g, floor))
    return float(((g - fd).abs() / denom).max())


def zero_grads(params: Iterable[torch.Tensor]) -> None:
    for p in params:
        if p.grad is not None:
            p.grad.zero_()
