"""Closed-form operations on the kappa-stereographic model.

Points live in R^d with the constraint ``-kappa * |x|^2 < 1``: the Poincare
ball for kappa < 0, Euclidean space for kappa = 0 and the stereographic
projection of the sphere for kappa > 0.  All functions take ``k`` as a 0-d
tensor (usually a learnable curvature) or a float, and are differentiable in
both their point arguments and ``k``.

Near kappa = 0 the curvature-dependent trigonometric functions switch to an
order-5 Taylor expansion so both the value and the gradient with respect to
kappa stay continuous through zero.  The branch is chosen on the Python value
of ``k``; a curvature is one scalar per block so this costs nothing.

Product spaces split the last axis into equal blocks, one curvature each
(``ProductSignature``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from .tensor import DTYPE, DomainError, check_finite, norm

K_SWITCH = 1e-5
EPS_BALL = 1e-5
EPS_DEN = 1e-12
MIN_NORM = 1e-15
POLE_TOL = 1e-12

Kappa = "torch.Tensor | float"


def as_kappa(k, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(k, torch.Tensor):
        return k
    return torch.tensor(float(k), dtype=DTYPE if like is None else like.dtype)


# ---------------------------------------------------------------------------
# curvature-dependent trigonometry


def tan_k(x: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, x)
    kv = float(k.detach())
    if abs(kv) < K_SWITCH:
        x2 = x * x
        return x + k * x * x2 / 3 + 2 * k * k * x * x2 * x2 / 15
    sk = k.abs().sqrt()
    if kv > 0:
        arg = sk * x
        if bool((torch.cos(arg).abs() < POLE_TOL).any()):
            raise DomainError("tan_k evaluated at a pole")
        return torch.tan(arg) / sk
    return torch.tanh(sk * x) / sk


def arctan_k(y: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, y)
    kv = float(k.detach())
    if abs(kv) < K_SWITCH:
        y2 = y * y
        return y - k * y * y2 / 3 + k * k * y * y2 * y2 / 5
    sk = k.abs().sqrt()
    if kv > 0:
        return torch.atan(sk * y) / sk
    arg = sk * y
    if bool((arg.abs() >= 1).any()):
        raise DomainError(f"arctan_k outside the ball: max sqrt(-k)|y| = {float(arg.abs().max())}")
    return torch.atanh(arg) / sk


def sin_k(x: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, x)
    kv = float(k.detach())
    if abs(kv) < K_SWITCH:
        x2 = x * x
        return x - k * x * x2 / 6 + k * k * x * x2 * x2 / 120
    sk = k.abs().sqrt()
    if kv > 0:
        return torch.sin(sk * x) / sk
    return torch.sinh(sk * x) / sk


def arcsin_k(y: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, y)
    kv = float(k.detach())
    if abs(kv) < K_SWITCH:
        y2 = y * y
        return y + k * y * y2 / 6 + 3 * k * k * y * y2 * y2 / 40
    sk = k.abs().sqrt()
    if kv > 0:
        arg = sk * y
        if bool((arg.abs() > 1 + 1e-12).any()):
            raise DomainError(f"arcsin_k argument beyond 1: {float(arg.abs().max())}")
        return torch.asin(arg.clamp(-1.0, 1.0)) / sk
    return torch.asinh(sk * y) / sk


# ---------------------------------------------------------------------------
# gyrovector operations


def _dot(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return (x * y).sum(dim=-1, keepdim=True)


def project(x: torch.Tensor, k, eps: float = EPS_BALL) -> torch.Tensor:
    """Pull points back inside the ball of radius (1 - eps)/sqrt(-k); identity for k >= 0."""
    k = as_kappa(k, x)
    if float(k.detach()) >= 0:
        return x
    maxnorm = (1 - eps) / (-k).sqrt()
    n = norm(x, keepdim=True, min_norm=MIN_NORM)
    return torch.where(n > maxnorm, x / n * maxnorm, x)


def conformal_factor(x: torch.Tensor, k, keepdim: bool = True) -> torch.Tensor:
    """lambda_x = 2 / (1 + k |x|^2)."""
    k = as_kappa(k, x)
    den = 1 + k * _dot(x, x)
    if bool((den <= EPS_DEN).any()):
        raise DomainError("conformal factor undefined: point lies outside the ball")
    lam = 2 / den
    return lam if keepdim else lam.squeeze(-1)


def mobius_add(x: torch.Tensor, y: torch.Tensor, k, proj: bool = True) -> torch.Tensor:
    k = as_kappa(k, x)
    xy = _dot(x, y)
    x2 = _dot(x, x)
    y2 = _dot(y, y)
    num = (1 - 2 * k * xy - k * y2) * x + (1 + k * x2) * y
    den = 1 - 2 * k * xy + k * k * x2 * y2
    if bool((den.abs() < 1e-15).any()):
        raise DomainError("mobius_add denominator vanished (antipodal points)")
    out = num / den
    return project(out, k) if proj else out


def mobius_scalar(r, x: torch.Tensor, k) -> torch.Tensor:
    """r (x) x = tan_k(r * arctan_k(|x|)) x / |x|."""
    k = as_kappa(k, x)
    n = norm(x, keepdim=True, min_norm=MIN_NORM)
    out = tan_k(r * arctan_k(n, k), k) / n * x
    return project(out, k)


def gyration(u: torch.Tensor, v: torch.Tensor, w: torch.Tensor, k) -> torch.Tensor:
    """gyr[u, v] w in closed form; a linear isometry in w."""
    k = as_kappa(k, u)
    u2, v2 = _dot(u, u), _dot(v, v)
    uv, uw, vw = _dot(u, v), _dot(u, w), _dot(v, w)
    k2 = k * k
    a = -k2 * uw * v2 - k * vw + 2 * k2 * uv * vw
    b = -k2 * vw * u2 + k * uw
    d = 1 - 2 * k * uv + k2 * u2 * v2
    if bool((d.abs() < 1e-15).any()):
        raise DomainError("gyration denominator vanished")
    return w + 2 * (a * u + b * v) / d


def distance(x: torch.Tensor, y: torch.Tensor, k, keepdim: bool = False) -> torch.Tensor:
    """Geodesic distance 2 arctan_k(|-x (+) y|).

    Uses |-x (+) y|^2 = |x - y|^2 / (1 + 2k<x,y> + k^2 |x|^2 |y|^2), which is
    symmetric in x and y bit for bit and exactly 0 when x == y.
    """
    k = as_kappa(k, x)
    diff = x - y
    den = 1 + 2 * k * _dot(x, y) + k * k * _dot(x, x) * _dot(y, y)
    if bool((den.abs() < 1e-15).any()):
        raise DomainError("distance undefined between antipodal points")
    sq = _dot(diff, diff) / den
    if not keepdim:
        sq = sq.squeeze(-1)
    pos = sq > 0
    # inner where keeps the sqrt gradient finite at coincident points
    n = torch.where(pos, torch.where(pos, sq, torch.ones_like(sq)).sqrt(), torch.zeros_like(sq))
    return 2 * arctan_k(n, k)


def _check_wrap(v_norm_scaled: torch.Tensor, k) -> None:
    # v_norm_scaled is the argument fed to tan_k
    kv = float(as_kappa(k).detach())
    if kv > 0 and bool((math.sqrt(kv) * v_norm_scaled >= math.pi / 2).any()):
        raise DomainError("exponential map wraps past the antipode (kappa > 0)")


def expmap(x: torch.Tensor, v: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, x)
    n = norm(v, keepdim=True, min_norm=MIN_NORM)
    arg = conformal_factor(x, k) * n / 2
    _check_wrap(arg, k)
    second = tan_k(arg, k) / n * v
    return mobius_add(x, second, k)


def logmap(x: torch.Tensor, y: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, x)
    z = mobius_add(-x, y, k, proj=False)
    n = norm(z, keepdim=True, min_norm=MIN_NORM)
    return 2 / conformal_factor(x, k) * arctan_k(n, k) / n * z


def expmap0(v: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, v)
    n = norm(v, keepdim=True, min_norm=MIN_NORM)
    _check_wrap(n, k)
    return project(tan_k(n, k) / n * v, k)


def logmap0(y: torch.Tensor, k) -> torch.Tensor:
    k = as_kappa(k, y)
    n = norm(y, keepdim=True, min_norm=MIN_NORM)
    return arctan_k(n, k) / n * y


def clip_tangent(v: torch.Tensor, k, frac: float = 1 - 1e-3) -> torch.Tensor:
    """For k > 0, shorten tangent vectors at the origin to ``frac`` of the injectivity radius pi/(2 sqrt k).

    Identity for k <= 0.  ``frac = 0.5`` keeps exp0(v) inside the hemisphere
    where the conformal factor exceeds 1.
    """
    k = as_kappa(k, v)
    kv = float(k.detach())
    if kv <= 0:
        return v
    maxnorm = frac * (math.pi / 2) / k.sqrt()
    n = norm(v, keepdim=True, min_norm=MIN_NORM)
    return torch.where(n > maxnorm, v / n * maxnorm, v)


def parallel_transport(x: torch.Tensor, y: torch.Tensor, v: torch.Tensor, k) -> torch.Tensor:
    """Transport v from T_x to T_y: gyr[y, -x] v * lambda_x / lambda_y."""
    k = as_kappa(k, x)
    return gyration(y, -x, v, k) * conformal_factor(x, k) / conformal_factor(y, k)


def transport0(x: torch.Tensor, v: torch.Tensor, k) -> torch.Tensor:
    """Transport v from T_x to the origin; gyr[0, -x] is the identity."""
    return v * conformal_factor(x, k) / 2


def einstein_midpoint(v: torch.Tensor, alpha: torch.Tensor, k, eps: float = EPS_DEN) -> torch.Tensor:
    """Weighted gyromidpoint of the rows of ``v`` (n, d) with weights ``alpha`` (..., n)."""
    k = as_kappa(k, v)
    lam = conformal_factor(v, k, keepdim=False)
    den = (alpha * (lam - 1)).sum(dim=-1, keepdim=True)
    if bool((den <= eps).any()):
        bad = torch.nonzero((den <= eps).reshape(-1))[0].item()
        raise DomainError(f"Einstein midpoint denominator <= {eps} at row {bad}")
    s = (alpha * lam / den) @ v
    return mobius_scalar(0.5, s, k)


def hyperplane_distance(x: torch.Tensor, a: torch.Tensor, p: torch.Tensor, k, signed: bool = False) -> torch.Tensor:
    """Distance from x to the hyperplane {z : <-p (+) z, a> = 0}.

    The inverse sine is evaluated at curvature ``k * |k|``.
    """
    k = as_kappa(k, x)
    a_norm = norm(a)
    if bool((a_norm < 1e-12).any()):
        raise DomainError("hyperplane normal has (near) zero norm")
    z = mobius_add(-p, x, k, proj=False)
    za = _dot(z, a).squeeze(-1)
    zz = _dot(z, z).squeeze(-1)
    arg = 2 * za.abs() / ((1 + k * zz) * a_norm)
    d = arcsin_k(arg, k * k.abs())
    if signed:
        d = torch.sign(za).detach() * d
    return d


# ---------------------------------------------------------------------------
# product spaces


@dataclass
class ProductSignature:
    """An ordered tuple of per-block curvatures over a d = H * d' feature axis."""

    kappas: torch.Tensor  # shape (H,)
    head_dim: int

    def __post_init__(self):
        if self.kappas.dim() != 1 or self.kappas.numel() < 1:
            raise ValueError("kappas must be a non-empty 1-D tensor")
        if self.head_dim < 1:
            raise ValueError("head_dim must be positive")

    @classmethod
    def of(cls, kappas: Sequence[float] | torch.Tensor, head_dim: int) -> "ProductSignature":
        if not isinstance(kappas, torch.Tensor):
            kappas = torch.tensor([float(k) for k in kappas], dtype=DTYPE)
        return cls(kappas, head_dim)

    @property
    def heads(self) -> int:
        return self.kappas.numel()

    @property
    def dim(self) -> int:
        return self.heads * self.head_dim

    def split(self, x: torch.Tensor, width: int | None = None) -> list[torch.Tensor]:
        """Split the last axis into H equal blocks (of ``width`` per block if given)."""
        total = x.shape[-1]
        if width is None:
            if total != self.dim:
                raise ValueError(f"last axis {total} does not match signature dim {self.dim} (H={self.heads})")
            width = self.head_dim
        elif total != width * self.heads:
            raise ValueError(f"last axis {total} != {self.heads} blocks of {width}")
        return list(torch.split(x, width, dim=-1))

    def blockwise(self, fn: Callable, *xs: torch.Tensor, width: int | None = None) -> torch.Tensor:
        parts = [self.split(x, width) for x in xs]
        out = [fn(*(p[h] for p in parts), self.kappas[h]) for h in range(self.heads)]
        return torch.cat(out, dim=-1)


def prod_expmap0(v: torch.Tensor, sig: ProductSignature, width: int | None = None) -> torch.Tensor:
    return sig.blockwise(expmap0, v, width=width)


def prod_clip_tangent(v: torch.Tensor, sig: ProductSignature, width: int | None = None, frac: float = 1 - 1e-3):
    return sig.blockwise(lambda u, k: clip_tangent(u, k, frac), v, width=width)


def prod_logmap0(x: torch.Tensor, sig: ProductSignature, width: int | None = None) -> torch.Tensor:
    return sig.blockwise(logmap0, x, width=width)


def prod_mobius_add(x: torch.Tensor, y: torch.Tensor, sig: ProductSignature) -> torch.Tensor:
    return sig.blockwise(mobius_add, x, y)


def prod_project(x: torch.Tensor, sig: ProductSignature, width: int | None = None) -> torch.Tensor:
    return sig.blockwise(project, x, width=width)


def product_distance(x: torch.Tensor, y: torch.Tensor, sig: ProductSignature) -> torch.Tensor:
    """sqrt(sum_h d_h(x_h, y_h)^2) over the last axis (broadcasting)."""
    xs, ys = sig.split(x), sig.split(y)
    sq = sum(distance(xs[h], ys[h], sig.kappas[h]) ** 2 for h in range(sig.heads))
    pos = sq > 0
    return torch.where(pos, torch.where(pos, sq, torch.ones_like(sq)).sqrt(), torch.zeros_like(sq))


def check_on_manifold(x: torch.Tensor, sig: ProductSignature, width: int | None = None) -> None:
    check_finite(x, "manifold point")
    for h, block in enumerate(sig.split(x, width)):
        kv = float(sig.kappas[h])
        if kv < 0 and bool((-kv * (block * block).sum(-1) >= 1).any()):
            raise DomainError(f"block {h} leaves the ball of curvature {kv}")
