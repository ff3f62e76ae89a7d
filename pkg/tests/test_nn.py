import numpy as np
import pytest
import torch

from fpst import geometry as geo
from fpst import nn as stnn
from fpst.tensor import DomainError, gradcheck


def sig_of(*ks, d=2):
    return geo.ProductSignature.of(list(ks), d)


def rand(*shape, seed=0, scale=0.3):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed)) * scale


def test_st_wrap_identity_and_flat():
    s = sig_of(-1.0, 0.5)
    x = geo.prod_expmap0(rand(6, 4), s)
    torch.testing.assert_close(stnn.st_wrap(lambda u: u, x, s), x, atol=1e-9, rtol=0)
    flat = sig_of(0.0, 0.0)
    w = rand(4, 4, seed=1, scale=1.0)
    y = rand(6, 4, seed=2, scale=2.0)
    assert torch.equal(stnn.st_wrap(lambda u: torch.tanh(u @ w), y, flat), torch.tanh(y @ w))


def test_st_relu_example():
    s = sig_of(-1.0)
    x = geo.expmap0(torch.tensor([[-0.3, 0.4]]), -1.0)
    out = stnn.st_activation(x, "relu", s)
    ref = torch.tensor([[0.0, np.tanh(0.4)]])  # exp0 at k=-1 scales by tanh(|v|)/|v|
    torch.testing.assert_close(out, ref, atol=1e-15, rtol=0)
    with pytest.raises(ValueError):
        stnn.activation("gelu")


def test_st_linear():
    s = sig_of(-0.5, 0.3)
    x = geo.prod_expmap0(rand(5, 4), s)
    torch.testing.assert_close(stnn.st_linear(x, torch.eye(4), s), x, atol=1e-9, rtol=0)
    w = rand(4, 4, seed=3, scale=1.0)
    y = rand(5, 4, seed=4)
    assert torch.equal(stnn.st_linear(y, w, sig_of(0.0, 0.0)), y @ w)
    x0 = x.detach()
    assert gradcheck(lambda t: stnn.st_linear(t, w, sig_of(-0.5, -0.5)).pow(2).sum(), x0) < 1e-4


def test_layer_norm():
    flat = sig_of(0.0, 0.0)
    gain, bias = rand(4, seed=5, scale=1.0), rand(4, seed=6, scale=1.0)
    const = torch.full((3, 4), 0.7)
    torch.testing.assert_close(stnn.st_layernorm(const, gain, bias, flat), bias.expand(3, 4), atol=1e-15, rtol=0)
    s = sig_of(-0.8, 0.4)
    x = geo.prod_expmap0(rand(6, 4), s)
    u = geo.prod_logmap0(stnn.st_layernorm(x, torch.ones(4), torch.zeros(4), s), s)
    # tangent output normalized over the full feature axis
    torch.testing.assert_close(u.mean(-1), torch.zeros(6), atol=1e-9, rtol=0)
    # unit variance up to the eps_ln floor: var = s2 / (s2 + eps)
    s2 = geo.prod_logmap0(x, s).var(-1, unbiased=False)
    torch.testing.assert_close(u.var(-1, unbiased=False), s2 / (s2 + stnn.EPS_LN), atol=1e-9, rtol=0)
    s04 = sig_of(0.4, 0.4)
    x04 = geo.prod_expmap0(rand(3, 4, seed=7), s04).detach()
    assert gradcheck(lambda t: stnn.st_layernorm(t, gain, bias, s04).pow(2).sum(), x04) < 1e-4


def test_ffn():
    s = sig_of(-1.0, 0.7)
    x = geo.prod_expmap0(rand(5, 4), s)
    zero = stnn.st_ffn(x, torch.zeros(4, 8), torch.zeros(8, 4), "relu", s)
    assert torch.equal(zero, torch.zeros(5, 4))
    flat = sig_of(0.0, 0.0)
    w1, w2 = rand(4, 8, seed=1, scale=1.0), rand(8, 4, seed=2, scale=1.0)
    y = rand(5, 4, seed=3, scale=1.0)
    torch.testing.assert_close(stnn.st_ffn(y, w1, w2, "elu", flat), torch.nn.functional.elu(y @ w1) @ w2, atol=1e-14, rtol=0)
    mod = stnn.StFFN(4, 8)
    assert mod(x, s).shape == (5, 4)


def test_interlayer_transfer():
    a, b = sig_of(-0.7, 0.3), sig_of(0.2, -1.5)
    x = geo.prod_expmap0(rand(6, 4), a)
    torch.testing.assert_close(stnn.interlayer_transfer(x, a, a), x, atol=1e-9, rtol=0)
    flat = sig_of(0.0, 0.0)
    y = rand(6, 4, scale=3.0)
    assert torch.equal(stnn.interlayer_transfer(y, flat, flat), y)
    back = stnn.interlayer_transfer(stnn.interlayer_transfer(x, a, b), b, a)
    torch.testing.assert_close(back, x, atol=1e-8, rtol=0)
    with pytest.raises(ValueError):
        stnn.interlayer_transfer(x, a, sig_of(0.0, 0.0, 0.0))


def test_logits_on_hyperplane_point_is_zero():
    s = sig_of(-1.0)
    a = torch.tensor([[1.0, 0.5]])
    p = torch.tensor([[0.2, -0.1]])
    assert abs(float(stnn.st_logits(p, a, p, s))) < 1e-15


def test_logits_flat_limit_is_linear():
    flat = sig_of(0.0, 0.0)
    a = rand(3, 4, seed=8, scale=1.0)
    x = rand(10, 4, seed=9, scale=1.0)
    logits = stnn.st_logits(x, a, torch.zeros(3, 4), flat)
    # per block: 2 |<x,a>| / |a| * sign * lambda_0 |a| = 4 <x,a>; summed over blocks
    torch.testing.assert_close(logits, 4 * x @ a.T, atol=1e-12, rtol=0)
    assert torch.equal(logits.argmax(1), (x @ a.T).argmax(1))


def test_logits_mirror_symmetry():
    k = -1.0
    s = sig_of(k)
    a = torch.tensor([[0.6, -0.8]])
    p = torch.tensor([[0.1, 0.3]])
    x = geo.expmap0(rand(20, 2, seed=10, scale=0.5), k)
    z = geo.mobius_add(-p, x, k)
    an = a / a.norm()
    refl = z - 2 * (z @ an.T) * an
    x_mirror = geo.mobius_add(p.expand_as(refl), refl, k)
    lx, lm = stnn.st_logits(x, a, p, s), stnn.st_logits(x_mirror, a, p, s)
    torch.testing.assert_close(lm, -lx, atol=1e-8, rtol=0)


def test_logit_head_projection_and_degenerate_normal():
    s = sig_of(-1.0, -1.0)
    head = stnn.StLogitHead(4, 3)
    with torch.no_grad():
        head.p.fill_(5.0)
    head.project_(s)
    assert bool((head.p[:, :2].norm(dim=-1) < 1).all())
    with torch.no_grad():
        head.a.zero_()
    with pytest.raises(DomainError):
        head(torch.zeros(2, 4), s)


def test_two_layer_composition_gradcheck_with_kappa():
    w = rand(4, 4, seed=11, scale=0.8)
    x = geo.prod_expmap0(rand(3, 4, seed=12), sig_of(-0.5, 0.5)).detach()

    def f(kap):
        s = geo.ProductSignature(kap, 2)
        h = stnn.st_linear(x, w, s)
        return stnn.st_activation(h, "tanh", s).pow(2).sum()

    assert gradcheck(f, torch.tensor([-0.5, 0.5])) < 1e-4
