import numpy as np
import pytest
import torch

import euclid_ref
from fpst import attention as att
from fpst import geometry as geo
from fpst.attention import Encoder, MultiHeadAttention, TransformerBlock
from fpst.tensor import DomainError


def rand(*shape, seed=0, scale=0.3):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed)) * scale


def test_phi_positive():
    u = torch.linspace(-30, 30, 101)
    assert bool((att.phi(u) > 0).all())
    assert float(att.phi(torch.tensor(0.0))) == 1.0


def test_scores():
    q, k = rand(6, 3, seed=1), rand(6, 3, seed=2)
    v = rand(6, 3, seed=3)
    flat = att.attention_scores(q, k, v, 0.0)
    torch.testing.assert_close(flat, att.phi(q) @ att.phi(k).T, atol=0, rtol=0)
    zero = att.attention_scores(torch.zeros(4, 3), torch.zeros(4, 3), v[:4], -0.8)
    assert torch.equal(zero, torch.full((4, 4), 3.0))
    vh = geo.expmap0(v, -0.8)
    assert bool((att.attention_scores(q * 10, k * 10, vh, -0.8) > 0).all())


def test_dense_aggregation_examples():
    v = rand(5, 2, seed=4)
    alpha = torch.rand(5, 5, generator=torch.Generator().manual_seed(5))
    torch.testing.assert_close(
        att.aggregate_dense(v, alpha, 0.0), alpha @ v / alpha.sum(1, keepdim=True), atol=1e-15, rtol=0
    )
    perm = torch.tensor([3, 0, 4, 1, 2])
    onehot = torch.eye(5)[perm]
    torch.testing.assert_close(att.aggregate_dense(v, onehot, 0.0), v[perm], atol=1e-15, rtol=0)
    sym = torch.tensor([[0.8, 0.0], [-0.8, 0.0]])
    out = att.aggregate_dense(sym, torch.ones(2, 2), -1.0)
    assert float(out.abs().max()) < 1e-15
    with pytest.raises(DomainError, match="row 1"):
        att.aggregate_dense(v, torch.tensor([[1.0] * 5, [0.0] * 5, [1.0] * 5, [1.0] * 5, [1.0] * 5]), 0.0)


@pytest.mark.parametrize("k", [-1.5, -0.3, 0.0, 0.4, 2.0])
def test_dense_linearized_agree(k):
    for n in (1, 7, 64):
        q, key = rand(n, 4, seed=6, scale=1.0), rand(n, 4, seed=7, scale=1.0)
        v = att.value_map(rand(n, 4, seed=8, scale=0.8), k)
        dense = att.aggregate_dense(v, att.attention_scores(q, key, v, k), k)
        lin = att.aggregate_linearized(q, key, v, k)
        assert float((dense - lin).abs().max()) < 1e-8


def test_linearized_flat_is_kernel_attention():
    q, key, v = rand(9, 3, seed=1), rand(9, 3, seed=2), rand(9, 3, seed=3)
    fq, fk = att.phi(q), att.phi(key)
    ref = fq @ (fk.T @ v) / (fq @ fk.sum(0, keepdim=True).T)
    torch.testing.assert_close(att.aggregate_linearized(q, key, v, 0.0), ref, atol=1e-14, rtol=0)


def test_linearized_rejects_unit_lambda():
    v = torch.tensor([[1.0, 0.0], [0.2, 0.1]])  # k = 1: lambda = 1 at |v| = 1
    with pytest.raises(DomainError):
        att.aggregate_linearized(torch.zeros(2, 2), torch.zeros(2, 2), v, 1.0)


def test_value_map_stays_in_hemisphere():
    u = rand(50, 3, scale=10.0)
    v = att.value_map(u, 2.0)
    assert bool((geo.conformal_factor(v, 2.0) > 1).all())


def test_qkv_shapes_and_ball():
    sig = geo.ProductSignature.of([-1.0, -1.0], 3)
    x = geo.prod_expmap0(rand(8, 6), sig)
    w = [rand(6, 3, seed=i, scale=2.0) for i in range(3)]
    q, k, v = att.qkv_project(x, *w, sig, -1.0)
    assert q.shape == k.shape == v.shape == (8, 3)
    assert bool(((v * v).sum(-1) < 1).all())
    flat = geo.ProductSignature.of([0.0, 0.0], 3)
    y = rand(8, 6)
    q0, k0, v0 = att.qkv_project(y, *w, flat, 0.0)
    assert torch.equal(q0, y @ w[0]) and torch.equal(v0, y @ w[2])


def test_mha_flat_matches_reference_and_on_manifold():
    torch.manual_seed(0)
    mha = MultiHeadAttention(8, 2, mode="dense")
    x = rand(10, 8, scale=1.0)
    out = mha(x, geo.ProductSignature.of([0.0, 0.0], 4)).detach().numpy()
    p = {k: v.detach().numpy() for k, v in mha.state_dict().items()}
    ref = euclid_ref.kernel_attention(x.numpy(), p["wq"], p["wk"], p["wv"])
    np.testing.assert_allclose(out, ref, atol=1e-8, rtol=0)
    sig = geo.ProductSignature.of([-1.0, 0.5], 4)
    y = mha(geo.prod_expmap0(x * 0.3, sig), sig)
    geo.check_on_manifold(y, sig)
    single = MultiHeadAttention(4, 1)
    s1 = geo.ProductSignature.of([-0.5], 4)
    assert single(geo.prod_expmap0(x[:, :4], s1), s1).shape == (10, 4)


def test_block_zero_weights_is_identity():
    torch.manual_seed(1)
    blk = TransformerBlock(8, 2, kappa_init=-0.7)
    with torch.no_grad():
        for name in ("attn.wv", "ffn.lin2.weight"):
            blk.get_parameter(name).zero_()
    x = geo.prod_expmap0(rand(6, 8), blk.signature)
    torch.testing.assert_close(blk(x), x, atol=1e-9, rtol=0)


def test_block_flat_matches_reference():
    torch.manual_seed(2)
    blk = TransformerBlock(8, 2, mode="linearized")
    x = rand(12, 8, scale=1.0)
    ref = euclid_ref.block(x.numpy(), euclid_ref.block_params(blk))
    np.testing.assert_allclose(blk(x).detach().numpy(), ref, atol=1e-9, rtol=0)


def test_encoder_permutation_equivariant_and_deterministic():
    torch.manual_seed(3)
    enc = Encoder(8, 2, 2, kappa_init=-0.4)
    x = geo.prod_expmap0(rand(9, 8), enc.first_signature)
    perm = torch.randperm(9, generator=torch.Generator().manual_seed(4))
    out = enc(x)
    torch.testing.assert_close(enc(x[perm]), out[perm], atol=1e-12, rtol=0)
    assert torch.equal(enc(x), out)
    assert len(enc.kappas()) == 4


def test_block_rejects_bad_shapes():
    with pytest.raises(ValueError):
        MultiHeadAttention(6, 4)
    with pytest.raises(ValueError):
        MultiHeadAttention(8, 2, mode="softmax")
    with pytest.raises(ValueError):
        Encoder(8, 2, 0)
