import itertools

import numpy as np
import pytest

from radionet import tensor as T
from radionet.layers import (
    FfnParams,
    MhsaParams,
    TransformerConfig,
    TransformerLayerParams,
    ffn_forward,
    mhsa_forward,
    transformer_layer_forward,
)
from radionet.tensor import RngState, Tensor


CFG = TransformerConfig(d_item=16, n_heads=4, d_hidden=32)


@pytest.fixture
def layer_params():
    return TransformerLayerParams.init(CFG, RngState(100))


def test_config_validation():
    TransformerConfig(512, 8, 2048)  # paper-scale widths
    TransformerConfig(64, 4, 128)  # desk-scale widths
    with pytest.raises(ValueError):
        TransformerConfig(d_item=10, n_heads=3, d_hidden=8)
    with pytest.raises(ValueError):
        TransformerConfig(d_item=0, n_heads=1, d_hidden=8)
    assert TransformerConfig(512, 8, 2048).d_head == 64


def test_mhsa_param_shapes():
    p = MhsaParams.init(CFG, RngState(0))
    assert p.n_heads == CFG.n_heads
    assert all(w.shape == (16, 4) for w in p.w_q + p.w_k + p.w_v)
    assert p.w_o.shape == (16, 16)


def test_mhsa_single_item_attention_is_one(layer_params):
    p = layer_params.mhsa
    x = RngState(1).tensor_uniform((1, 16), -1, 1)
    out, att = mhsa_forward(x, p, return_attention=True)
    np.testing.assert_allclose(att.data.reshape(CFG.n_heads, 1, 1), np.ones((4, 1, 1)), atol=1e-7)
    # single item: output row is the fused concat of the per-head value rows
    vcat = x.data @ np.concatenate([w.data for w in p.w_v], axis=1)
    np.testing.assert_allclose(out.data, vcat @ p.w_o.data, rtol=1e-5)


def test_mhsa_rows_stochastic(layer_params):
    x = RngState(2).tensor_normal((6, 16))
    _, att = mhsa_forward(x, layer_params.mhsa, return_attention=True)
    sums = att.data.sum(axis=-1)
    np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-5)


def test_mhsa_identical_rows_give_identical_outputs(layer_params):
    row = RngState(3).uniform((16,), -1, 1)
    x = Tensor(np.tile(row, (5, 1)))
    out = mhsa_forward(x, layer_params.mhsa)
    for i in range(1, 5):
        np.testing.assert_allclose(out.data[i], out.data[0], atol=1e-6)


def test_mhsa_dim_mismatch(layer_params):
    with pytest.raises(T.ShapeError):
        mhsa_forward(Tensor.zeros(4, 8), layer_params.mhsa)


def test_mhsa_permutation_equivariant(layer_params):
    x = RngState(4).uniform((4, 16), -1, 1)
    base = mhsa_forward(Tensor(x), layer_params.mhsa).data
    for perm in itertools.permutations(range(4)):
        out = mhsa_forward(Tensor(x[list(perm)]), layer_params.mhsa).data
        np.testing.assert_allclose(out, base[list(perm)], atol=1e-5)


def test_ffn_zero_params_zero_output():
    p = FfnParams(
        w1=Tensor.zeros(16, 32), b1=Tensor.zeros(32), w2=Tensor.zeros(32, 16), b2=Tensor.zeros(16)
    )
    out = ffn_forward(RngState(5).tensor_normal((3, 16)), p)
    np.testing.assert_array_equal(out.data, np.zeros((3, 16), np.float32))


def test_ffn_identity_passthrough_for_nonnegative_input():
    # w1 embeds into the first 16 hidden units, w2 reads them back
    w1 = np.zeros((16, 32), np.float32)
    w1[:16, :16] = np.eye(16)
    w2 = np.zeros((32, 16), np.float32)
    w2[:16, :16] = np.eye(16)
    p = FfnParams(w1=Tensor(w1), b1=Tensor.zeros(32), w2=Tensor(w2), b2=Tensor.zeros(16))
    x = RngState(6).tensor_uniform((4, 16), 0.0, 1.0)
    np.testing.assert_allclose(ffn_forward(x, p).data, x.data, rtol=1e-6)


def test_ffn_positionwise(layer_params):
    x = RngState(7).uniform((5, 16), -1, 1)
    base = ffn_forward(Tensor(x), layer_params.ffn).data
    bumped = x.copy()
    bumped[2] += 0.5
    out = ffn_forward(Tensor(bumped), layer_params.ffn).data
    for i in range(5):
        if i == 2:
            assert not np.allclose(out[i], base[i])
        else:
            np.testing.assert_array_equal(out[i], base[i])


def test_layer_output_shape(layer_params):
    for l in (1, 3, 9):
        x = RngState(l).tensor_normal((l, 16))
        assert transformer_layer_forward(x, layer_params).shape == (l, 16)
    xb = RngState(8).tensor_normal((2, 5, 16))
    assert transformer_layer_forward(xb, layer_params).shape == (2, 5, 16)


def test_layer_permutation_equivariant_all_24(layer_params):
    x = RngState(9).uniform((4, 16), -1, 1)
    base = transformer_layer_forward(Tensor(x), layer_params).data
    for perm in itertools.permutations(range(4)):
        out = transformer_layer_forward(Tensor(x[list(perm)]), layer_params).data
        np.testing.assert_allclose(out, base[list(perm)], atol=1e-5)


def test_layer_batched_matches_unbatched(layer_params):
    x = RngState(10).uniform((3, 5, 16), -1, 1)
    batched = transformer_layer_forward(Tensor(x), layer_params).data
    for i in range(3):
        single = transformer_layer_forward(Tensor(x[i]), layer_params).data
        np.testing.assert_allclose(batched[i], single, atol=1e-6)


def test_layer_gradient_check():
    # strict check in float64; the backward path is dtype-agnostic
    with T.using_dtype(np.float64):
        params = TransformerLayerParams.init(CFG, RngState(11))
        x = RngState(12).tensor_uniform((4, 16), -1, 1, requires_grad=True)
        probe = RngState(13).tensor_uniform((4, 16), -1, 1)

        def fn(u):
            return T.sum_(T.mul(transformer_layer_forward(u, params), probe))

        err = T.finite_difference_check(fn, [x], eps=1e-5, rel_floor=1e-6)
    assert err < 1e-3


def test_layer_gradient_reaches_all_params(layer_params):
    x = RngState(14).tensor_normal((4, 16))
    out = transformer_layer_forward(x, layer_params)
    T.backward(T.sum_(T.mul(out, out)))
    for name, t in layer_params.tensors().items():
        assert t.grad is not None and np.any(t.grad != 0), f"no gradient reached {name}"
