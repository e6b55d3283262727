import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftcbam import functional as F
from ftcbam.errors import ContractError, DimensionError, GeometryError, NumericError
from ftcbam.tensor import Tensor


def test_conv_all_ones_pad_one():
    spec = F.ConvSpec((3, 3), 1, 1, padding=(1, 1))
    out = F.conv2d(Tensor(np.ones((1, 3, 3))), spec, Tensor(np.ones(spec.weight_shape))).data
    np.testing.assert_array_equal(out[0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


def test_conv_zero_kernel_annihilates():
    rng = np.random.default_rng(1)
    spec = F.ConvSpec((3, 2), 3, 4, stride=(2, 1), padding=(1, 0))
    out = F.conv2d(Tensor(rng.standard_normal((3, 9, 7))), spec, Tensor(np.zeros(spec.weight_shape)))
    assert out.shape == (4, 5, 6)
    assert not out.data.any()


def test_stem_geometry_gives_80_bins():
    spec = F.ConvSpec((7, 7), 1, 2, stride=(2, 1), padding=(2, 3))
    out = F.conv2d(Tensor(np.ones((1, 161, 200))), spec, Tensor(np.ones(spec.weight_shape) * 0.01))
    assert out.shape == (2, 80, 200)


def _conv_oracle(x, w, b, stride, pad):
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    ho = (h + 2 * pad[0] - kh) // stride[0] + 1
    wo = (wd + 2 * pad[1] - kw) // stride[1] + 1
    out = np.zeros((c_out, ho, wo))
    for o in range(c_out):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride[0]:i * stride[0] + kh, j * stride[1]:j * stride[1] + kw]
                out[o, i, j] = np.sum(patch * w[o]) + (b[o] if b is not None else 0.0)
    return out


@settings(max_examples=40, deadline=None)
@given(kh=st.integers(1, 4), kw=st.integers(1, 4), sh=st.integers(1, 3), sw=st.integers(1, 3),
       ph=st.integers(0, 2), pw=st.integers(0, 2), h=st.integers(4, 9), w=st.integers(4, 9),
       seed=st.integers(0, 10_000))
def test_conv_shape_formula_and_loop_oracle(kh, kw, sh, sw, ph, pw, h, w, seed):
    rng = np.random.default_rng(seed)
    spec = F.ConvSpec((kh, kw), 2, 3, stride=(sh, sw), padding=(ph, pw), bias=True)
    x = rng.standard_normal((2, h, w))
    wt = rng.standard_normal(spec.weight_shape)
    b = rng.standard_normal(3)
    out = F.conv2d(Tensor(x), spec, Tensor(wt), Tensor(b)).data
    assert out.shape[1:] == spec.output_hw(h, w)
    assert out.shape[1] == (h + 2 * ph - kh) // sh + 1
    np.testing.assert_allclose(out, _conv_oracle(x, wt, b, (sh, sw), (ph, pw)), atol=1e-10)


def test_conv_errors():
    spec = F.ConvSpec((3, 3), 2, 1)
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(np.ones((3, 5, 5))), spec, Tensor(np.ones(spec.weight_shape)))
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(np.ones((2, 5, 5))), spec, Tensor(np.ones((1, 2, 3, 2))))
    with pytest.raises(GeometryError):
        F.conv2d(Tensor(np.ones((2, 2, 5))), spec, Tensor(np.ones(spec.weight_shape)))


def test_avg_pool_examples():
    x = Tensor(np.array([[[1.0, 3.0], [2.0, 4.0]]]))
    np.testing.assert_array_equal(F.avg_pool(x, (1, 2)).data, [[[2.0], [3.0]]])


def test_max_pool_example():
    x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    np.testing.assert_array_equal(F.max_pool(x, (2, 2), (2, 2)).data, [[[4.0]]])


def test_max_pool_ties_route_to_first_index():
    x = Tensor(np.array([[[5.0, 5.0], [5.0, 1.0]]]), requires_grad=True)
    F.max_pool(x, (2, 2)).sum().backward()
    np.testing.assert_array_equal(x.grad, [[[1, 0], [0, 0]]])


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 6), t=st.integers(1, 9), seed=st.integers(0, 999))
def test_avg_pool_full_width_equals_row_mean_loop(h, t, seed):
    x = np.random.default_rng(seed).standard_normal((2, h, t))
    out = F.avg_pool(Tensor(x), (1, t)).data
    oracle = np.zeros((2, h, 1))
    for c in range(2):
        for i in range(h):
            acc = 0.0
            for j in range(t):
                acc += x[c, i, j]
            oracle[c, i, 0] = acc / t
    np.testing.assert_allclose(out, oracle, atol=1e-12)


def test_pool_kernel_larger_than_input():
    with pytest.raises(GeometryError):
        F.max_pool(Tensor(np.ones((1, 2, 2))), (3, 3))


def test_batch_norm_constant_input_gives_zero():
    x = Tensor(np.full((4, 2, 3, 3), 7.0))
    out = F.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), F.RunningStats(2), training=True)
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_batch_norm_beta_on_zero_variance():
    x = Tensor(np.full((3, 2, 2, 2), -1.5))
    out = F.batch_norm(x, Tensor(np.ones(2)), Tensor(np.full(2, 5.0)), None, training=True)
    np.testing.assert_allclose(out.data, 5.0, atol=1e-12)


def test_batch_norm_random_batch_statistics():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 3, 5, 6)) * 3 + 2
    out = F.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), None, training=True).data
    per_channel = out.transpose(1, 0, 2, 3).reshape(3, -1)
    assert np.all(np.abs(per_channel.mean(axis=1)) <= 1e-6)
    np.testing.assert_allclose(per_channel.var(axis=1), 1.0, atol=1e-4)


def test_batch_norm_running_stats_and_eval_mode():
    rng = np.random.default_rng(3)
    stats = F.RunningStats(2)
    x = rng.standard_normal((6, 2, 2, 2)) + 4
    F.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), stats, training=True)
    flat = x.transpose(1, 0, 2, 3).reshape(2, -1)
    np.testing.assert_allclose(stats.mean, 0.1 * flat.mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(stats.var, 0.9 + 0.1 * flat.var(axis=1, ddof=1), atol=1e-12)
    out = F.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), stats, training=False).data
    expect = (x - stats.mean[None, :, None, None]) / np.sqrt(stats.var[None, :, None, None] + 1e-5)
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_batch_norm_shape_check():
    with pytest.raises(DimensionError):
        F.batch_norm(Tensor(np.ones((2, 3, 2, 2))), Tensor(np.ones(2)), Tensor(np.zeros(2)), None, True)


def test_linear_identity_and_constant():
    x = np.random.default_rng(4).standard_normal((5, 3))
    np.testing.assert_array_equal(F.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data, x)
    out = F.linear(Tensor(x), Tensor(np.zeros((3, 2))), Tensor(np.array([1.5, -2.0]))).data
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (5, 1)))


def test_linear_matches_triple_loop():
    rng = np.random.default_rng(6)
    x, w, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 3)), rng.standard_normal(3)
    oracle = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            oracle[i, j] = b[j] + sum(x[i, k] * w[k, j] for k in range(3))
    np.testing.assert_allclose(F.linear(Tensor(x), Tensor(w), Tensor(b)).data, oracle, atol=1e-12)


def test_linear_dimension_mismatch():
    with pytest.raises(DimensionError):
        F.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_softmax_and_cross_entropy():
    logits = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    p = F.softmax(Tensor(logits)).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    ce = F.cross_entropy(Tensor(logits), np.array([2, 1])).data
    expect = np.mean([-np.log(p[0, 2]), np.log(3.0)])
    np.testing.assert_allclose(ce, expect, atol=1e-12)


def test_safe_l2_normalize_rejects_zero():
    with pytest.raises(NumericError):
        F.safe_l2_normalize(Tensor(np.zeros((1, 3))))
    np.testing.assert_allclose(np.linalg.norm(F.l2_normalize(Tensor([3.0, 4.0]), axis=0).data), 1.0)


@settings(max_examples=25, deadline=None)
@given(kh=st.integers(1, 7), kw=st.integers(1, 7), ph=st.integers(0, 3), pw=st.integers(0, 3),
       seed=st.integers(0, 10_000))
def test_direct_conv_matches_gemm_conv(kh, kw, ph, pw, seed):
    rng = np.random.default_rng(seed)
    spec = F.ConvSpec((kh, kw), 2, 1, padding=(ph, pw))
    x = rng.standard_normal((3, 2, 8, 9))
    w = rng.standard_normal(spec.weight_shape)
    np.testing.assert_allclose(F.conv2d_direct(Tensor(x), spec, Tensor(w)).data,
                               F.conv2d(Tensor(x), spec, Tensor(w)).data, atol=1e-12)


def test_direct_conv_rejects_stride():
    spec = F.ConvSpec((3, 1), 2, 1, stride=(2, 1))
    with pytest.raises(ContractError):
        F.conv2d_direct(Tensor(np.ones((2, 5, 5))), spec, Tensor(np.ones(spec.weight_shape)))
