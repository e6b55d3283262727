import math

import numpy as np
import pytest

from ftcbam import functional as F
from ftcbam.errors import ContractError, DimensionError, NumericError
from ftcbam.head import ArcHead, Embedding, arc_logits, arc_loss, cosine_logits, embed
from ftcbam.tensor import Tensor


def test_embed_zero_weights_gives_bias():
    b = np.arange(256.0)
    out = embed(Tensor(np.ones((3, 10))), Tensor(np.zeros((10, 256))), Tensor(b))
    np.testing.assert_array_equal(out.data, np.tile(b, (3, 1)))


def test_embed_identity_copies_input():
    x = np.random.default_rng(0).standard_normal(256)
    np.testing.assert_array_equal(embed(Tensor(x), Tensor(np.eye(256)), Tensor(np.zeros(256))).data, x)


@pytest.mark.parametrize("width", [256, 2048, 64])
def test_embedding_layer_output_is_256(width):
    layer = Embedding(width, np.random.default_rng(1))
    assert layer(Tensor(np.ones((2, width)))).shape == (2, 256)
    with pytest.raises(DimensionError):
        layer(Tensor(np.ones((2, width + 1))))


def test_zero_margin_reduces_to_scaled_cosine():
    rng = np.random.default_rng(2)
    e, w = rng.standard_normal((4, 8)), rng.standard_normal((8, 5))
    target = rng.integers(0, 5, 4)
    with_target = arc_logits(Tensor(e), Tensor(w), 30.0, 0.0, target).data
    np.testing.assert_allclose(with_target, 30.0 * cosine_logits(Tensor(e), Tensor(w)).data, atol=1e-12)
    np.testing.assert_allclose(arc_logits(Tensor(e), Tensor(w), 30.0, 0.2).data,
                               30.0 * cosine_logits(Tensor(e), Tensor(w)).data, atol=1e-12)


def test_aligned_embedding_target_logit():
    w = np.eye(4)
    out = arc_logits(Tensor(np.array([2.0, 0, 0, 0])), Tensor(w), 30.0, 0.2, 0).data
    assert out[0] == pytest.approx(30 * math.cos(0.2), abs=1e-12)
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)


def test_margin_monotonically_lowers_target_logit():
    rng = np.random.default_rng(3)
    e, w = rng.standard_normal(6), rng.standard_normal((6, 3))
    theta = math.acos(float(cosine_logits(Tensor(e), Tensor(w)).data[1]))
    margins = [m for m in np.linspace(0, 1.5, 40) if theta + m < math.pi]
    values = [arc_logits(Tensor(e), Tensor(w), 30.0, m, 1).data[1] for m in margins]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_rescaling_embedding_leaves_logits_unchanged():
    rng = np.random.default_rng(4)
    e, w = rng.standard_normal((3, 8)), rng.standard_normal((8, 4))
    a = arc_logits(Tensor(e), Tensor(w), 30.0, 0.2, [0, 1, 2]).data
    b = arc_logits(Tensor(2 * e), Tensor(w), 30.0, 0.2, [0, 1, 2]).data
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_no_nan_over_full_cosine_range():
    # embeddings at every angle to the target column, including exactly opposite
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    for ang in np.linspace(0, math.pi, 181):
        e = np.array([[math.cos(ang), math.sin(ang)]])
        out = arc_logits(Tensor(e), Tensor(w), 30.0, 0.2, [0]).data
        assert np.all(np.isfinite(out))


def test_easy_margin_guard_past_pi_minus_m():
    m = 0.3
    w = np.array([[1.0], [0.0]])
    ang = math.pi - 0.1                     # cos(theta) <= cos(pi - m)
    e = np.array([[math.cos(ang), math.sin(ang)]])
    out = arc_logits(Tensor(e), Tensor(w), 1.0, m, [0]).data[0, 0]
    assert out == pytest.approx(math.cos(ang) - m * math.sin(m), abs=1e-12)


def test_loss_examples():
    s = 7
    assert float(arc_loss(Tensor(np.zeros((1, s))), [3]).data) == pytest.approx(math.log(s), abs=1e-12)
    losses = []
    for t in np.linspace(0, 20, 20):     # past ~30, logsumexp - t cancels to rounding noise
        logits = np.zeros((1, 4))
        logits[0, 2] = t
        losses.append(float(arc_loss(Tensor(logits), [2]).data))
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-7


def test_zero_embedding_is_a_numeric_error():
    with pytest.raises(NumericError):
        arc_logits(Tensor(np.zeros(4)), Tensor(np.eye(4)), 30.0, 0.2, 0)


def test_argument_contracts():
    w = Tensor(np.eye(3))
    with pytest.raises(ContractError):
        arc_logits(Tensor(np.ones(3)), w, 30.0, 0.2, 3)
    with pytest.raises(ContractError):
        arc_logits(Tensor(np.ones(3)), w, 30.0, math.pi / 2)
    with pytest.raises(ContractError):
        arc_logits(Tensor(np.ones(3)), w, 0.0, 0.2)


def test_head_margin_override():
    head = ArcHead(8, 3, np.random.default_rng(5), 30.0, 0.2)
    e = Tensor(np.random.default_rng(6).standard_normal((2, 8)))
    plain = head(e, [0, 1], margin=0.0).data
    np.testing.assert_allclose(plain, 30.0 * cosine_logits(e, head.weight).data, atol=1e-12)
    assert F.cross_entropy(head(e, [0, 1]), [0, 1]).data > F.cross_entropy(head(e, [0, 1], 0.0), [0, 1]).data
