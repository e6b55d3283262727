import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftcbam.aggregation import GhostVLAD, aggregate, build_aggregator, ghost_vlad, tap
from ftcbam.errors import ContractError, DimensionError
from ftcbam.tensor import Tensor


def _vlad(rng, d, k, g):
    return (Tensor(rng.standard_normal((k + g, d))), Tensor(rng.standard_normal((d, k + g))),
            Tensor(rng.standard_normal(k + g)))


def test_tap_examples():
    frame = np.array([[1.5], [-2.0]])
    np.testing.assert_array_equal(tap(Tensor(frame)).data, [1.5, -2.0])
    np.testing.assert_array_equal(tap(Tensor(np.array([[1.0, 3.0], [2.0, 4.0]]))).data, [2.0, 3.0])


def test_single_real_cluster_closed_form():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 7))
    c = rng.standard_normal((1, 4))
    out = ghost_vlad(Tensor(x), Tensor(c), Tensor(rng.standard_normal((4, 1))), Tensor(np.zeros(1)), 1)
    resid = (x - c.T).sum(axis=1)
    np.testing.assert_allclose(out.data, resid / np.linalg.norm(resid), atol=1e-12)


def test_tap_equals_degenerate_vlad_before_normalization():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 6))
    raw = ghost_vlad(Tensor(x), Tensor(np.zeros((1, 5))), Tensor(np.zeros((5, 1))), Tensor(np.zeros(1)),
                     1, normalize=False)
    np.testing.assert_allclose(raw.data / x.shape[1], tap(Tensor(x)).data, atol=1e-12)


def test_frames_at_ghost_centroid_contribute_nothing_to_real_clusters():
    rng = np.random.default_rng(2)
    d = 4
    real_frames = rng.standard_normal((d, 5))
    ghost = rng.standard_normal(d) * 3
    centroids = np.vstack([rng.standard_normal((2, d)), ghost])
    # assignment scores: a huge weight on the ghost column for frames near the ghost direction
    w = np.zeros((d, 3))
    w[:, 2] = ghost * 40
    b = np.array([0.0, 0.0, -40.0 * ghost @ ghost / 2])
    with_ghost_frames = np.hstack([real_frames, np.repeat(ghost[:, None], 3, axis=1)])
    raw_a = ghost_vlad(Tensor(with_ghost_frames), Tensor(centroids), Tensor(w), Tensor(b), 2,
                       normalize=False).data
    raw_b = ghost_vlad(Tensor(real_frames), Tensor(centroids), Tensor(w), Tensor(b), 2,
                       normalize=False).data
    assert np.max(np.abs(raw_a - raw_b)) < 1e-6 * max(1.0, np.max(np.abs(raw_b)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12))
def test_both_methods_are_frame_order_invariant(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, n))
    perm = rng.permutation(n)
    params = _vlad(rng, 6, 3, 2)
    np.testing.assert_allclose(tap(Tensor(x[:, perm])).data, tap(Tensor(x)).data, atol=1e-14)
    a = ghost_vlad(Tensor(x), *params, 3).data
    b = ghost_vlad(Tensor(x[:, perm]), *params, 3).data
    np.testing.assert_allclose(a, b, atol=1e-14)
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-6


def test_batched_matches_unbatched():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 5, 4))
    params = _vlad(rng, 5, 2, 1)
    batched = ghost_vlad(Tensor(x), *params, 2).data
    for i in range(2):
        np.testing.assert_allclose(batched[i], ghost_vlad(Tensor(x[i]), *params, 2).data, atol=1e-14)


def test_aggregate_dispatch_shapes():
    rng = np.random.default_rng(4)
    frames = Tensor(rng.standard_normal((256, 12)))
    assert aggregate(frames, "tap").shape == (256,)
    vlad = build_aggregator("gvlad", 256, rng, 8, 2)
    out = aggregate(frames, "gvlad", vlad)
    assert out.shape == (2048,) and vlad.out_dim == 2048
    np.testing.assert_array_equal(out.data, aggregate(frames, "gvlad", vlad).data)


def test_aggregate_errors():
    rng = np.random.default_rng(5)
    with pytest.raises(ContractError):
        aggregate(Tensor(np.ones((3, 2))), "attentive")
    with pytest.raises(ContractError):
        build_aggregator("mean", 4, rng)
    with pytest.raises(DimensionError):
        ghost_vlad(Tensor(np.ones((3, 2))), *_vlad(rng, 4, 1, 0), 1)
    with pytest.raises(ContractError):
        GhostVLAD(4, 0, 1, rng)


def test_ghost_centroids_receive_no_gradient():
    rng = np.random.default_rng(6)
    vlad = GhostVLAD(4, 2, 2, rng)
    out = vlad(Tensor(rng.standard_normal((4, 9))))
    (out * Tensor(rng.standard_normal(out.shape))).sum().backward()
    assert np.all(vlad.centroids.grad[2:] == 0)
    assert np.any(vlad.centroids.grad[:2] != 0)
    assert np.any(vlad.assign_w.grad[:, 2:] != 0)
