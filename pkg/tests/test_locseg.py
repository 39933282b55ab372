import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from m2vsl.errors import DegenerateInputError, DimensionError, UsageError
from m2vsl.locseg import (aggregate_scales, class_aware_maps, minmax, per_scale_maps,
                          threshold_mask, upsample_bilinear)

maps2d = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                elements=st.floats(-3, 3, allow_nan=False))


def test_upsample_is_identity_at_same_size(rng):
    m = rng.standard_normal((4, 4))
    np.testing.assert_array_equal(upsample_bilinear(m, (4, 4)), m)


def test_upsample_corner_aligned_hand_case():
    out = upsample_bilinear(np.array([[0.0, 1.0], [2.0, 3.0]]), (3, 3))
    np.testing.assert_allclose(out, [[0, 0.5, 1], [1, 1.5, 2], [2, 2.5, 3]])


def test_upsample_constant_and_single_pixel():
    np.testing.assert_array_equal(upsample_bilinear(np.array([[2.5]]), (3, 4)), np.full((3, 4), 2.5))


@given(maps2d)
def test_upsample_preserves_range_and_corners(m):
    out = upsample_bilinear(m, (8, 9))
    assert out.min() >= m.min() - 1e-12 and out.max() <= m.max() + 1e-12
    for (i, j), (a, b) in zip([(0, 0), (0, -1), (-1, 0), (-1, -1)],
                              [(0, 0), (0, -1), (-1, 0), (-1, -1)]):
        assert out[i, j] == pytest.approx(m[a, b])


def test_per_scale_maps_are_cosines(rng):
    a = rng.standard_normal(5)
    v = rng.standard_normal((3, 2, 5))
    (m,) = per_scale_maps(a, [v])
    ref = np.array([[v[i, j] @ a / np.linalg.norm(v[i, j]) / np.linalg.norm(a) for j in range(2)]
                    for i in range(3)])
    np.testing.assert_allclose(m, ref, rtol=1e-12)
    batched = per_scale_maps(a[None], [v[None]])[0][0]
    np.testing.assert_allclose(batched, ref, rtol=1e-12)
    with pytest.raises(DimensionError):
        per_scale_maps(a, [np.ones((2, 2, 4))])


def test_aggregate_is_order_independent(rng):
    maps = [rng.standard_normal((4, 4)), rng.standard_normal((2, 2)), rng.standard_normal((1, 1))]
    a = aggregate_scales(maps, (8, 8))
    b = aggregate_scales(maps[::-1], (8, 8))
    assert a.tobytes() == b.tobytes()
    with pytest.raises(UsageError):
        aggregate_scales([], (4, 4))


def test_threshold_rules():
    m = np.array([[0.0, 0.4], [0.6, 1.0]])
    np.testing.assert_array_equal(threshold_mask(m), [[0, 0], [1, 1]])
    np.testing.assert_array_equal(threshold_mask(m, "fixed", 0.5), [[0, 0], [1, 1]])
    np.testing.assert_array_equal(threshold_mask(np.full((2, 2), 0.3)), np.ones((2, 2)))
    with pytest.raises(UsageError):
        threshold_mask(m, "otsu")
    with pytest.raises(DegenerateInputError):
        threshold_mask(np.array([[np.nan]]))


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.integers(-64, 64).map(float)),
       st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.integers(-100, 100))
def test_minmax_mask_invariant_to_affine_rescale(m, scale, shift):
    # small integers, power-of-two scales: the rescale is exact in floating point
    np.testing.assert_array_equal(threshold_mask(m), threshold_mask(m * scale + shift))


@given(maps2d)
def test_minmax_range(m):
    n = minmax(m)
    assert n.min() >= 0 and n.max() <= 1


def test_class_aware_maps_shape_and_values(rng):
    patches, classes = rng.standard_normal((4, 3)), rng.standard_normal((2, 3))
    out = class_aware_maps(patches, classes, (2, 2), (2, 2))
    assert out.shape == (2, 2, 2)
    c0 = classes[0] / np.linalg.norm(classes[0])
    np.testing.assert_allclose(out[0].ravel(), patches @ c0 / np.linalg.norm(patches, axis=1))
    with pytest.raises(DimensionError):
        class_aware_maps(patches, classes, (3, 3), (6, 6))
