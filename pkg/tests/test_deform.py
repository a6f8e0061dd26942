import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fedcert import deform

finite = st.floats(-2, 2, allow_nan=False)


def blob(N=21, M=21, width=0.35):
    r, c = np.meshgrid(np.linspace(-1, 1, N), np.linspace(-1, 1, M), indexing="ij")
    return np.exp(-((r - 0.1) ** 2 + (c + 0.15) ** 2) / (2 * width ** 2))[..., None]


def test_zero_rotation_flow_is_zero():
    assert np.all(deform.flow_rotation(0.0, 5, 7) == 0)


def test_rotation_flow_at_reference_points():
    # N = M = 3: pixel (row 1, col 2) is (n, m) = (1, 0); (row 2, col 2) is (1, 1)
    f = deform.flow_rotation(np.pi / 2, 3, 3)
    np.testing.assert_allclose(f[1, 2], [-1.0, 1.0], atol=1e-15)
    f = deform.flow_rotation(np.pi, 3, 3)
    np.testing.assert_allclose(f[2, 2], [-2.0, -2.0], atol=1e-15)


def test_translation_flow_is_constant():
    f = deform.flow_translation(0.5, -0.25, 4, 6)
    assert f.shape == (4, 6, 2)
    assert np.max(np.abs(f - np.array([0.5, -0.25]))) == 0
    assert np.all(deform.flow_translation(0, 0, 3, 3) == 0)


def test_affine_flow_definition():
    f = deform.flow_affine(0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 3, 5)
    n, m = 0.5, -1.0  # row 0, col 3 of a 3x5 image
    np.testing.assert_allclose(f[0, 3], [0.1 * n + 0.2 * m + 0.5, -0.3 * n + 0.4 * m - 0.6], atol=1e-15)
    assert np.all(deform.flow_affine(0, 0, 0, 0, 0, 0, 4, 4) == 0)


@settings(max_examples=50, deadline=None)
@given(finite, finite, st.integers(1, 6), st.integers(1, 6))
def test_affine_subsumes_translation_exactly(tu, tv, N, M):
    assert np.array_equal(deform.flow_affine(0, 0, 0, 0, tu, tv, N, M), deform.flow_translation(tu, tv, N, M))


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.integers(1, 6), st.integers(1, 6))
def test_affine_subsumes_rotation_exactly(beta, N, M):
    c, s = np.cos(beta), np.sin(beta)
    assert np.array_equal(deform.flow_affine(c - 1, -s, s, c - 1, 0, 0, N, M), deform.flow_rotation(beta, N, M))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_affine_flow_is_linear(p1, p2):
    lhs = deform.flow_affine(*(p1 + p2), 4, 5)
    rhs = deform.flow_affine(*p1, 4, 5) + deform.flow_affine(*p2, 4, 5)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    lhs = deform.flow_translation(p1[0] + p2[0], p1[1] + p2[1], 3, 3)
    np.testing.assert_allclose(lhs, deform.flow_translation(*p1[:2], 3, 3) + deform.flow_translation(*p2[:2], 3, 3),
                               atol=1e-15)


def test_bilinear_sample_nodes_midpoints_and_padding():
    img = np.arange(12, dtype=float).reshape(3, 4, 1) / 11
    assert deform.bilinear_sample(img, 2, 1) == img[1, 2, 0]
    assert deform.bilinear_sample(img, 1.5, 2) == pytest.approx((img[2, 1, 0] + img[2, 2, 0]) / 2, abs=1e-15)
    assert deform.bilinear_sample(img, 1e6, -4e5) == 0.0
    assert deform.bilinear_sample(img, -1.0, 0.0) == 0.0
    # half a pixel outside the border blends with the zero padding
    assert deform.bilinear_sample(img, 3.5, 0) == pytest.approx(img[0, 3, 0] / 2, abs=1e-15)


@pytest.mark.parametrize("spec", [deform.Rotation(), deform.Translation(), deform.Affine()])
def test_zero_parameter_deformations_are_bit_identical(spec):
    img = np.random.default_rng(0).random((9, 11, 3))
    assert np.array_equal(deform.deform_image(img, spec), img)
    assert np.array_equal(deform.warp(img, np.zeros((9, 11, 2))), img)


@pytest.mark.parametrize("du,dv", [(1, 0), (0, -2), (3, 1), (-2, -3)])
def test_integer_translation_is_an_index_shift(du, dv):
    # (size - 1) / 2 = 4, so a shift of k pixels is a normalized offset of k / 4
    img = np.random.default_rng(1).random((9, 9, 2))
    out = deform.warp(img, deform.flow_translation(du / 4, dv / 4, 9, 9))
    expect = np.zeros_like(img)
    for r in range(9):
        for c in range(9):
            rs, cs = r + dv, c + du
            if 0 <= rs < 9 and 0 <= cs < 9:
                expect[r, c] = img[rs, cs]
    assert np.array_equal(out, expect)


def test_rotation_round_trip_loses_little():
    img = blob()
    back = deform.deform_image(deform.deform_image(img, deform.Rotation(0.3)), deform.Rotation(-0.3))
    err = np.abs(back - img).max()
    assert 0 < err < 0.1


def test_deform_image_parameter_additivity():
    img = blob(9, 9)
    a = deform.deform_image(img, deform.Rotation(0.2), np.array([0.15]))
    b = deform.deform_image(img, deform.Rotation(0.2 + 0.15))
    assert np.array_equal(a, b)
    t = deform.deform_image(img, deform.Translation(), np.array([0.5, 0.0]))
    assert np.array_equal(t, deform.warp(img, deform.flow_translation(0.5, 0.0, 9, 9)))


def test_deform_batch_of_offsets():
    img = blob(7, 7)
    eps = np.array([[0.1], [-0.2], [0.0]])
    out = deform.deform_image(img, deform.Rotation(), eps)
    assert out.shape == (3, 7, 7, 1)
    for e, o in zip(eps, out):
        assert np.array_equal(o, deform.deform_image(img, deform.Rotation(float(e[0]))))


def test_batched_images_with_batched_flows():
    rng = np.random.default_rng(2)
    imgs = rng.random((4, 6, 5, 1))
    flows = rng.normal(0, 0.3, (4, 6, 5, 2))
    out = deform.warp(imgs, flows)
    for i in range(4):
        np.testing.assert_array_equal(out[i], deform.warp(imgs[i], flows[i]))


def test_shape_errors():
    img = np.zeros((4, 4, 1))
    with pytest.raises(ValueError, match="flow shape"):
        deform.warp(img, np.zeros((4, 5, 2)))
    with pytest.raises(ValueError, match="parameters"):
        deform.deform_image(img, deform.Translation(), np.zeros(1))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 6, 2), elements=st.floats(0, 1)), arrays(np.float64, (5, 6, 2), elements=st.floats(-3, 3)))
def test_warp_stays_in_unit_range(img, flow):
    out = deform.warp(img, flow)
    assert out.min() >= 0 and out.max() <= 1


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.2, 3.2), st.permutations([0, 1, 2]))
def test_warp_commutes_with_channel_permutation(beta, perm):
    img = np.random.default_rng(3).random((6, 7, 3))
    f = deform.flow_rotation(beta, 6, 7)
    assert np.array_equal(deform.warp(img[..., perm], f), deform.warp(img, f)[..., perm])
