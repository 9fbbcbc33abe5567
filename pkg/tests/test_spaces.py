import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage import color as skcolor

from colourvq import spaces as S
from colourvq.spaces import ColourSpace, ColourTriplet, ImageBuffer

unit = st.floats(0.0, 1.0, allow_nan=False)
rgb_triplets = arrays(np.float64, 3, elements=unit)


def reference_srgb_decode(v):
    # textbook piecewise form, written independently of the package
    if v <= 0.04045:
        return v / 12.92
    return ((v + 0.055) / 1.055) ** 2.4


def hue_aware_error(a, b, space):
    d = np.abs(np.asarray(a) - np.asarray(b))
    if space == ColourSpace.HSV:
        d[..., 0] = np.minimum(d[..., 0], 360.0 - d[..., 0])
        # hue carries no information once chroma has vanished, nor saturation at black
        a = np.asarray(a)
        d[..., 0] = np.where(a[..., 1] * a[..., 2] > 1e-9, d[..., 0], 0.0)
        d[..., 1] = np.where(a[..., 2] > 1e-9, d[..., 1], 0.0)
    return d


# --------------------------------------------------------------------------
# tags


def test_parse_aliases():
    assert ColourSpace.parse("rgb") == ColourSpace.SRGB
    assert ColourSpace.parse("SRGB") == ColourSpace.SRGB
    assert ColourSpace.parse("linrgb") == ColourSpace.LINEAR_RGB
    assert ColourSpace.parse(ColourSpace.DKL) == ColourSpace.DKL
    with pytest.raises(ValueError):
        ColourSpace.parse("cmyk")


def test_tags_are_stable():
    assert [int(s) for s in ColourSpace] == [0, 1, 2, 3, 4, 5]


# --------------------------------------------------------------------------
# sRGB transfer


def test_srgb_fixed_points():
    assert srgb_roundtrip_value(0.0) == 0.0
    assert S.srgb_to_linear(np.array([1.0, 1.0, 1.0])) == pytest.approx([1.0, 1.0, 1.0], abs=1e-15)
    assert S.srgb_to_linear(np.zeros(3)).tolist() == [0.0, 0.0, 0.0]


def srgb_roundtrip_value(v):
    return float(S.linear_to_srgb(S.srgb_to_linear(v)))


def test_srgb_mid_grey_matches_reference():
    g = reference_srgb_decode(0.5)
    out = S.srgb_decode(ColourTriplet.of([0.5, 0.5, 0.5], "rgb"))
    assert out.space == ColourSpace.LINEAR_RGB
    assert out.as_array() == pytest.approx([g] * 3, abs=1e-12)
    assert g == pytest.approx(0.21404114, abs=1e-8)


def test_srgb_decode_clamps_and_flags():
    t = S.srgb_decode(ColourTriplet.of([-0.2, 0.5, 1.3], "rgb"))
    assert t.clamped
    assert t.c0 == 0.0 and t.c2 == pytest.approx(1.0)
    assert not S.srgb_decode(ColourTriplet.of([0.2, 0.5, 0.3], "rgb")).clamped


def test_srgb_encode_flags_out_of_gamut_without_clamping():
    t = S.srgb_encode(ColourTriplet.of([1.5, -0.1, 0.5], "linear_rgb"))
    assert t.out_of_gamut
    assert t.c0 > 1.0 and t.c1 < 0.0


def test_triplet_ops_check_their_input_tag():
    with pytest.raises(ValueError):
        S.rgb_to_lab(ColourTriplet.of([0.1, 0.2, 0.3], "lab"))


@given(rgb_triplets)
def test_srgb_transfer_matches_reference(v):
    ref = [reference_srgb_decode(x) for x in v]
    assert np.allclose(S.srgb_to_linear(v), ref, atol=1e-14)


@given(rgb_triplets)
def test_srgb_encode_inverts_decode(v):
    assert np.allclose(S.linear_to_srgb(S.srgb_to_linear(v)), v, atol=1e-12)


# --------------------------------------------------------------------------
# Lab


def test_lab_white_and_black():
    assert S.rgb_to_lab(ColourTriplet.of([1, 1, 1], "linear_rgb")).as_array() == pytest.approx([100, 0, 0], abs=1e-9)
    assert S.rgb_to_lab(ColourTriplet.of([0, 0, 0], "linear_rgb")).as_array() == pytest.approx([0, 0, 0], abs=1e-12)


def test_lab_linear_mid_grey_matches_cie_formula():
    # Y = 0.5 relative to white; L* = 116 * Y^(1/3) - 16
    expected = 116.0 * 0.5 ** (1.0 / 3.0) - 16.0
    lab = S.rgb_to_lab(ColourTriplet.of([0.5, 0.5, 0.5], "linear_rgb")).as_array()
    assert lab == pytest.approx([expected, 0.0, 0.0], abs=1e-9)


def test_lab_matches_skimage_on_random_pixels():
    rng = np.random.default_rng(3)
    srgb = rng.random((500, 3))
    ours = S.convert_array(srgb, "rgb", "lab")
    ref = skcolor.rgb2lab(srgb[None], illuminant="D65", observer="2")[0]
    # matrices differ in rounding between implementations
    assert np.max(np.abs(ours - ref)) < 0.02


def test_lab_inverse_flags_out_of_gamut():
    t = S.lab_to_rgb(ColourTriplet.of([50, 120, -120], "lab"))
    assert t.out_of_gamut


# --------------------------------------------------------------------------
# LMS / DKL


def test_lms_white_is_ones():
    assert S.rgb_to_lms(ColourTriplet.of([1, 1, 1], "linear_rgb")).as_array() == pytest.approx([1, 1, 1], abs=1e-12)


def test_lms_matches_direct_matrix_product():
    rng = np.random.default_rng(0)
    v = rng.random(3)
    expected = [sum(S.RGB_TO_LMS[i, j] * v[j] for j in range(3)) for i in range(3)]
    assert S.rgb_to_lms(ColourTriplet.of(v, "linear_rgb")).as_array() == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("g", [0.0, 0.18, 0.5, 1.0])
def test_dkl_grey_axis_has_no_chroma(g):
    d = S.rgb_to_dkl(ColourTriplet.of([g, g, g], "linear_rgb")).as_array()
    assert d[1:] == pytest.approx([0.0, 0.0], abs=1e-12)
    assert d[0] == pytest.approx(g, abs=1e-12)


def test_dkl_chromatic_axes_span_unit_range_over_cube():
    corners = np.array([[r, g, b] for r in (0, 1) for g in (0, 1) for b in (0, 1)], dtype=float)
    d = S.linear_to_dkl(corners)
    assert np.max(np.abs(d[:, 1])) == pytest.approx(1.0)
    assert np.max(np.abs(d[:, 2])) == pytest.approx(1.0)


@given(rgb_triplets)
def test_dkl_round_trip(v):
    t = ColourTriplet.of(v, "linear_rgb")
    assert np.allclose(S.dkl_to_rgb(S.rgb_to_dkl(t)).as_array(), v, atol=1e-6)


@given(rgb_triplets, rgb_triplets, st.floats(-2, 2), st.floats(-2, 2))
def test_lms_and_dkl_are_linear(a, b, alpha, beta):
    for f in (S.linear_to_lms, S.linear_to_dkl):
        lhs = f(alpha * a + beta * b)
        rhs = alpha * f(a) + beta * f(b)
        assert np.allclose(lhs, rhs, atol=1e-9, rtol=0)


# --------------------------------------------------------------------------
# HSV


@pytest.mark.parametrize(
    "rgb,hsv",
    [
        ([1, 0, 0], [0, 1, 1]),
        ([0, 1, 0], [120, 1, 1]),
        ([0, 0, 1], [240, 1, 1]),
        ([0.4, 0.4, 0.4], [0, 0, 0.4]),
        ([0, 0, 0], [0, 0, 0]),
    ],
)
def test_hsv_known_values(rgb, hsv):
    assert S.rgb_to_hsv(ColourTriplet.of(rgb, "rgb")).as_array() == pytest.approx(hsv, abs=1e-12)


@given(rgb_triplets)
def test_hsv_ranges(v):
    h, s, val = S.srgb_to_hsv(v)
    assert 0.0 <= h < 360.0
    assert 0.0 <= s <= 1.0 and 0.0 <= val <= 1.0


# --------------------------------------------------------------------------
# round trips and achromatic preservation


@settings(max_examples=200)
@given(rgb_triplets, st.sampled_from(list(ColourSpace)))
def test_round_trip_every_space(v, space):
    there = S.convert_array(v, "rgb", space)
    back = S.convert_array(there, space, "rgb")
    assert np.all(np.abs(back - v) < 1e-5)


@settings(max_examples=100)
@given(rgb_triplets, st.sampled_from(list(ColourSpace)), st.sampled_from(list(ColourSpace)))
def test_round_trip_between_any_pair(v, a, b):
    x = S.convert_array(v, "rgb", a)
    y = S.convert_array(S.convert_array(x, a, b), b, a)
    assert np.all(hue_aware_error(x, y, a) < 1e-5 * max(1.0, np.abs(x).max()))


@given(unit)
def test_achromatic_preservation(g):
    grey = np.array([g, g, g])
    lab = S.convert_array(grey, "rgb", "lab")
    dkl = S.convert_array(grey, "rgb", "dkl")
    hsv = S.convert_array(grey, "rgb", "hsv")
    assert np.allclose(lab[1:], 0.0, atol=1e-9)
    assert np.allclose(dkl[1:], 0.0, atol=1e-12)
    assert hsv[1] == 0.0 and hsv[0] == 0.0


@given(rgb_triplets)
def test_lightness_in_range_for_in_gamut_input(v):
    L = S.convert_array(v, "rgb", "lab")[0]
    assert -1e-9 <= L <= 100.0 + 1e-9


def test_convert_triplet_routes_through_hub():
    t = ColourTriplet.of([0.2, 0.7, 0.4], "rgb")
    direct = S.convert_triplet(t, "dkl")
    manual = S.rgb_to_dkl(S.srgb_decode(t))
    assert direct.as_array() == pytest.approx(manual.as_array(), abs=1e-14)


# --------------------------------------------------------------------------
# images


def test_convert_image_identity_is_bitwise_copy():
    rng = np.random.default_rng(1)
    img = ImageBuffer(rng.random((4, 5, 3)), ColourSpace.SRGB)
    out = S.convert_image(img, "rgb")
    assert out.data.tobytes() == img.data.tobytes()
    assert out.data is not img.data


def test_convert_image_white_pixel_to_lab():
    img = ImageBuffer(np.ones((1, 1, 3)), ColourSpace.SRGB)
    out = S.convert_image(img, "lab")
    assert out.space == ColourSpace.LAB
    assert out.data[0, 0] == pytest.approx([100, 0, 0], abs=1e-9)


def test_convert_image_dkl_round_trip():
    rng = np.random.default_rng(2)
    img = ImageBuffer(rng.random((8, 8, 3)), ColourSpace.SRGB)
    back = S.convert_image(S.convert_image(img, "dkl"), "rgb")
    assert np.mean(np.abs(back.data - img.data)) < 1e-5


def test_image_buffer_validates_shape():
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((4, 4)), ColourSpace.SRGB)


def test_normalise_lab_white():
    assert S.normalize_array(np.array([100.0, 0.0, 0.0]), "lab") == pytest.approx([1.0, 0.5, 0.5])


def test_normalise_srgb_is_identity():
    rng = np.random.default_rng(4)
    img = ImageBuffer(rng.random((3, 3, 3)), ColourSpace.SRGB)
    assert np.array_equal(S.normalize_for_network(img).data, img.data)


@given(arrays(np.float64, (5, 3), elements=st.floats(-500, 500)), st.sampled_from(list(ColourSpace)))
def test_normalise_round_trip(a, space):
    assert np.allclose(S.denormalize_array(S.normalize_array(a, space), space), a, atol=1e-6)


def test_normalise_unknown_tag():
    with pytest.raises(ValueError):
        S.normalize_array(np.zeros(3), 17)


def test_gamut_bounds_csv_lists_every_channel():
    rows = S.gamut_bounds_csv().strip().splitlines()
    assert rows[0] == "space,channel,low,high"
    assert len(rows) == 1 + 3 * len(ColourSpace)
    assert "lab,1,-128.0,128.0" in rows


# --------------------------------------------------------------------------
# channel correlations


def test_identical_channels_correlate_perfectly():
    rng = np.random.default_rng(5)
    imgs = []
    for _ in range(3):
        g = rng.random((6, 6, 1))
        imgs.append(ImageBuffer(np.repeat(g, 3, axis=2), ColourSpace.LINEAR_RGB))
    rep = S.channel_correlations(imgs, "linear_rgb", pixels_per_image=20, seed=0)
    assert (rep.r01, rep.r02, rep.r12) == pytest.approx((1.0, 1.0, 1.0))
    assert rep.sample_count == 60


def test_achromatic_images_flag_constant_dkl_channels():
    rng = np.random.default_rng(6)
    imgs = [ImageBuffer(np.repeat(rng.random((5, 5, 1)), 3, axis=2), ColourSpace.SRGB) for _ in range(4)]
    rep = S.channel_correlations(imgs, "dkl", pixels_per_image=10)
    assert rep.degenerate == (True, True, True)
    assert (rep.r01, rep.r02, rep.r12) == (0.0, 0.0, 0.0)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(5)), st.integers(0, 1000))
def test_correlations_ignore_image_order(perm, seed):
    rng = np.random.default_rng(7)
    imgs = [ImageBuffer(rng.random((6, 7, 3)), ColourSpace.SRGB) for _ in range(5)]
    a = S.channel_correlations(imgs, "lab", pixels_per_image=15, seed=seed)
    b = S.channel_correlations([imgs[i] for i in perm], "lab", pixels_per_image=15, seed=seed)
    assert a == b


def test_correlations_need_images():
    with pytest.raises(ValueError):
        S.channel_correlations([], "rgb")
