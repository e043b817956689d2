import numpy as np
import pytest

from selfrank import distortions as d


def ramp(h=32, w=32, colour=False):
    img = np.add.outer(np.linspace(0.1, 0.9, h), np.linspace(0, 0.2, w)) / 1.1
    if colour:
        img = np.stack([img, img[::-1], img[:, ::-1]], axis=-1)
    return img


def test_schedules_verbatim():
    assert d.KINDS["awgn"].schedule == (0.001, 0.005, 0.01, 0.05)
    assert d.KINDS["blur"].schedule == (1.2, 2.5, 6.5, 15.2)
    assert d.KINDS["jpeg"].schedule == (43, 12, 7, 4)
    assert d.KINDS["impulse"].schedule == (0.005, 0.01, 0.05, 0.1)
    assert [d.DistortionSpec("blur", lv).param for lv in range(1, 5)] == [1.2, 2.5, 6.5, 15.2]


def test_unsupported_kinds_raise():
    for name in ("jpeg2000", "denoising", "sparse_sampling"):
        assert name not in d.SUPPORTED
        with pytest.raises(d.UnsupportedDistortion):
            d.apply_distortion(ramp(), d.DistortionSpec(name, 1))
    with pytest.raises(d.UnsupportedDistortion):
        d.DistortionSpec("nope").param
    with pytest.raises(ValueError):
        d.DistortionSpec("blur", 5).param


def test_mean_shift_kernel():
    img = np.full((4, 4), 0.5)
    assert np.allclose(d.mean_shift(img, 0.25), 0.75)


def test_impulse_fraction():
    img = np.full((256, 256), 0.5)
    out = d.apply_distortion(img, d.DistortionSpec("impulse", 4), seed=3)
    frac = np.mean(out != img)
    assert 0.08 <= frac <= 0.12
    assert set(np.unique(out[out != img])) <= {0.0, 1.0}


def test_zero_blur_is_identity():
    img = ramp()
    assert np.array_equal(d.gaussian_blur(img, 0), img)


def test_blur_reduces_variation():
    img = np.random.default_rng(0).random((32, 32))
    out = d.apply_distortion(img, d.DistortionSpec("blur", 2))
    assert out.std() < 0.5 * img.std()
    assert out.mean() == pytest.approx(img.mean(), abs=0.02)


@pytest.mark.parametrize("kind", d.SUPPORTED)
@pytest.mark.parametrize("colour", [False, True])
def test_every_kind_is_deterministic_and_in_range(kind, colour):
    img = ramp(colour=colour)
    a = d.apply_distortion(img, d.DistortionSpec(kind, 2), seed=7)
    b = d.apply_distortion(img, d.DistortionSpec(kind, 2), seed=7)
    assert a.shape == img.shape
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1


@pytest.mark.parametrize("kind", ["awgn", "blur", "jpeg", "quantization", "impulse", "dither"])
def test_error_grows_with_level(kind):
    img = ramp(64, 64)
    errs = [np.mean((d.apply_distortion(img, d.DistortionSpec(kind, lv), seed=1) - img) ** 2) for lv in (1, 4)]
    assert errs[1] > errs[0]


def test_group_structure():
    g = d.build_distortion_group(ramp(), "blur", levels=4, seed=0)
    assert len(g) == 5
    assert g.phis == [0.0, -1.0, -2.0, -3.0, -4.0]
    assert len(g.pairs()) == 10
    assert np.array_equal(g.images[0], ramp())
    lab = g.labels()
    # the reference outranks every distorted member
    assert np.all(lab[1:, 0] == 1)


def test_colour_roundtrip():
    img = ramp(colour=True)
    assert np.allclose(d.ycbcr_to_rgb(d.rgb_to_ycbcr(img)), img, atol=1e-12)


def test_saturation_zero_removes_chroma():
    out = d.saturation(ramp(colour=True), 0.0)
    ycc = d.rgb_to_ycbcr(out)
    assert np.allclose(ycc[..., 1:], 0.5, atol=1e-12)
