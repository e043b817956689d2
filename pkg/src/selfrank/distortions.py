"""Parametric image distortions and distortion-ranked groups.

Images are float64 arrays in [0, 1], either (H, W) grey or (H, W, 3) RGB.
Colour operations on a grey image treat it as R = G = B and return the
luma of the result.

Each supported kind has a four-level schedule taken from the TID2013
distortion list, indexed by severity (level 1 mildest). The ``appendix``
field is the TID2013 distortion number.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .groups import RankedGroup


class UnsupportedDistortion(ValueError):
    pass


@dataclass(frozen=True)
class Kind:
    name: str
    appendix: int
    schedule: tuple | None
    unit: str = ""


KINDS = {k.name: k for k in [
    Kind("awgn", 1, (0.001, 0.005, 0.01, 0.05), "noise variance"),
    Kind("color_noise", 2, (0.0140, 0.0198, 0.0343, 0.0524), "noise variance in YCbCr"),
    Kind("spatially_correlated_noise", 3, None),
    Kind("masked_noise", 4, None),
    Kind("hf_noise", 5, (0.001, 0.005, 0.01, 0.05), "noise variance before high-pass"),
    Kind("impulse", 6, (0.005, 0.01, 0.05, 0.1), "salt and pepper density"),
    Kind("quantization", 7, (27, 39, 55, 76), "quantization step (8-bit units)"),
    Kind("blur", 8, (1.2, 2.5, 6.5, 15.2), "Gaussian std (pixels)"),
    Kind("denoising", 9, None),
    Kind("jpeg", 10, (43, 12, 7, 4), "quality factor"),
    Kind("jpeg2000", 11, None),
    Kind("jpeg_transmission", 12, None),
    Kind("jpeg2000_transmission", 13, None),
    Kind("pattern_noise", 14, (30, 70, 150, 300), "15x15 patches moved"),
    Kind("block", 15, (2, 4, 8, 16), "32x32 blocks replaced"),
    Kind("mean_shift_up", 16, (15, 30, 45, 60), "shift (8-bit units)"),
    Kind("mean_shift_down", 16, (-15, -30, -45, -60), "shift (8-bit units)"),
    Kind("contrast_down", 17, (0.85, 0.7, 0.55, 0.4), "contrast factor"),
    Kind("contrast_up", 17, (1.2, 1.4, 1.6, 1.8), "contrast factor"),
    Kind("saturation", 18, (0.4, 0, -0.4, -0.8), "chroma factor"),
    Kind("mult_noise", 19, (0.05, 0.09, 0.13, 0.2), "noise variance"),
    Kind("comfort_noise", 20, None),
    Kind("noisy_compression", 21, None),
    Kind("dither", 22, (64, 32, 16, 8), "levels per channel"),
    Kind("chroma_aberration", 23, ((2, 1), (6, 3), (10, 5), (14, 7)), "R, B shift (pixels)"),
    Kind("sparse_sampling", 24, None),
]}

SUPPORTED = tuple(k for k, v in KINDS.items() if v.schedule is not None)


def kind_info(name) -> Kind:
    try:
        return KINDS[name]
    except KeyError:
        raise UnsupportedDistortion(f"unknown distortion kind {name!r}") from None


@dataclass(frozen=True)
class DistortionSpec:
    """A kind plus a severity level; ``value`` overrides the scheduled parameter."""

    kind: str
    level: int = 1
    value: object = None

    @property
    def param(self):
        if self.value is not None:
            return self.value
        info = kind_info(self.kind)
        if info.schedule is None:
            raise UnsupportedDistortion(f"#{info.appendix:02d} {self.kind} is not implemented")
        if not 1 <= self.level <= len(info.schedule):
            raise ValueError(f"level {self.level} outside 1..{len(info.schedule)} for {self.kind}")
        return info.schedule[self.level - 1]


# Full-range BT.601 luma/chroma.
def rgb_to_ycbcr(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    return np.stack([y, 0.5 + (b - y) / 1.772, 0.5 + (r - y) / 1.402], axis=-1)


def ycbcr_to_rgb(ycc):
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 0.5, ycc[..., 2] - 0.5
    r = y + 1.402 * cr
    b = y + 1.772 * cb
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.stack([r, g, b], axis=-1)


def _as_rgb(img):
    return (np.repeat(img[..., None], 3, axis=-1), True) if img.ndim == 2 else (img, False)


def _restore(rgb, was_grey):
    return rgb_to_ycbcr(rgb)[..., 0] if was_grey else rgb


def awgn(img, var, rng):
    return img + rng.normal(0.0, np.sqrt(var), img.shape)


def color_noise(img, var, rng):
    rgb, grey = _as_rgb(img)
    ycc = rgb_to_ycbcr(rgb) + rng.normal(0.0, np.sqrt(var), rgb.shape)
    return _restore(ycbcr_to_rgb(ycc), grey)


def hf_noise(img, var, rng):
    """White Gaussian noise passed through an ideal radial high-pass at half Nyquist."""
    h, w = img.shape[:2]
    fy = sfft.fftfreq(h)[:, None]
    fx = sfft.fftfreq(w)[None, :]
    keep = np.hypot(fy, fx) > 0.25
    chans = 1 if img.ndim == 2 else img.shape[2]
    noise = rng.normal(0.0, np.sqrt(var), (chans, h, w))
    noise = np.real(sfft.ifft2(sfft.fft2(noise) * keep))
    return img + (noise[0] if img.ndim == 2 else np.moveaxis(noise, 0, -1))


def impulse(img, density, rng):
    u = rng.random(img.shape)
    out = img.copy()
    out[u < density / 2] = 0.0
    out[(u >= density / 2) & (u < density)] = 1.0
    return out


def quantize(img, step):
    q = step / 255.0
    return np.floor(img / q + 0.5) * q


def gaussian_blur(img, sigma):
    if sigma <= 0:
        return img.copy()
    sig = (sigma, sigma) if img.ndim == 2 else (sigma, sigma, 0)
    return ndimage.gaussian_filter(img, sig, mode="reflect", truncate=3.0)


_JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def jpeg_table(quality):
    """IJG scaling of the standard luminance table."""
    quality = int(np.clip(quality, 1, 100))
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((_JPEG_LUMA * scale + 50) / 100), 1, 255)


def _block_dct_quantize(chan, table):
    h, w = chan.shape
    ph, pw = -h % 8, -w % 8
    x = np.pad(chan * 255.0 - 128.0, ((0, ph), (0, pw)), mode="edge")
    blocks = x.reshape(x.shape[0] // 8, 8, x.shape[1] // 8, 8).transpose(0, 2, 1, 3)
    coef = sfft.dctn(blocks, axes=(2, 3), norm="ortho")
    coef = np.round(coef / table) * table
    back = sfft.idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(x.shape)
    return (back[:h, :w] + 128.0) / 255.0


def jpeg_proxy(img, quality):
    """Codec-free JPEG stand-in: 8x8 block DCT quantization of luminance."""
    table = jpeg_table(quality)
    if img.ndim == 2:
        return _block_dct_quantize(img, table)
    ycc = rgb_to_ycbcr(img)
    ycc[..., 0] = _block_dct_quantize(ycc[..., 0], table)
    return ycbcr_to_rgb(ycc)


def pattern_noise(img, count, rng, patch=15):
    """Copy ``count`` patches to randomly displaced nearby positions."""
    h, w = img.shape[:2]
    p = min(patch, h, w)
    out = img.copy()
    reach = p // 2
    for _ in range(int(count)):
        y = rng.integers(0, h - p + 1)
        x = rng.integers(0, w - p + 1)
        dy, dx = rng.integers(-reach, reach + 1, size=2)
        ty = int(np.clip(y + dy, 0, h - p))
        tx = int(np.clip(x + dx, 0, w - p))
        out[ty:ty + p, tx:tx + p] = img[y:y + p, x:x + p]
    return out


def block_distortion(img, count, rng, block=32):
    h, w = img.shape[:2]
    b = min(block, h, w)
    out = img.copy()
    for _ in range(int(count)):
        y = rng.integers(0, h - b + 1)
        x = rng.integers(0, w - b + 1)
        colour = rng.random() if img.ndim == 2 else rng.random(img.shape[2])
        out[y:y + b, x:x + b] = colour
    return out


def mean_shift(img, shift):
    return img + shift


def contrast(img, factor):
    m = img.mean()
    return (img - m) * factor + m


def saturation(img, factor):
    if img.ndim == 2:
        return img.copy()
    ycc = rgb_to_ycbcr(img)
    ycc[..., 1:] = 0.5 + (ycc[..., 1:] - 0.5) * factor
    return ycbcr_to_rgb(ycc)


def mult_noise(img, var, rng):
    return img + img * rng.normal(0.0, np.sqrt(var), img.shape)


_BAYER4 = np.array([[0, 8, 2, 10], [12, 4, 14, 6], [3, 11, 1, 9], [15, 7, 13, 5]], dtype=np.float64)


def dither(img, levels):
    """Quantize to ``levels`` values per channel with 4x4 ordered dithering."""
    h, w = img.shape[:2]
    t = (np.tile(_BAYER4, (h // 4 + 1, w // 4 + 1))[:h, :w] + 0.5) / 16.0
    if img.ndim == 3:
        t = t[..., None]
    n = levels - 1
    return np.floor(np.clip(img, 0, 1) * n + t) / n


def _shift_cols(chan, dx):
    if dx == 0:
        return chan.copy()
    idx = np.clip(np.arange(chan.shape[1]) - dx, 0, chan.shape[1] - 1)
    return chan[:, idx]


def chroma_aberration(img, shifts):
    r_shift, b_shift = shifts
    rgb, grey = _as_rgb(img)
    out = rgb.copy()
    out[..., 0] = _shift_cols(rgb[..., 0], int(r_shift))
    out[..., 2] = _shift_cols(rgb[..., 2], -int(b_shift))
    return _restore(out, grey)


_APPLY = {
    "awgn": lambda im, v, rng: awgn(im, v, rng),
    "color_noise": lambda im, v, rng: color_noise(im, v, rng),
    "hf_noise": lambda im, v, rng: hf_noise(im, v, rng),
    "impulse": lambda im, v, rng: impulse(im, v, rng),
    "quantization": lambda im, v, rng: quantize(im, v),
    "blur": lambda im, v, rng: gaussian_blur(im, v),
    "jpeg": lambda im, v, rng: jpeg_proxy(im, v),
    "pattern_noise": lambda im, v, rng: pattern_noise(im, v, rng),
    "block": lambda im, v, rng: block_distortion(im, v, rng),
    "mean_shift_up": lambda im, v, rng: mean_shift(im, v / 255.0),
    "mean_shift_down": lambda im, v, rng: mean_shift(im, v / 255.0),
    "contrast_down": lambda im, v, rng: contrast(im, v),
    "contrast_up": lambda im, v, rng: contrast(im, v),
    "saturation": lambda im, v, rng: saturation(im, v),
    "mult_noise": lambda im, v, rng: mult_noise(im, v, rng),
    "dither": lambda im, v, rng: dither(im, v),
    "chroma_aberration": lambda im, v, rng: chroma_aberration(im, v),
}


def apply_distortion(img, spec: DistortionSpec, seed=0) -> np.ndarray:
    """Distort ``img`` deterministically; the result is clamped to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, C) image, got {img.shape}")
    info = kind_info(spec.kind)
    fn = _APPLY.get(spec.kind)
    if fn is None:
        raise UnsupportedDistortion(f"#{info.appendix:02d} {spec.kind} is not implemented")
    rng = np.random.default_rng(seed)
    return np.clip(fn(img, spec.param, rng), 0.0, 1.0)


def build_distortion_group(img, kind, levels=4, seed=0, source_id=0) -> RankedGroup:
    """Reference image plus ``levels`` increasingly distorted versions.

    phi = -level, so the undistorted member has the largest phi.
    """
    if levels < 2:
        raise ValueError("a distortion group needs at least 2 levels")
    info = kind_info(kind)
    if info.schedule is None:
        raise UnsupportedDistortion(f"#{info.appendix:02d} {kind} is not implemented")
    if levels > len(info.schedule):
        raise ValueError(f"{kind} has only {len(info.schedule)} levels")
    img = np.asarray(img, dtype=np.float64)
    group = RankedGroup(source_id, [0.0], [np.clip(img, 0.0, 1.0)], [None])
    for level in range(1, levels + 1):
        spec = DistortionSpec(kind, level)
        sub = int(np.random.SeedSequence([seed, level]).generate_state(1)[0])
        group.phis.append(-float(level))
        group.images.append(apply_distortion(img, spec, sub))
        group.descriptors.append(spec)
    return group
