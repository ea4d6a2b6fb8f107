"""Strength-parameterised image operations.

Images are ``(H, W, C)`` uint8 arrays with ``C`` in ``{1, 3}``. A strength
``s`` in [0, 1] maps linearly from an op's neutral parameter to its maximum
parameter, scaled by the global cap ``m_max``; ``s = 0`` is always the
identity transform.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from sada import kernels
from sada.errors import DimensionError

FILL = 128


class AugOp(str, enum.Enum):
    IDENTITY = "identity"
    SHEAR_X = "shear_x"
    SHEAR_Y = "shear_y"
    TRANSLATE_X = "translate_x"
    TRANSLATE_Y = "translate_y"
    ROTATE = "rotate"
    BRIGHTNESS = "brightness"
    COLOR = "color"
    CONTRAST = "contrast"
    SHARPNESS = "sharpness"
    POSTERIZE = "posterize"
    SOLARIZE = "solarize"
    AUTO_CONTRAST = "auto_contrast"
    EQUALIZE = "equalize"


CATALOG = tuple(AugOp)
GEOMETRIC = (AugOp.SHEAR_X, AugOp.SHEAR_Y, AugOp.TRANSLATE_X, AugOp.TRANSLATE_Y, AugOp.ROTATE)
GATED = (AugOp.AUTO_CONTRAST, AugOp.EQUALIZE)


@dataclass(frozen=True)
class OpRange:
    neutral: float
    maximum: float
    signed: bool


# Rotate in degrees, translate as a fraction of the image extent, blend
# factors for the photometric ops, bits for posterize, threshold for solarize.
# Solarize inverts ``v >= threshold``; 256 is the neutral threshold so that
# s = 0 leaves 255-valued pixels alone.
DEFAULT_RANGES = {
    AugOp.IDENTITY: OpRange(0.0, 0.0, False),
    AugOp.SHEAR_X: OpRange(0.0, 0.3, True),
    AugOp.SHEAR_Y: OpRange(0.0, 0.3, True),
    AugOp.TRANSLATE_X: OpRange(0.0, 0.3, True),
    AugOp.TRANSLATE_Y: OpRange(0.0, 0.3, True),
    AugOp.ROTATE: OpRange(0.0, 30.0, True),
    AugOp.BRIGHTNESS: OpRange(1.0, 1.9, True),
    AugOp.COLOR: OpRange(1.0, 1.9, True),
    AugOp.CONTRAST: OpRange(1.0, 1.9, True),
    AugOp.SHARPNESS: OpRange(1.0, 1.9, True),
    AugOp.POSTERIZE: OpRange(8.0, 4.0, False),
    AugOp.SOLARIZE: OpRange(256.0, 0.0, False),
    AugOp.AUTO_CONTRAST: OpRange(0.0, 1.0, False),
    AugOp.EQUALIZE: OpRange(0.0, 1.0, False),
}


@dataclass(frozen=True)
class MagnitudeSpec:
    m_max: float = 1.0
    ops: tuple = CATALOG
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))

    def __post_init__(self):
        if not 0.0 < self.m_max <= 1.0:
            raise ValueError(f"m_max must lie in (0, 1], got {self.m_max}")
        ops = tuple(AugOp(o) for o in self.ops)
        if not ops:
            raise ValueError("augmentation space needs at least one op")
        object.__setattr__(self, "ops", ops)


@dataclass(frozen=True)
class AugDraw:
    op: AugOp
    strength: float
    sign: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "op", AugOp(self.op))
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"strength must lie in [0, 1], got {self.strength}")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")


def sample_op(rng, ops=CATALOG):
    """Pick one op uniformly with the numpy ``Generator`` ``rng``."""
    return ops[int(rng.integers(len(ops)))]


def draw_rng(seed, sample, epoch, stream=0):
    """Independent generator for one (sample, epoch) pair of a run."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(sample), int(epoch)))
    return np.random.Generator(np.random.PCG64(ss))


def draw_for_sample(sample, epoch, strength, seed, spec=None):
    ops = spec.ops if spec is not None else CATALOG
    rng = draw_rng(seed, sample, epoch)
    op = sample_op(rng, ops)
    sign = 1 if rng.integers(2) else -1
    return AugDraw(op, float(strength), sign, int(rng.integers(2**63)))


def magnitude_of(op, strength, spec=None):
    """Transform parameter for ``op`` at ``strength`` (sign not applied)."""
    spec = spec or MagnitudeSpec()
    r = spec.ranges[AugOp(op)]
    value = r.neutral + (strength * spec.m_max) * (r.maximum - r.neutral)
    if op is AugOp.POSTERIZE:
        return int(min(8, max(1, round(value))))
    return value


def signed_param(draw, spec):
    value = magnitude_of(draw.op, draw.strength, spec)
    r = spec.ranges[draw.op]
    if r.signed and draw.sign < 0:
        # mirror about the neutral value
        value = 2.0 * r.neutral - value
    return value


def grayscale(img):
    if img.shape[2] == 1:
        return img[:, :, 0].copy()
    f = img.astype(np.float64)
    g = 0.299 * f[:, :, 0] + 0.587 * f[:, :, 1] + 0.114 * f[:, :, 2]
    return np.clip(np.floor(g + 0.5), 0, 255).astype(np.uint8)


def _affine(img, m):
    return kernels.warp_nearest(img, *m, FILL)


def _geometric_matrix(op, param, h, w):
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    if op is AugOp.SHEAR_X:
        return (1.0, param, -param * cy, 0.0, 1.0, 0.0)
    if op is AugOp.SHEAR_Y:
        return (1.0, 0.0, 0.0, param, 1.0, -param * cx)
    if op is AugOp.TRANSLATE_X:
        return (1.0, 0.0, -param * w, 0.0, 1.0, 0.0)
    if op is AugOp.TRANSLATE_Y:
        return (1.0, 0.0, 0.0, 0.0, 1.0, -param * h)
    # rotate counter-clockwise by ``param`` degrees about the centre
    t = math.radians(param)
    c, s = math.cos(t), math.sin(t)
    return (c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy)


def _auto_contrast(img):
    out = np.empty_like(img)
    for k in range(img.shape[2]):
        ch = img[:, :, k]
        lo, hi = int(ch.min()), int(ch.max())
        if hi <= lo:
            out[:, :, k] = ch
            continue
        lut = np.clip(np.floor((np.arange(256) - lo) * (255.0 / (hi - lo)) + 0.5), 0, 255)
        out[:, :, k] = lut.astype(np.uint8)[ch]
    return out


def _equalize(img):
    out = np.empty_like(img)
    for k in range(img.shape[2]):
        ch = img[:, :, k]
        hist = np.bincount(ch.ravel(), minlength=256)
        nz = np.flatnonzero(hist)
        step = (hist.sum() - hist[nz[-1]]) // 255 if nz.size > 1 else 0
        if step == 0:
            out[:, :, k] = ch
            continue
        lut = (np.concatenate([[0], np.cumsum(hist)[:-1]]) + step // 2) // step
        out[:, :, k] = np.clip(lut, 0, 255).astype(np.uint8)[ch]
    return out


def _check_image(img):
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8 or img.ndim != 3:
        raise DimensionError("image must be an (H, W, C) uint8 array")
    h, w, c = img.shape
    if h == 0 or w == 0:
        raise DimensionError(f"zero-sized image {img.shape}")
    if c not in (1, 3):
        raise DimensionError(f"image must have 1 or 3 channels, got {c}")
    return np.ascontiguousarray(img)


def apply_op(img, draw, spec=None):
    """Return a new image with ``draw`` applied; ``img`` is never modified."""
    spec = spec or MagnitudeSpec()
    img = _check_image(img)
    op = draw.op
    if op is AugOp.IDENTITY or draw.strength == 0.0:
        return img.copy()
    param = signed_param(draw, spec)
    h, w, _ = img.shape
    if op in GEOMETRIC:
        return _affine(img, _geometric_matrix(op, param, h, w))
    if op is AugOp.BRIGHTNESS:
        return kernels.blend(img, np.zeros_like(img), param)
    if op is AugOp.COLOR:
        gray = np.ascontiguousarray(np.repeat(grayscale(img)[:, :, None], img.shape[2], axis=2))
        return kernels.blend(img, gray, param)
    if op is AugOp.CONTRAST:
        mean = int(math.floor(float(grayscale(img).mean()) + 0.5))
        return kernels.blend(img, np.full_like(img, mean), param)
    if op is AugOp.SHARPNESS:
        return kernels.blend(img, kernels.box_blur3(img), param)
    if op is AugOp.POSTERIZE:
        mask = (0xFF << (8 - int(param))) & 0xFF
        return img & np.uint8(mask)
    if op is AugOp.SOLARIZE:
        return np.where(img >= param, 255 - img, img).astype(np.uint8)
    # gated ops fire with probability strength * m_max
    gate = np.random.Generator(np.random.PCG64(draw.seed)).random()
    if gate >= param:
        return img.copy()
    return _auto_contrast(img) if op is AugOp.AUTO_CONTRAST else _equalize(img)


def flip_crop(img, rng, pad=None):
    """Random horizontal flip plus a random crop from a ``pad``-padded copy."""
    h, w, _ = img.shape
    pad = max(1, min(h, w) // 8) if pad is None else pad
    out = img[:, ::-1] if rng.integers(2) else img
    padded = np.full((h + 2 * pad, w + 2 * pad, img.shape[2]), FILL, dtype=np.uint8)
    padded[pad:pad + h, pad:pad + w] = out
    oy, ox = rng.integers(0, 2 * pad + 1, size=2)
    return np.ascontiguousarray(padded[oy:oy + h, ox:ox + w])
