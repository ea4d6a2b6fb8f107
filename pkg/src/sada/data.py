"""Dataset loading and synthesis.

Datasets are immutable and hold either 8-bit images ``(N, H, W, C)`` or a
float feature matrix ``(N, D)``. Images are converted to features
(flattened, scaled to [0, 1]) only after augmentation.
"""
from __future__ import annotations

import gzip
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from sada.errors import (
    BadMagicError,
    CountMismatchError,
    DataError,
    DimensionError,
    EmptyClassError,
    InconsistentShapeError,
    InsufficientClassError,
    TruncatedFileError,
    UndecodableError,
)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    labels: np.ndarray
    num_classes: int
    images: np.ndarray | None = None
    features: np.ndarray | None = None
    split: str = "train"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise DataError("dataset must contain at least one sample")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        if (self.images is None) == (self.features is None):
            raise DataError("exactly one of images / features must be given")
        data = self.images if self.images is not None else self.features
        if len(data) != labels.size:
            raise CountMismatchError(f"{len(data)} samples but {labels.size} labels")
        if self.images is not None and (self.images.dtype != np.uint8 or self.images.ndim != 4):
            raise DataError("images must be an (N, H, W, C) uint8 array")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size

    @property
    def is_image(self):
        return self.images is not None

    @property
    def n_features(self):
        if self.is_image:
            return int(np.prod(self.images.shape[1:]))
        return self.features.shape[1]

    def feature_matrix(self):
        if self.is_image:
            return to_features(self.images)
        return np.asarray(self.features, dtype=np.float64)

    def subset(self, idx, split=None):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.labels[idx], self.num_classes,
            None if self.images is None else self.images[idx],
            None if self.features is None else self.features[idx],
            split or self.split,
        )

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)


def to_features(images):
    imgs = np.asarray(images)
    return imgs.reshape(len(imgs), -1).astype(np.float64) / 255.0


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def load_idx(images_path, labels_path, num_classes=None):
    """Read an IDX image/label pair (big-endian headers, optionally gzipped)."""
    img = _read_bytes(images_path)
    lab = _read_bytes(labels_path)
    if len(img) < 16:
        raise TruncatedFileError(f"{images_path}: header truncated")
    if len(lab) < 8:
        raise TruncatedFileError(f"{labels_path}: header truncated")
    magic, n, rows, cols = struct.unpack(">IIII", img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    lmagic, ln = struct.unpack(">II", lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"{labels_path}: magic 0x{lmagic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if n != ln:
        raise CountMismatchError(f"{images_path} holds {n} images but {labels_path} holds {ln} labels")
    if len(img) < 16 + n * rows * cols:
        raise TruncatedFileError(f"{images_path}: expected {n * rows * cols} pixel bytes, got {len(img) - 16}")
    if len(lab) < 8 + n:
        raise TruncatedFileError(f"{labels_path}: expected {n} label bytes, got {len(lab) - 8}")
    images = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    images = images.reshape(n, rows, cols, 1).copy()
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    if n == 0:
        raise DataError(f"{images_path}: no samples")
    k = num_classes or int(labels.max()) + 1
    return Dataset(labels, k, images=images)


def write_idx(images, labels, images_path, labels_path):
    """Inverse of :func:`load_idx` for single-channel images."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        if images.shape[3] != 1:
            raise DimensionError("IDX stores single-channel images only")
        images = images[..., 0]
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_png_dir(root):
    """One subdirectory per class; labels follow lexicographic directory order."""
    from PIL import Image, UnidentifiedImageError

    if not os.path.isdir(root):
        raise DataError(f"{root}: not a directory")
    classes = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if not classes:
        raise DataError(f"{root}: no class directories")
    images, labels, shape = [], [], None
    for label, name in enumerate(classes):
        cdir = os.path.join(root, name)
        files = sorted(f for f in os.listdir(cdir) if f.lower().endswith(".png"))
        if not files:
            raise EmptyClassError(f"{cdir}: class directory holds no PNG files")
        for fname in files:
            path = os.path.join(cdir, fname)
            try:
                with Image.open(path) as im:
                    im.load()
                    mode = "L" if im.mode in ("1", "L", "I", "I;16", "F") else "RGB"
                    arr = np.asarray(im.convert(mode), dtype=np.uint8)
            except (UnidentifiedImageError, OSError) as exc:
                raise UndecodableError(f"{path}: {exc}") from exc
            if arr.ndim == 2:
                arr = arr[:, :, None]
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise InconsistentShapeError(f"{path}: shape {arr.shape} differs from {shape}")
            images.append(arr)
            labels.append(label)
    return Dataset(np.array(labels), len(classes), images=np.stack(images))


def load_csv(path, num_classes=None):
    """Numeric CSV rows ``label,f0,f1,...``; a non-numeric first line is a header."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty file")
    try:
        [float(v) for v in lines[0].split(",")]
    except ValueError:
        lines = lines[1:]
    rows = []
    for i, ln in enumerate(lines, 1):
        try:
            rows.append([float(v) for v in ln.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}: row {i}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1 or width.pop() < 2:
        raise InconsistentShapeError(f"{path}: rows must share one width >= 2")
    arr = np.array(rows)
    labels = arr[:, 0]
    if np.any(labels != np.round(labels)) or labels.min() < 0:
        raise DataError(f"{path}: labels must be non-negative integers")
    labels = labels.astype(np.int64)
    return Dataset(labels, num_classes or int(labels.max()) + 1, features=arr[:, 1:])


def make_blobs(n_per_class, num_classes, dim, spread, seed):
    """Class ``k`` centred at ``2 * e_k`` with isotropic Gaussian noise; class-major order."""
    if n_per_class < 1 or num_classes < 1 or dim < 1 or spread < 0:
        raise ValueError("n_per_class, num_classes, dim must be positive and spread >= 0")
    if dim < num_classes:
        raise DimensionError(f"dim={dim} < num_classes={num_classes}: centres need orthogonal axes")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), n_per_class)
    centers = np.zeros((num_classes, dim))
    centers[np.arange(num_classes), np.arange(num_classes)] = 2.0
    x = centers[labels] + spread * rng.standard_normal((labels.size, dim))
    return Dataset(labels, num_classes, features=x)


def class_templates(num_classes, side, bumps=3, template_seed=0):
    """Smooth signed spatial patterns, one per class, with max |value| = 1."""
    rng = np.random.default_rng([template_seed, num_classes, side])
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    width = side / 5.0
    out = np.zeros((num_classes, side, side))
    for k in range(num_classes):
        for _ in range(bumps):
            cy, cx = rng.uniform(0.2 * side, 0.8 * side, size=2)
            sign = 1.0 if rng.integers(2) else -1.0
            out[k] += sign * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        out[k] /= np.abs(out[k]).max()
    return out


def make_blob_images(n_per_class, num_classes, side=12, spread=0.5, seed=0,
                     amplitude=40.0, jitter=0.0):
    """Render :func:`make_blobs` features as grey images.

    Pixel = ``128 + amplitude * sum_j f_j T_j`` with one smooth template
    ``T_j`` per feature axis. ``jitter`` in [0, 1] adds per-image pose and
    lighting variation (shift, rotation, brightness) drawn from the seed.
    """
    from sada import augment

    feats = make_blobs(n_per_class, num_classes, num_classes, spread, seed)
    t = class_templates(num_classes, side)
    img = 128.0 + amplitude * np.tensordot(feats.features, t, axes=(1, 0))
    images = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)[..., None]
    if jitter > 0:
        rng = np.random.default_rng([seed, 1])
        ops = (augment.AugOp.TRANSLATE_X, augment.AugOp.TRANSLATE_Y,
               augment.AugOp.ROTATE, augment.AugOp.BRIGHTNESS)
        for i in range(len(images)):
            for op in ops:
                s = float(rng.uniform(0.0, jitter))
                sign = 1 if rng.integers(2) else -1
                images[i] = augment.apply_op(images[i], augment.AugDraw(op, s, sign))
    return Dataset(feats.labels, num_classes, images=images)


def longtail_counts(num_classes, n_max, ratio):
    if not 0.0 < ratio <= 1.0:
        raise ValueError("imbalance ratio must lie in (0, 1]")
    if num_classes == 1:
        return np.array([n_max])
    return np.array([max(1, int(math.floor(n_max * ratio ** (k / (num_classes - 1)) + 0.5)))
                     for k in range(num_classes)])


def longtail_subsample(ds, ratio, n_max, seed):
    """Keep the first ``n_max * ratio**(k/(K-1))`` samples of class ``k`` under a seeded permutation."""
    counts = longtail_counts(ds.num_classes, n_max, ratio)
    perm = np.random.default_rng(seed).permutation(len(ds))
    keep = []
    for k, nk in enumerate(counts):
        members = perm[ds.labels[perm] == k]
        if members.size < nk:
            raise InsufficientClassError(f"class {k} has {members.size} samples, needs {nk}")
        keep.append(members[:nk])
    return ds.subset(np.sort(np.concatenate(keep)))


def train_test_split(ds, test_fraction, seed):
    """Disjoint, exhaustive split; a pure function of ``(seed, test_fraction)``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    perm = np.random.default_rng([seed, 7]).permutation(len(ds))
    n_test = max(1, int(round(test_fraction * len(ds))))
    if n_test >= len(ds):
        raise DataError("split leaves no training samples")
    test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return ds.subset(train, "train"), ds.subset(test, "test")
