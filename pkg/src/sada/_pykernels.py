"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx``. The image kernels must
agree bit-for-bit with the compiled versions, so the floating point
expressions are written in the same evaluation order.
"""
import numpy as np

BACKEND = "python"


def warp_nearest(img, m0, m1, m2, m3, m4, m5, fill):
    """Inverse-map every output pixel through ``(m0 m1 m2; m3 m4 m5)``.

    ``img`` is ``(H, W, C)`` uint8. Sampling is nearest neighbour
    (``floor(v + 0.5)``); sources outside the image take ``fill``.
    """
    h, w, c = img.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sx = m0 * xs + m1 * ys + m2
    sy = m3 * xs + m4 * ys + m5
    ix = np.floor(sx + 0.5)
    iy = np.floor(sy + 0.5)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.full((h, w, c), fill, dtype=np.uint8)
    ixi = ix[inside].astype(np.intp)
    iyi = iy[inside].astype(np.intp)
    out[inside] = img[iyi, ixi]
    return out


def blend(orig, degenerate, factor):
    """``clamp(floor((1 - f) * degenerate + f * orig + 0.5))`` per sample."""
    f = float(factor)
    v = (1.0 - f) * degenerate.astype(np.float64) + f * orig.astype(np.float64)
    v = np.floor(v + 0.5)
    return np.clip(v, 0, 255).astype(np.uint8)


def box_blur3(img):
    h, w, _ = img.shape
    out = img.copy()
    if h < 3 or w < 3:
        return out
    src = img.astype(np.int64)
    acc = np.zeros((h - 2, w - 2, img.shape[2]), dtype=np.int64)
    for dy in range(3):
        for dx in range(3):
            acc += src[dy:dy + h - 2, dx:dx + w - 2]
    out[1:-1, 1:-1] = ((acc + 4) // 9).astype(np.uint8)
    return out


def kl_rows(p, q, floor):
    """Row-wise ``sum_k p log(p / max(q, floor))`` with ``0 log 0 = 0``, clamped at 0."""
    q = np.maximum(q, floor)
    # log(1) = 0 stands in for the p = 0 terms
    terms = p * np.log(np.where(p > 0, p, 1.0) / q)
    return np.maximum(terms.sum(axis=1), 0.0)


def push_deltas(window, count, head, idx, values):
    """Append ``values[j]`` to the ring buffer of sample ``idx[j]`` in place."""
    cap = window.shape[1]
    idx = np.asarray(idx, dtype=np.int64)
    window[idx, head[idx]] = values
    head[idx] = (head[idx] + 1) % cap
    count[idx] = np.minimum(count[idx] + 1, cap)


def window_variance(window, count):
    """Sum of squared deviations from the mean over each row's live entries.

    Values are shifted by the row's first entry before the two passes, which
    makes constant windows exactly zero.
    """
    n, cap = window.shape
    live = np.arange(cap)[None, :] < count[:, None]
    shifted = window - window[:, :1]
    safe = np.maximum(count, 1).astype(np.float64)
    mean = np.where(live, shifted, 0.0).sum(axis=1) / safe
    dev = np.where(live, shifted - mean[:, None], 0.0)
    out = (dev * dev).sum(axis=1)
    out[count < 2] = 0.0
    return out


def record_rows(last_probs, last_epoch, window, count, head, last_delta, idx, probs, epoch, floor):
    """Validate a batch of outputs, then push KL deltas and store the snapshots.

    Returns 0 on success, 1 for an out-of-range id, 2 for non-finite
    probabilities and 3 when ``epoch`` does not advance; nothing is modified
    unless the status is 0.
    """
    n = last_probs.shape[0]
    if idx.size == 0:
        return 0
    if idx.min() < 0 or idx.max() >= n:
        return 1
    if not np.isfinite(probs).all():
        return 2
    prev = last_epoch[idx]
    if prev.max() >= epoch:
        return 3
    if prev.min() >= 0:
        # common case: every sample already has a snapshot
        deltas = kl_rows(probs, last_probs[idx], floor)
        cap = window.shape[1]
        h = head[idx]
        window[idx, h] = deltas
        head[idx] = (h + 1) % cap
        count[idx] = np.minimum(count[idx] + 1, cap)
        last_delta[idx] = deltas
    else:
        seen = prev >= 0
        rows = idx[seen]
        if rows.size:
            deltas = kl_rows(probs[seen], last_probs[rows], floor)
            push_deltas(window, count, head, rows, deltas)
            last_delta[rows] = deltas
        last_delta[idx[~seen]] = np.nan
    last_probs[idx] = probs
    last_epoch[idx] = epoch
    return 0
