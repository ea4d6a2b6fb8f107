"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_pykernels`` are used. Set ``SADA_PURE_PYTHON=1`` to force
the fallback.
"""
import os

from sada import _pykernels

if os.environ.get("SADA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from sada import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND

warp_nearest = _impl.warp_nearest
blend = _impl.blend
box_blur3 = _impl.box_blur3
kl_rows = _impl.kl_rows
push_deltas = _impl.push_deltas
window_variance = _impl.window_variance
record_rows = _impl.record_rows


def available_backends():
    """Return ``{name: module}`` for every backend that can be imported."""
    out = {"python": _pykernels}
    try:
        from sada import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
