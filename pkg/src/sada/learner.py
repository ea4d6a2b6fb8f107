"""Small softmax classifiers with exact per-sample gradients and plain SGD.

Parameters live in one flat float64 vector (:class:`ParamVector`) with a
layout describing how it splits into weight matrices, so gradients,
updates and inner products are plain vector arithmetic.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from sada.errors import DimensionError, LabelIndexError

PROB_FLOOR = 1e-8
CKPT_MAGIC = b"SADA-CKPT1"


class Arch(str, enum.Enum):
    LINEAR = "linear"
    MLP = "mlp"


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    layout: tuple  # ((name, shape), ...)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        total = sum(math.prod(shape) for _, shape in self.layout)
        if v.ndim != 1 or v.size != total:
            raise DimensionError(f"layout describes {total} values, got {v.size}")
        object.__setattr__(self, "values", v)

    def views(self):
        """``{name: array view}`` into :attr:`values`."""
        out, start = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = self.values[start:start + n].reshape(shape)
            start += n
        return out

    def check_compatible(self, other):
        if tuple(self.layout) != tuple(other.layout):
            raise DimensionError("parameter layouts differ")


@dataclass(frozen=True)
class MicroModel:
    arch: Arch
    n_features: int
    n_classes: int
    params: ParamVector
    hidden: int = 0

    def with_params(self, params):
        self.params.check_compatible(params)
        return MicroModel(self.arch, self.n_features, self.n_classes, params, self.hidden)


def make_layout(arch, d, k, hidden=64):
    if Arch(arch) is Arch.LINEAR:
        return (("W", (d, k)), ("b", (k,)))
    return (("W1", (d, hidden)), ("b1", (hidden,)), ("W2", (hidden, k)), ("b2", (k,)))


def init_model(arch, n_features, n_classes, rng, hidden=64):
    """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases use the same range."""
    arch = Arch(arch)
    layout = make_layout(arch, n_features, n_classes, hidden)
    chunks = []
    fan_in = n_features
    for name, shape in layout:
        bound = 1.0 / math.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=math.prod(shape)))
        if name.startswith("b"):
            fan_in = shape[0]
    return MicroModel(arch, n_features, n_classes,
                      ParamVector(np.concatenate(chunks), layout),
                      hidden if arch is Arch.MLP else 0)


def zero_model(arch, n_features, n_classes, hidden=64):
    layout = make_layout(arch, n_features, n_classes, hidden)
    size = sum(math.prod(s) for _, s in layout)
    return MicroModel(Arch(arch), n_features, n_classes, ParamVector(np.zeros(size), layout),
                      hidden if Arch(arch) is Arch.MLP else 0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionError(f"expected inputs with {model.n_features} features, got shape {x.shape}")
    return x


def _forward_cache(model, x):
    p = model.params.views()
    if model.arch is Arch.LINEAR:
        return softmax(x @ p["W"] + p["b"]), None
    pre = x @ p["W1"] + p["b1"]
    act = np.maximum(pre, 0.0)
    return softmax(act @ p["W2"] + p["b2"]), (pre, act)


def forward_batch(model, x):
    """Softmax outputs for each row of ``x``; shape ``(B, K)``."""
    return _forward_cache(model, _check_batch(model, x))[0]


def forward(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("forward expects a single feature vector")
    return forward_batch(model, x[None, :])[0]


def ce_loss(probs, label, floor=PROB_FLOOR):
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise LabelIndexError(f"label {label} out of range for {probs.shape[-1]} classes")
    return -math.log(max(float(probs[label]), floor))


def ce_losses(probs, labels, floor=PROB_FLOOR):
    return -np.log(np.maximum(probs[np.arange(len(labels)), labels], floor))


def _check_labels(model, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= model.n_classes):
        raise LabelIndexError(f"labels must lie in [0, {model.n_classes})")
    return labels


def per_sample_grads(model, x, labels):
    """Gradient of each sample's cross-entropy; shape ``(B, P)`` in layout order."""
    x = _check_batch(model, x)
    labels = _check_labels(model, labels)
    probs, cache = _forward_cache(model, x)
    dz = probs.copy()
    dz[np.arange(len(labels)), labels] -= 1.0
    b = len(labels)
    if model.arch is Arch.LINEAR:
        gw = x[:, :, None] * dz[:, None, :]
        return np.concatenate([gw.reshape(b, -1), dz], axis=1)
    pre, act = cache
    p = model.params.views()
    gw2 = act[:, :, None] * dz[:, None, :]
    dpre = (dz @ p["W2"].T) * (pre > 0)
    gw1 = x[:, :, None] * dpre[:, None, :]
    return np.concatenate([gw1.reshape(b, -1), dpre, gw2.reshape(b, -1), dz], axis=1)


def per_sample_grad(model, x, label):
    x = np.asarray(x, dtype=np.float64)
    return per_sample_grads(model, x[None, :], [label])[0]


def batch_grad_sum(model, x, labels):
    """Summed gradient over a batch plus the forward outputs it was computed from.

    Equivalent to summing :func:`per_sample_grads` over rows, without
    materialising the per-sample tensor.
    """
    x = _check_batch(model, x)
    labels = _check_labels(model, labels)
    probs, cache = _forward_cache(model, x)
    dz = probs.copy()
    dz[np.arange(len(labels)), labels] -= 1.0
    if model.arch is Arch.LINEAR:
        g = np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0)])
        return g, probs
    pre, act = cache
    p = model.params.views()
    dpre = (dz @ p["W2"].T) * (pre > 0)
    g = np.concatenate([(x.T @ dpre).ravel(), dpre.sum(axis=0),
                        (act.T @ dz).ravel(), dz.sum(axis=0)])
    return g, probs


def sgd_step(params, grad_sum, eta):
    g = np.asarray(grad_sum, dtype=np.float64)
    if g.shape != params.values.shape:
        raise DimensionError("gradient does not match parameter layout")
    return ParamVector(params.values - eta * g, params.layout)


def exact_projection(g, theta_prev, theta_curr):
    """``|<g, theta_prev - theta_curr>|``."""
    theta_prev.check_compatible(theta_curr)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != theta_prev.values.shape:
        raise DimensionError("gradient does not match parameter layout")
    return abs(float(np.dot(g, theta_prev.values - theta_curr.values)))


@dataclass(frozen=True)
class ProjectionRecord:
    sample: int
    alpha_exact: float
    taylor_value: float
    residual: float


def taylor_residual(model, x, label, theta_prev, theta_curr, eta, sample=0):
    """Compare the exact update projection with its loss-difference proxy.

    ``alpha_exact`` is the projection of the gradient at ``theta_prev`` onto
    the update, divided by ``eta``; ``taylor_value`` is ``|loss change| / eta``.
    ``residual = |eta * alpha_exact - |loss change||`` is the second-order
    remainder of the Taylor expansion.
    """
    m_prev = model.with_params(theta_prev)
    m_curr = model.with_params(theta_curr)
    g = per_sample_grad(m_prev, x, label)
    alpha = exact_projection(g, theta_prev, theta_curr) / eta
    dl = abs(ce_loss(forward(m_curr, x), label) - ce_loss(forward(m_prev, x), label))
    return ProjectionRecord(sample, alpha, dl / eta, abs(eta * alpha - dl))


def predict(model, x, batch=4096):
    """Argmax class per row; ties go to the lowest index."""
    x = _check_batch(model, x)
    out = np.empty(len(x), dtype=np.int64)
    for i in range(0, len(x), batch):
        out[i:i + batch] = forward_batch(model, x[i:i + batch]).argmax(axis=1)
    return out


def _layout_line(model):
    parts = [model.arch.value, f"D={model.n_features}", f"H={model.hidden}", f"K={model.n_classes}"]
    parts += [f"{name}:{'x'.join(str(s) for s in shape)}" for name, shape in model.params.layout]
    return " ".join(parts)


def save_checkpoint(model, path_or_file):
    """Write magic, one layout line, then little-endian float64 parameters."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC + b"\n")
    buf.write(_layout_line(model).encode("ascii") + b"\n")
    buf.write(model.params.values.astype("<f8").tobytes())
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "wb") as fh:
            fh.write(data)


def load_checkpoint(path_or_file):
    if hasattr(path_or_file, "read"):
        data = path_or_file.read()
    else:
        with open(path_or_file, "rb") as fh:
            data = fh.read()
    magic, _, rest = data.partition(b"\n")
    if magic != CKPT_MAGIC:
        raise ValueError("not a SADA checkpoint (bad magic)")
    line, _, payload = rest.partition(b"\n")
    fields = line.decode("ascii").split()
    arch = Arch(fields[0])
    dims = dict(f.split("=") for f in fields[1:4])
    layout = tuple((name, tuple(int(s) for s in shape.split("x")))
                   for name, shape in (f.split(":") for f in fields[4:]))
    expected = sum(math.prod(s) for _, s in layout)
    if len(payload) != 8 * expected:
        raise ValueError(f"checkpoint payload holds {len(payload)} bytes, expected {8 * expected}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return MicroModel(arch, int(dims["D"]), int(dims["K"]), ParamVector(values, layout), int(dims["H"]))

