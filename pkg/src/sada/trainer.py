"""Training loop with per-sample, per-epoch augmentation strengths.

Each epoch every training sample gets exactly one sampled op. Its strength
comes from the policy: none (``noaug``), uniform at random
(``fixed_random``) or the tracker's table from the previous epoch boundary
(``sada``). Softmax outputs of the training forward pass feed the tracker,
which produces the next epoch's table.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from sada import augment, data, learner
from sada.config import DataSource, ExperimentConfig, Policy
from sada.errors import ConfigError, DataError, EmptyInputError
from sada.tracker import InfluenceTracker, Source, StrengthTable

HIST_BINS = 16
_POLICY_CODES = {Policy.NOAUG: 0, Policy.FIXED_RANDOM: 1, Policy.SADA: 2}


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    train_loss: float
    test_acc: float  # NaN when not evaluated this epoch
    mean_strength: float
    strength_histogram: tuple
    wall_clock_ms: float
    tracker_ms: float
    source: str = ""

    def deterministic_part(self):
        """Everything except the timing fields."""
        return (self.epoch, self.train_loss, self.test_acc, self.mean_strength,
                self.strength_histogram, self.source)


@dataclass
class TraceRow:
    epoch: int
    sample_id: int
    op: str
    strength: float
    sign: int
    param: float


@dataclass
class RunResult:
    reports: list
    model: learner.MicroModel
    tables: list = field(default_factory=list)  # StrengthTable consumed by each epoch


class RunSink:
    """Receives per-epoch artefacts; the default discards everything."""

    def epoch_end(self, epoch, report, tracker, next_table, trace_rows):
        pass


def fixed_random_strength(rng):
    return float(rng.random())


def difficulty_histogram(values, bins=HIST_BINS):
    """Equal-width bins over the observed ``[min, max]``.

    Returns ``(edges, counts)`` with ``len(edges) == bins + 1``. A degenerate
    range puts every value in the first bin.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInputError("cannot histogram an empty array")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo, hi = float(v.min()), float(v.max())
    counts = np.zeros(bins, dtype=np.int64)
    if hi == lo:
        counts[0] = v.size
        return np.full(bins + 1, lo), counts
    idx = np.clip(np.floor((v - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    np.add.at(counts, idx, 1)
    return np.linspace(lo, hi, bins + 1), counts


def strength_histogram(strengths, bins=HIST_BINS):
    """Counts over fixed equal-width bins of [0, 1]."""
    s = np.asarray(strengths, dtype=np.float64)
    idx = np.clip(np.floor(s * bins).astype(np.int64), 0, bins - 1)
    return tuple(int(c) for c in np.bincount(idx, minlength=bins))


def evaluate(model, ds):
    """Accuracy of the argmax prediction (ties toward the lowest class index)."""
    if len(ds) == 0:
        raise EmptyInputError("empty evaluation set")
    pred = learner.predict(model, ds.feature_matrix())
    return float(np.mean(pred == ds.labels))


def augmentation_seed(seed, policy):
    ss = np.random.SeedSequence([int(seed), _POLICY_CODES[Policy(policy)]])
    return int(ss.generate_state(1, np.uint64)[0])


def _test_seed(seed):
    return int(np.random.SeedSequence([int(seed), 11]).generate_state(1, np.uint64)[0])


def load_datasets(cfg: ExperimentConfig):
    """Build ``(train, test)`` for the configured source; raises :class:`DataError`."""
    d, seed = cfg.data, cfg.run.seed
    test = None
    if d.source is DataSource.BLOB_IMAGES:
        # clean-ish training images, test images with pose/lighting variation
        full = data.make_blob_images(d.n_per_class, d.classes, d.side, d.spread, seed,
                                     d.amplitude, d.jitter)
        test = data.make_blob_images(d.test_per_class, d.classes, d.side, d.spread,
                                     _test_seed(seed), d.amplitude, d.test_jitter)
        test = data.Dataset(test.labels, test.num_classes, images=test.images, split="test")
    elif d.source is DataSource.BLOBS:
        try:
            full = data.make_blobs(d.n_per_class, d.classes, d.dim, d.spread, seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    elif d.source is DataSource.IDX:
        if not d.train_images or not d.train_labels:
            raise DataError("data.train_images and data.train_labels are required for idx")
        full = data.load_idx(d.train_images, d.train_labels)
        if d.test_images or d.test_labels:
            test = data.load_idx(d.test_images, d.test_labels, full.num_classes)
    elif d.source is DataSource.PNG:
        full = data.load_png_dir(d.path)
    else:
        full = data.load_csv(d.path)
    if test is None:
        train, test = data.train_test_split(full, d.test_fraction, seed)
    else:
        train = full
    if d.longtail_nmax > 0:
        train = data.longtail_subsample(train, d.longtail_ratio, d.longtail_nmax, seed)
    return train, test


def _use_flip_crop(cfg, train):
    if cfg.data.flip_crop == "auto":
        return train.is_image and cfg.data.source is DataSource.PNG
    return cfg.data.flip_crop == "true"


class _Augmenter:
    """Per-sample draws and image transforms for one run."""

    def __init__(self, cfg, train):
        self.cfg = cfg
        self.policy = cfg.run.policy
        self.spec = cfg.space
        self.images = train.images
        self.aug_seed = augmentation_seed(cfg.run.seed, self.policy)
        self.flip_crop = _use_flip_crop(cfg, train)
        self.pool = ThreadPoolExecutor(cfg.run.threads) if cfg.run.threads > 1 else None

    def strengths_for(self, idx, epoch, table):
        if self.policy is Policy.SADA:
            return table.strengths[idx]
        if self.policy is Policy.FIXED_RANDOM:
            return np.array([fixed_random_strength(augment.draw_rng(self.aug_seed, i, epoch, 1))
                             for i in idx])
        return np.zeros(len(idx))

    def _one(self, i, epoch, s):
        if self.policy is Policy.NOAUG:
            return self.images[i], augment.AugDraw(augment.AugOp.IDENTITY, 0.0)
        draw = augment.draw_for_sample(i, epoch, s, self.aug_seed, self.spec)
        img = augment.apply_op(self.images[i], draw, self.spec)
        if self.flip_crop:
            img = augment.flip_crop(img, augment.draw_rng(self.aug_seed, i, epoch, 2))
        return img, draw

    def batch(self, idx, epoch, strengths):
        args = [(int(i), epoch, float(s)) for i, s in zip(idx, strengths)]
        if self.pool is not None:
            results = list(self.pool.map(lambda a: self._one(*a), args))
        else:
            results = [self._one(*a) for a in args]
        imgs = np.stack([r[0] for r in results])
        return data.to_features(imgs), [r[1] for r in results]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _trace_row(epoch, i, draw, spec):
    param = 0.0
    if draw.op is not augment.AugOp.IDENTITY:
        param = float(augment.signed_param(draw, spec))
    return TraceRow(epoch, int(i), draw.op.value, float(draw.strength), int(draw.sign), param)


def run_training(cfg: ExperimentConfig, datasets=None, sink=None):
    """Train one model under ``cfg`` and return the per-epoch reports.

    ``datasets`` may supply a prebuilt ``(train, test)`` pair. The run is a
    pure function of ``cfg`` apart from the timing fields.
    """
    sink = sink or RunSink()
    train, test = datasets if datasets is not None else load_datasets(cfg)
    policy = cfg.run.policy
    if policy is not Policy.NOAUG and not train.is_image:
        warnings.warn(f"policy {policy.value} on feature data: strengths are scheduled "
                      "but no image op can be applied", stacklevel=2)
    n, k = len(train), train.num_classes
    tracking = cfg.run.track
    tracker = InfluenceTracker(n, k, cfg.tracker) if tracking else None
    model = learner.init_model(cfg.model.arch, train.n_features, k,
                               np.random.default_rng([cfg.run.seed, 1]), cfg.model.hidden)
    clean_x = train.feature_matrix() if (not train.is_image or cfg.tracker.clean_pass) else None
    aug = _Augmenter(cfg, train)
    table = StrengthTable.constant(0, n, cfg.tracker.warmup_strength, Source.WARMUP)
    reports, tables = [], []
    bs = cfg.run.batch_size
    try:
        for epoch in range(cfg.run.epochs):
            t0 = time.perf_counter()
            tracker_s = 0.0
            tables.append(table)
            perm = np.random.default_rng([cfg.run.seed, 3, epoch]).permutation(n)
            applied = np.zeros(n)
            loss_sum = 0.0
            trace_rows = []
            for start in range(0, n, bs):
                idx = np.sort(perm[start:start + bs])
                s = aug.strengths_for(idx, epoch, table)
                applied[idx] = s
                if train.is_image:
                    x, draws = aug.batch(idx, epoch, s)
                    if cfg.run.trace:
                        trace_rows.extend(_trace_row(epoch, i, d, cfg.space) for i, d in zip(idx, draws))
                else:
                    x = clean_x[idx]
                y = train.labels[idx]
                g, probs = learner.batch_grad_sum(model, x, y)
                loss_sum += float(learner.ce_losses(probs, y).sum())
                if tracking and not cfg.tracker.clean_pass:
                    t1 = time.perf_counter()
                    tracker.record_batch(idx, probs, epoch)
                    tracker_s += time.perf_counter() - t1
                model = model.with_params(learner.sgd_step(model.params, g, cfg.run.eta))
            next_table = table
            if tracking:
                t1 = time.perf_counter()
                if cfg.tracker.clean_pass:
                    feats = clean_x if clean_x is not None else train.feature_matrix()
                    tracker.record_batch(np.arange(n), learner.forward_batch(model, feats), epoch)
                produced = tracker.end_of_epoch(epoch)
                tracker_s += time.perf_counter() - t1
                if policy is Policy.SADA:
                    next_table = produced
                sink_table = produced
            else:
                sink_table = table
            last = epoch == cfg.run.epochs - 1
            acc = evaluate(model, test) if (last or (epoch + 1) % cfg.run.eval_every == 0) else math.nan
            wall = time.perf_counter() - t0
            report = EpochReport(
                epoch=epoch,
                train_loss=loss_sum / n,
                test_acc=acc,
                mean_strength=float(applied.mean()),
                strength_histogram=strength_histogram(applied),
                wall_clock_ms=wall * 1e3 if cfg.run.timing else 0.0,
                tracker_ms=tracker_s * 1e3 if cfg.run.timing else 0.0,
                source=table.source.value if policy is Policy.SADA else policy.value,
            )
            reports.append(report)
            trace_rows.sort(key=lambda r: r.sample_id)
            sink.epoch_end(epoch, report, tracker, sink_table, trace_rows)
            table = next_table if next_table.epoch == epoch + 1 else StrengthTable(
                epoch + 1, next_table.strengths, next_table.source)
    finally:
        aug.close()
    return RunResult(reports, model, tables)
