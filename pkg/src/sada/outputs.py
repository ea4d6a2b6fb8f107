"""CSV and checkpoint files written under a run directory."""
from __future__ import annotations

import csv
import math
import os

from sada import learner
from sada.trainer import RunSink, difficulty_histogram

METRICS_HEADER = ("epoch", "train_loss", "test_acc", "mean_strength", "wall_ms", "tracker_ms")
HIST_HEADER = ("bin_lo", "bin_hi", "count")
STATE_HEADER = ("epoch", "sample_id", "delta", "window_variance", "ema", "strength")
TRACE_HEADER = ("epoch", "sample_id", "op", "strength", "sign", "param")
INSPECT_HEADER = ("epoch", "delta", "window_variance", "ema", "strength", "op")
COMPARE_HEADER = ("policy", "seed", "final_test_acc", "mean_tracker_ms", "final_test_acc_std")

METRICS_FILE = "metrics.csv"
STATE_FILE = "state.csv"
TRACE_FILE = "trace.csv"
CHECKPOINT_FILE = "model.ckpt"
CONFIG_FILE = "config.cfg"
COMPARE_FILE = "compare.csv"


def fmt(value):
    """Shortest round-trip text for floats; empty for ``None``/NaN."""
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def open_csv(path, header):
    fh = open(path, "w", newline="")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    return fh, writer


def write_csv(path, header, rows):
    fh, writer = open_csv(path, header)
    with fh:
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def histogram_path(run_dir, epoch):
    return os.path.join(run_dir, f"difficulty_epoch{epoch}.csv")


def write_histogram(path, values, bins=16):
    edges, counts = difficulty_histogram(values, bins)
    write_csv(path, HIST_HEADER,
              ((float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)))


class RunWriter(RunSink):
    """Streams per-epoch artefacts of one training run into ``run_dir``."""

    def __init__(self, run_dir, cfg):
        self.run_dir = run_dir
        self.cfg = cfg
        os.makedirs(run_dir, exist_ok=True)
        self._metrics = open_csv(os.path.join(run_dir, METRICS_FILE), METRICS_HEADER)
        self._state = open_csv(os.path.join(run_dir, STATE_FILE), STATE_HEADER) \
            if cfg.run.dump_state and cfg.run.track else None
        self._trace = open_csv(os.path.join(run_dir, TRACE_FILE), TRACE_HEADER) \
            if cfg.run.trace else None

    def epoch_end(self, epoch, report, tracker, next_table, trace_rows):
        _, w = self._metrics
        w.writerow([fmt(report.epoch), fmt(report.train_loss), fmt(report.test_acc),
                    fmt(report.mean_strength), fmt(report.wall_clock_ms), fmt(report.tracker_ms)])
        values = tracker.ema if tracker is not None else next_table.strengths
        write_histogram(histogram_path(self.run_dir, epoch), values)
        if self._state is not None and tracker is not None:
            _, w = self._state
            for row in tracker.dump_rows(epoch, next_table):
                w.writerow([fmt(v) for v in row])
        if self._trace is not None:
            _, w = self._trace
            for r in trace_rows:
                w.writerow([r.epoch, r.sample_id, r.op, fmt(r.strength), r.sign, fmt(r.param)])

    def finish(self, model):
        learner.save_checkpoint(model, os.path.join(self.run_dir, CHECKPOINT_FILE))
        self.close()

    def close(self):
        for item in (self._metrics, self._state, self._trace):
            if item is not None:
                item[0].close()
