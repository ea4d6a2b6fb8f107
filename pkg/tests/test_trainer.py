from collections import Counter

import numpy as np
import pytest

from sada.config import Policy, parse_config
from sada.data import Dataset
from sada.errors import EmptyInputError
from sada.learner import Arch, init_model, zero_model
from sada.trainer import (
    RunSink,
    difficulty_histogram,
    evaluate,
    fixed_random_strength,
    run_training,
    strength_histogram,
)
from sada.augment import draw_rng

SMALL = """
[run]
epochs = {epochs}
batch_size = 4
eta = 0.01
policy = {policy}
[model]
arch = mlp
hidden = 8
[data]
source = blob_images
classes = 3
n_per_class = 6
test_per_class = 10
side = 8
[tracker]
window_len = 2
"""


def small_cfg(policy="sada", epochs=6, **over):
    cfg = parse_config(SMALL.format(policy=policy, epochs=epochs))
    return cfg.with_overrides(**over) if over else cfg


class Collect(RunSink):
    def __init__(self):
        self.rows = []
        self.tables = []

    def epoch_end(self, epoch, report, tracker, next_table, trace_rows):
        self.rows.append(list(trace_rows))
        self.tables.append(next_table)


# -- policies ---------------------------------------------------------------------

def test_noaug_all_identity():
    sink = Collect()
    res = run_training(small_cfg("noaug", 3), sink=sink)
    assert len(res.reports) == 3
    assert {r.op for rows in sink.rows for r in rows} == {"identity"}
    assert all(r.mean_strength == 0.0 for r in res.reports)


def test_sada_short_run_stays_in_warmup():
    cfg = small_cfg("sada", 3)  # epochs <= L + 1
    res = run_training(cfg)
    assert all(t.source.value == "warmup" for t in res.tables)
    assert all(np.all(t.strengths == 0.5) for t in res.tables)
    assert all(r.mean_strength == 0.5 for r in res.reports)


def test_sada_becomes_scheduled():
    res = run_training(small_cfg("sada", 6))
    sources = [t.source.value for t in res.tables]
    assert sources[:4] == ["warmup"] * 4
    assert sources[4:] == ["scheduled"] * 2


@pytest.mark.parametrize("policy", list(Policy))
def test_runs_are_deterministic(policy):
    cfg = small_cfg(policy.value, 5)
    a, b = run_training(cfg), run_training(cfg)
    assert [r.deterministic_part() for r in a.reports] == [r.deterministic_part() for r in b.reports]
    assert a.model.params.values.tobytes() == b.model.params.values.tobytes()


@pytest.mark.parametrize("policy", ["fixed_random", "sada"])
def test_one_op_per_sample_per_epoch(policy):
    sink = Collect()
    run_training(small_cfg(policy, 6), sink=sink)
    for epoch, rows in enumerate(sink.rows):
        counts = Counter(r.sample_id for r in rows)
        assert sorted(counts) == list(range(18))
        assert set(counts.values()) == {1}
        assert all(r.epoch == epoch for r in rows)


def test_no_lookahead():
    sink = Collect()
    res = run_training(small_cfg("sada", 7), sink=sink)
    for epoch, table in enumerate(res.tables):
        assert table.epoch == epoch
    for epoch, table in enumerate(sink.tables):
        assert table.epoch == epoch + 1


@pytest.mark.parametrize("policy", ["noaug", "fixed_random"])
def test_tracking_is_observation_only(policy):
    on = run_training(small_cfg(policy, 5))
    off = run_training(small_cfg(policy, 5, run={"track": False}))
    assert on.model.params.values.tobytes() == off.model.params.values.tobytes()


def test_threads_do_not_change_results():
    a = run_training(small_cfg("fixed_random", 4))
    b = run_training(small_cfg("fixed_random", 4, run={"threads": 4}))
    assert a.model.params.values.tobytes() == b.model.params.values.tobytes()


def test_feature_data_schedules_without_ops():
    cfg = parse_config("[data]\nsource = blobs\nclasses = 3\ndim = 3\n[run]\nepochs = 8\npolicy = sada\n")
    sink = Collect()
    with pytest.warns(UserWarning):
        res = run_training(cfg, sink=sink)
    assert len(res.reports) == 8
    assert res.tables[-1].source.value == "scheduled"
    assert all(not rows for rows in sink.rows)
    cfg = cfg.with_overrides(run={"policy": "noaug"})
    assert len(run_training(cfg).reports) == 8


def test_timing_off_zeroes_clock_fields():
    res = run_training(small_cfg("sada", 2, run={"timing": False}))
    assert all(r.wall_clock_ms == 0.0 and r.tracker_ms == 0.0 for r in res.reports)


def test_eval_every_skips_but_last_is_evaluated():
    res = run_training(small_cfg("noaug", 5, run={"eval_every": 2}))
    accs = [r.test_acc for r in res.reports]
    assert np.isnan(accs[0]) and not np.isnan(accs[1]) and not np.isnan(accs[4])


# -- fixed-random strengths -----------------------------------------------------------

def test_fixed_random_range_and_mean():
    rng = np.random.default_rng(3)
    draws = np.array([fixed_random_strength(rng) for _ in range(100_000)])
    assert draws.min() >= 0 and draws.max() <= 1
    assert 0.49 <= draws.mean() <= 0.51


def test_fixed_random_deterministic():
    a = [fixed_random_strength(draw_rng(5, i, 2, 1)) for i in range(20)]
    b = [fixed_random_strength(draw_rng(5, i, 2, 1)) for i in range(20)]
    assert a == b and len(set(a)) == 20


# -- histograms -------------------------------------------------------------------------

def test_difficulty_histogram_examples():
    edges, counts = difficulty_histogram([3.0] * 7)
    assert counts[0] == 7 and counts.sum() == 7
    assert difficulty_histogram([0.0, 1.0], bins=2)[1].tolist() == [1, 1]
    grid = (np.arange(16) + 0.5) / 16
    assert difficulty_histogram(grid, bins=16)[1].tolist() == [1] * 16
    with pytest.raises(EmptyInputError):
        difficulty_histogram([])


def test_histogram_counts_sum(rng):
    v = rng.exponential(size=500)
    edges, counts = difficulty_histogram(v)
    assert counts.sum() == 500 and len(edges) == 17


def test_strength_histogram_fixed_bins():
    assert strength_histogram([0.0, 1.0, 0.5]) == (1,) + (0,) * 7 + (1,) + (0,) * 6 + (1,)


# -- evaluate ------------------------------------------------------------------------

def test_evaluate_tie_break_counts_class_zero(rng):
    labels = np.array([0, 0, 1, 2, 2])
    ds = Dataset(labels, 3, features=rng.normal(size=(5, 4)))
    assert evaluate(zero_model(Arch.LINEAR, 4, 3), ds) == pytest.approx(0.4)


def test_evaluate_perfect():
    x = np.eye(3)
    m = zero_model(Arch.LINEAR, 3, 3)
    theta = m.params.values.copy()
    theta[:9] = (10 * np.eye(3)).ravel()
    m = m.with_params(type(m.params)(theta, m.params.layout))
    assert evaluate(m, Dataset([0, 1, 2], 3, features=x)) == 1.0


def test_evaluate_random_weights_near_chance():
    rng = np.random.default_rng(8)
    labels = np.repeat(np.arange(10), 1000)
    ds = Dataset(labels, 10, features=rng.normal(size=(10_000, 20)))
    acc = evaluate(init_model(Arch.LINEAR, 20, 10, rng), ds)
    assert 0.08 <= acc <= 0.12
