import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavmec.metrics import (EPISODE_COLUMNS, EpisodeMetrics, EpisodeSink, RunningMinMax, export,
                            normalize, pooled_weighted_cost, qos_rates, weighted_cost)
from uavmec.runner import RunResult, run_reference


class Rec:
    def __init__(self, met, t=1.0):
        self.met_deadline = met
        self.t_total = t


def test_normalize_examples():
    assert normalize(1.0, 1.0, 5.0) == 0.0
    assert normalize(5.0, 1.0, 5.0) == 1.0
    assert normalize(2.0, 1.0, 5.0) == 0.25
    assert normalize(3.0, 3.0, 3.0) == 0.0  # epsilon denominator
    assert normalize(9.0, 1.0, 5.0) == 1.0 and normalize(-9.0, 1.0, 5.0) == 0.0


def test_weighted_cost_examples():
    assert weighted_cost(0.0, 0.0, 0.5, 0.5) == 0.0
    assert weighted_cost(0.2, 0.4, 0.5, 0.5) == pytest.approx(0.3)
    assert weighted_cost(0.37, 0.9, 1.0, 0.0) == 0.37
    with pytest.raises(ValueError):
        weighted_cost(0.1, 0.1, 0.5, 0.6)


def test_qos_examples():
    assert qos_rates([Rec(True)] * 4, 4, 10.0, 10)[:2] == (1.0, 1.0)
    dl, _, flag = qos_rates([Rec(True)] * 9 + [Rec(False)], 10, 0.0, 1)
    assert dl == pytest.approx(0.9) and not flag
    # a task that was never admitted still counts in the denominator
    assert qos_rates([Rec(True)] * 9, 10, 0.0, 1)[0] == pytest.approx(0.9)
    assert qos_rates([], 0, 0.0, 0) == (1.0, 0.0, True)


def test_coverage_sink_time_average():
    sink = EpisodeSink()
    sink.add_coverage(np.array([[1, 0, 0, 0], [1, 1, 0, 0]]))  # 2 of 4 covered
    sink.add_coverage(np.ones((2, 4)))
    assert sink.coverage_sum / sink.coverage_steps == pytest.approx(0.75)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 1e6)), min_size=1, max_size=30))
def test_running_extrema_never_contract(pairs):
    mm = RunningMinMax()
    prev = None
    for t, e in pairs:
        mm.update(t, e)
        cur = (mm.min_time, mm.max_time, mm.min_energy, mm.max_energy)
        if prev is not None:
            assert cur[0] <= prev[0] and cur[1] >= prev[1] and cur[2] <= prev[2] and cur[3] >= prev[3]
        prev = cur
        tn, en = mm.normalize(t, e)
        assert 0.0 <= tn <= 1.0 and 0.0 <= en <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_weighted_cost_monotone(a, b, d, alpha):
    beta = 1.0 - alpha
    assert weighted_cost(a + d, b, alpha, beta) >= weighted_cost(a, b, alpha, beta) - 1e-15
    assert weighted_cost(a, b + d, alpha, beta) >= weighted_cost(a, b, alpha, beta) - 1e-15


def test_pooled_cost_uses_shared_scale():
    rows = [EpisodeMetrics(0, 0, t, e, 0, 0, 0, 1, 1, 0, 0, 0) for t, e in [(1.0, 10.0), (3.0, 30.0), (2.0, 20.0)]]
    assert pooled_weighted_cost(rows, 0.5, 0.5) == pytest.approx([0.0, 1.0, 0.5])


def test_energy_objective_is_mean_of_ledgers(short_cfg):
    r = run_reference(short_cfg, 4, "random", episodes=1)
    totals = [led.total for _, led in r.ledger_rows]
    assert len(totals) == short_cfg.n_uavs
    assert r.episodes[0].f_energy == pytest.approx(np.mean(totals), rel=1e-12)


def test_empty_run_writes_headers(tmp_path):
    paths = export([], tmp_path, "abc")
    rows = list(csv.reader(open(paths[0])))
    assert rows == [list(EPISODE_COLUMNS)]
    for p in paths[:5]:
        assert len(p.read_text().splitlines()) == 1
    assert json.loads(paths[5].read_text())["config_hash"] == "abc"


def test_export_is_byte_identical(short_cfg, tmp_path):
    for d in ("a", "b"):
        r = run_reference(short_cfg, 11, "greedy", episodes=2, keep_tasks=True)
        export([r], tmp_path / d, short_cfg.config_hash())
    for name in ("episodes.csv", "tasks.csv", "ledgers.csv", "long.csv", "train_log.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len((tmp_path / "a" / "tasks.csv").read_text().splitlines()) > 1


def test_episode_row_count(tmp_path):
    results = []
    for seed in range(5):
        r = RunResult("learned", "learned", seed)
        r.episodes = [EpisodeMetrics(ep, seed, 1.0, 2.0, 0.1, 0.2, 0.15, 0.9, 0.8, 10, 9, 1)
                      for ep in range(100)]
        results.append(r)
    paths = export(results, tmp_path)
    with open(paths[0]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 500
    assert {r["seed"] for r in rows} == {str(s) for s in range(5)}
    assert math.isclose(float(rows[0]["f_total"]), 0.15)
