import hashlib
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernoulli_dirac import io
from bernoulli_dirac.ensemble import SweepConfig, aggregate, run_sweep, write_sweep


def test_aggregate_hand_computation():
    a = aggregate([3.0, 1.0, 2.0])
    assert (a.mean, a.median, a.min, a.max, a.count) == (2.0, 2.0, 1.0, 3.0, 3)
    # sample stdev 1 over sqrt(3)
    assert a.stderr == pytest.approx(1 / math.sqrt(3), abs=1e-15)
    assert not a.degenerate


def test_aggregate_single_value():
    a = aggregate([0.25])
    assert a.mean == a.median == a.min == a.max == 0.25
    assert a.stderr == 0.0 and a.degenerate


def test_aggregate_even_count_median_is_lower_middle():
    assert aggregate([4.0, 1.0, 3.0, 2.0]).median == 2.0


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms())
def test_aggregate_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert aggregate(values) == aggregate(shuffled)


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig("nonsense", {"E": [0.0]})
    with pytest.raises(ValueError):
        SweepConfig("lyapunov", {"E": []})
    with pytest.raises(ValueError):
        SweepConfig("lyapunov", {"E": [0.0]}, realizations=0)


def test_config_hash_ignores_workers():
    a = SweepConfig("lyapunov", {"E": [0.0, 0.5]}, 4, seed=3, workers=1)
    b = SweepConfig("lyapunov", {"E": [0.0, 0.5]}, 4, seed=3, workers=8)
    c = SweepConfig("lyapunov", {"E": [0.0, 0.5]}, 4, seed=4)
    assert a.hash() == b.hash() != c.hash()


def test_points_are_sorted_product():
    cfg = SweepConfig("lyapunov", {"m": [0, 1], "E": [0.1, 0.2, 0.3]})
    pts = cfg.points()
    assert len(pts) == 6 and pts[0] == {"E": 0.1, "m": 0} and pts[1] == {"E": 0.1, "m": 1}


def test_lyapunov_sweep_bookkeeping():
    cfg = SweepConfig("lyapunov", {"E": [0.0, 0.2, 0.4, 0.6, 0.8]}, 16, seed=1,
                      options={"steps": 2000, "V": 0.5})
    res = run_sweep(cfg)
    assert len(res.aggregates) == 5
    assert all(row["count"] == 16 for row in res.aggregates)
    assert len(res.records) == 80
    assert [r["global_realization"] for r in res.records] == list(range(80))


def test_single_realization_is_degenerate():
    res = run_sweep(SweepConfig("lyapunov", {"E": [0.3]}, 1, options={"steps": 1000}))
    assert res.aggregates[0]["stderr"] == 0.0 and res.aggregates[0]["degenerate"]


def _digest(paths):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_parallel_output_is_byte_identical(tmp_path):
    grid = {"E": [0.0, 0.5, 1.0]}
    opts = {"steps": 3000, "V": 1.0, "m": 1.0}
    serial = write_sweep(run_sweep(SweepConfig("lyapunov", grid, 4, 9, 1, opts)), tmp_path / "a", "out")
    parallel = write_sweep(run_sweep(SweepConfig("lyapunov", grid, 4, 9, 3, opts)), tmp_path / "b", "out")
    assert _digest(serial) == _digest(parallel)


def test_sweep_files_carry_provenance(tmp_path):
    cfg = SweepConfig("critical_window", {"N": [50]}, 2, options={"lam": 1.0})
    jpath, cpath = write_sweep(run_sweep(cfg), tmp_path)
    prov, records = io.read_jsonl(jpath)
    assert prov["config_hash"] == cfg.hash() and len(records) == 2
    cprov, cols, rows = io.read_csv(cpath)
    assert cprov["config_hash"] == cfg.hash()
    assert "mean" in cols and len(rows) == 1


@pytest.mark.parametrize("task,grid,opts", [
    ("wegner", {"E": [0.2], "L": [4]}, {"V": 1.0, "m": 1.0}),
    ("nonrel", {"c": [8.0]}, {"N": 10, "m": 1.0, "V": 1.0}),
    ("laplace", {"T": [1.0]}, {"N": 10}),
    ("moments", {"t": [2.0]}, {}),
    ("compare", {"T": [2.0]}, {"m": 0.01}),
])
def test_other_tasks_run(task, grid, opts):
    res = run_sweep(SweepConfig(task, grid, 2, options=opts))
    assert all(math.isfinite(r["value"]) for r in res.records)
