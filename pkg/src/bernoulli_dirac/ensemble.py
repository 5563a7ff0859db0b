"""Seeded sweeps over parameter grids and disorder realizations.

Every (grid point, realization) pair gets the global realization index
``point * realizations + r``. That index and the master seed key the random
stream, so a result does not depend on which worker computed it. Records are
sorted by ``(point, realization)`` before they are aggregated or written.
The output is therefore byte-identical for any number of workers.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import io
from .dynamics import (
    Propagator,
    laplace_moment_energy,
    laplace_moment_time,
    mass_comparison,
    moment_series,
    radius_bound,
    safe_window,
)
from .model import DiracParams, LatticeWindow, PotentialSpec, build_dirac, delta_state, sample_realization
from .spectral import nonrel_limit_error, wegner_hit
from .transfer import critical_window_supremum, lyapunov_realization

__all__ = ["SweepConfig", "Aggregate", "SweepResult", "TASKS", "aggregate", "run_sweep", "write_sweep"]


@dataclass(frozen=True)
class Aggregate:
    """Order-independent sample statistics of one grid point.

    ``stderr`` is the sample standard deviation (``n - 1`` denominator)
    divided by ``sqrt(n)``. For a single value it is 0 and ``degenerate`` is
    set. The median of an even count is the lower of the two middle values.
    """

    mean: float
    median: float
    stderr: float
    min: float
    max: float
    count: int
    degenerate: bool = False


def aggregate(values: Iterable[float]) -> Aggregate:
    vals = sorted(float(v) for v in values)
    n = len(vals)
    if n == 0:
        raise ValueError("cannot aggregate an empty sample")
    mean = math.fsum(vals) / n
    median = vals[(n - 1) // 2]
    if n == 1:
        return Aggregate(mean, median, 0.0, vals[0], vals[0], 1, True)
    var = math.fsum(sorted((v - mean) ** 2 for v in vals)) / (n - 1)
    return Aggregate(mean, median, math.sqrt(var / n), vals[0], vals[-1], n, False)


@dataclass(frozen=True)
class SweepConfig:
    """Parameter grid, realization count and master seed of a sweep.

    ``grid`` maps parameter names to lists of values; the sweep visits their
    Cartesian product with keys in sorted order. ``options`` holds scalar
    settings shared by every point (step counts, box sizes). ``workers``
    does not influence any output.
    """

    task: str
    grid: Mapping[str, Sequence[Any]]
    realizations: int = 1
    seed: int = 0
    workers: int = 1
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {sorted(TASKS)}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("sweep grid must be nonempty in every parameter")
        if self.realizations < 1:
            raise ValueError("need at least one realization per grid point")
        if self.workers < 1:
            raise ValueError("need at least one worker")

    def points(self) -> list[dict]:
        keys = sorted(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]

    def identity(self) -> dict:
        """Everything that determines the output, i.e. all fields except ``workers``."""
        return {"task": self.task, "grid": {k: list(v) for k, v in sorted(self.grid.items())},
                "realizations": self.realizations, "seed": self.seed,
                "options": dict(sorted(self.options.items()))}

    def hash(self) -> str:
        return io.config_hash(self.identity())


def _params(pt: Mapping, opts: Mapping) -> tuple[DiracParams, PotentialSpec]:
    get = lambda k, d: pt.get(k, opts.get(k, d))  # noqa: E731
    return (DiracParams(float(get("m", 0.0)), float(get("c", 1.0))),
            PotentialSpec.bernoulli(float(get("V", 0.5)), float(get("p", 0.5))))


def _opt(pt: Mapping, opts: Mapping, key: str, default: Any) -> Any:
    return pt.get(key, opts.get(key, default))


def _task_lyapunov(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    steps = int(_opt(pt, opts, "steps", 10**6))
    return {"value": lyapunov_realization(float(pt["E"]), params, spec, steps, seed, g)}


def _task_wegner(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    hit = wegner_hit(float(pt["E"]), int(pt["L"]), float(_opt(pt, opts, "theta", 0.5)),
                     float(_opt(pt, opts, "tau", 0.1)), params, spec, seed, g)
    return {"value": 1.0 if hit else 0.0}


def _task_moments(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    t = float(pt["t"])
    q = float(_opt(pt, opts, "q", 2.0))
    window = safe_window(radius_bound(params, spec), t)
    real = sample_realization(spec, window, seed, g)
    prop = Propagator.chebyshev(build_dirac(params, real))
    s = moment_series(prop, delta_state(window), q, [t])
    return {"value": float(s.values[-1]), "boundary_flag": s.boundary_flag}


def _task_laplace(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    T = float(pt["T"])
    q = float(_opt(pt, opts, "q", 2.0))
    window = LatticeWindow.centered(int(_opt(pt, opts, "N", 64)))
    real = sample_realization(spec, window, seed, g)
    op = build_dirac(params, real)
    a_t = laplace_moment_time(Propagator.chebyshev(op), delta_state(window), q, T,
                              check_boundary=False).value
    a_e = laplace_moment_energy(op, q, T).value
    rel = abs(a_t - a_e) / abs(a_e) if a_e else 0.0
    return {"value": a_t, "A_time": a_t, "A_energy": a_e, "rel_diff": rel}


def _task_nonrel(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    window = LatticeWindow.centered(int(_opt(pt, opts, "N", 60)))
    real = sample_realization(spec, window, seed, g)
    z = complex(_opt(pt, opts, "z", 1j))
    return {"value": nonrel_limit_error(params.c, params.m, z, real)}


def _task_compare(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    T = float(pt["T"])
    m_prime = float(_opt(pt, opts, "m_prime", 0.0))
    q = float(_opt(pt, opts, "q", 2.0))
    big = DiracParams(max(params.m, m_prime), params.c)
    window = safe_window(radius_bound(big, spec), T)
    real = sample_realization(spec, window, seed, g)
    res = mass_comparison(params.m, m_prime, params.c, real, q, [T])
    return {"value": float(res.sup_diff[-1])}


def _task_critical_window(pt, opts, seed, g) -> dict:
    params, spec = _params(pt, opts)
    N = int(pt["N"])
    lam = _opt(pt, opts, "lam", None)
    window = LatticeWindow(0, N - 1)
    real = sample_realization(spec, window, seed, g)
    sup = critical_window_supremum(real, N, None if lam is None else float(lam), params, spec.V,
                                   sign=int(_opt(pt, opts, "sign", 1)))
    return {"value": float(sup)}


TASKS: dict[str, Callable[[Mapping, Mapping, int, int], dict]] = {
    "lyapunov": _task_lyapunov,
    "wegner": _task_wegner,
    "moments": _task_moments,
    "laplace": _task_laplace,
    "nonrel": _task_nonrel,
    "compare": _task_compare,
    "critical_window": _task_critical_window,
}


def _run_unit(args) -> dict:
    task, point_index, r, g, pt, opts, seed = args
    out = TASKS[task](pt, opts, seed, g)
    return {"point": point_index, "realization": r, "global_realization": g, "seed": seed,
            **{k: pt[k] for k in sorted(pt)}, **out}


@dataclass(frozen=True, eq=False)
class SweepResult:
    config: SweepConfig
    points: list
    records: list
    aggregates: list

    def provenance(self) -> dict:
        return {"config_hash": self.config.hash(), "config": self.config.identity(),
                "stderr": "sample stdev (n-1) / sqrt(n)", "median": "lower-mid for even counts"}


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run every (grid point, realization) unit and aggregate the ``value`` field per point."""
    points = config.points()
    n_real = config.realizations
    units = [(config.task, i, r, i * n_real + r, pt, dict(config.options), config.seed)
             for i, pt in enumerate(points) for r in range(n_real)]
    if config.workers == 1 or len(units) == 1:
        records = [_run_unit(u) for u in units]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_unit, units, chunksize=max(1, len(units) // (4 * config.workers))))
    records.sort(key=lambda rec: (rec["point"], rec["realization"]))
    aggs = []
    for i, pt in enumerate(points):
        agg = aggregate(rec["value"] for rec in records if rec["point"] == i)
        aggs.append({"point": i, **{k: pt[k] for k in sorted(pt)}, **agg.__dict__})
    return SweepResult(config, points, records, aggs)


def write_sweep(result: SweepResult, out_dir, stem: Optional[str] = None) -> tuple[Path, Path]:
    """Write ``<stem>.jsonl`` (raw records) and ``<stem>.csv`` (aggregates)."""
    out_dir = Path(out_dir)
    stem = stem or f"{result.config.task}-{result.config.hash()[:12]}"
    prov = result.provenance()
    jpath = io.write_jsonl(out_dir / f"{stem}.jsonl", result.records, prov)
    columns = list(result.aggregates[0].keys())
    cpath = io.write_csv(out_dir / f"{stem}.csv", columns, result.aggregates, prov)
    return jpath, cpath
