"""
Benchmark batteries: many seeded runs per scenario, aggregated into a table.

Finished runs are pickled under a cache directory keyed by a hash of
(scenario, config, mode, seed), so an interrupted battery resumes where it
stopped. Runs fan out over a process pool; results are gathered in
submission order so tables do not depend on scheduling.
"""

import hashlib
import json
import logging
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .sim_controller import run_scenario

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Run cache
# ---------------------------------------------------------------------------

def run_key(scenario, config, mode, seed):
    payload = json.dumps({
        "scenario": scenario.to_json(),
        "config": config.to_json(),
        "mode": mode,
        "seed": int(seed),
    }, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]


def _cache_path(cache_dir, key):
    os.makedirs(cache_dir, exist_ok=True)
    return os.path.join(cache_dir, f"{key}.pkl")


def _load_or_run(job):
    scenario, config, mode, seed, cache_dir = job
    path = None
    if cache_dir:
        path = _cache_path(cache_dir, run_key(scenario, config, mode, seed))
        if os.path.exists(path):
            with open(path, "rb") as f:
                return pickle.load(f)
    try:
        metrics = run_scenario(scenario, config, seed=seed, mode=mode).metrics
        record = {"metrics": metrics, "error": None}
    except Exception as e:  # recorded per run, the battery continues
        log.error("[Bench] %s seed=%d failed: %s", scenario.name, seed, e)
        record = {"metrics": None, "error": f"{type(e).__name__}: {e}"}
    if path is not None and record["error"] is None:
        with open(path, "wb") as f:
            pickle.dump(record, f, protocol=pickle.HIGHEST_PROTOCOL)
    return record


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    scenario: str
    mode: str
    runs: int
    errors: int
    success_rate: float
    completion_rate: float
    collision_free_rate: float
    mean_path_length: float
    mean_path_ratio: float
    mean_total_time: float

    def to_json(self):
        return {k: (None if isinstance(v, float) and np.isnan(v) else v)
                for k, v in self.__dict__.items()}


def _mean(values):
    return float(np.mean(values)) if values else float("nan")


def aggregate(scenario_name, mode, records):
    """Table row from run records. Path and time means cover completed runs."""
    ok = [r["metrics"] for r in records if r["metrics"] is not None]
    done = [m for m in ok if m.completion]
    n = len(records)
    return BenchRow(
        scenario=scenario_name,
        mode=mode,
        runs=n,
        errors=n - len(ok),
        success_rate=100.0 * sum(m.success for m in ok) / n if n else 0.0,
        completion_rate=100.0 * len(done) / n if n else 0.0,
        collision_free_rate=100.0 * sum(m.collision_free for m in ok) / n if n else 0.0,
        mean_path_length=_mean([m.path_length for m in done]),
        mean_path_ratio=_mean([m.path_ratio for m in done]),
        mean_total_time=_mean([m.total_time for m in done]),
    )


def run_battery(scenarios, config, runs=10, mode=None, workers=1, cache_dir=None, base_seed=0):
    """Run `runs` seeds of every scenario.

    Returns:
        (rows, per-run records) with rows in scenario order.
    """
    mode = mode or config.run.mode
    jobs = [(sc, config, mode, base_seed + i, cache_dir) for sc in scenarios for i in range(runs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_load_or_run, jobs))
    else:
        records = [_load_or_run(job) for job in jobs]
    rows = []
    per_run = []
    for s_idx, sc in enumerate(scenarios):
        chunk = records[s_idx * runs:(s_idx + 1) * runs]
        rows.append(aggregate(sc.name, mode, chunk))
        for i, rec in enumerate(chunk):
            per_run.append({
                "scenario": sc.name, "seed": base_seed + i,
                "metrics": rec["metrics"], "error": rec["error"],
            })
    return rows, per_run


def write_table_json(rows, per_run, path):
    data = {
        "rows": [r.to_json() for r in rows],
        "runs": [{
            "scenario": r["scenario"], "seed": r["seed"], "error": r["error"],
            "metrics": r["metrics"].to_json(include_timing=False) if r["metrics"] else None,
        } for r in per_run],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def write_timing_json(per_run, path):
    data = [{
        "scenario": r["scenario"], "seed": r["seed"],
        "mean_solve_ms": r["metrics"].mean_solve_ms if r["metrics"] else None,
        "median_solve_ms": r["metrics"].median_solve_ms if r["metrics"] else None,
    } for r in per_run]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
