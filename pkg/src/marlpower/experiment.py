"""Benchmark orchestration and result export.

Layout of an output directory::

    <out_dir>/config.json                       resolved config and overrides
    <out_dir>/summary.json                      per-allocator means/stds across seeds
    <out_dir>/seed_<s>/<allocator>/test_curve.csv
    <out_dir>/seed_<s>/<allocator>/cdf.csv
    <out_dir>/seed_<s>/<allocator>/per_slot.csv          (with per_slot_log)
    <out_dir>/seed_<s>/dqn-matched/checkpoint.json
    <out_dir>/seed_<s>/dqn-matched/learning_curve.csv

Every CSV starts with ``#`` comment lines carrying the resolved config and seed.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .baselines import central_delayed, fp_solve, full_power, random_alloc, wmmse_solve
from .config import BASELINES, RunConfig
from .dqn import LAYER_SIZES, load_checkpoint, save_checkpoint
from .marl import TestResult, run_policy, run_testing, run_training
from .simcore import PF

log = logging.getLogger(__name__)

# Fields that change what a trained network looks like; used to decide whether a
# checkpoint on disk can be reused.
_TRAIN_FIELDS = (
    "n_cells", "R", "r", "links_per_cell", "bandwidth", "p_max_dbm", "noise_dbm", "T", "f_d", "eta",
    "sinr_cap_db", "beta", "mode", "gamma", "batch_size", "memory_per_agent", "alpha0", "lr_decay",
    "eps0", "eps_min", "eps_decay", "rms_decay", "rms_eps", "init_std", "T_u", "T_d", "n_neighbors",
    "levels", "train_slots",
)


def moving_average(x, window: int) -> np.ndarray:
    """Mean of the previous ``window`` values (fewer at the start), inclusive."""
    x = np.asarray(x, dtype=float)
    if window < 1:
        raise ValueError("window must be positive")
    cs = np.concatenate([[0.0], np.cumsum(x)])
    k = np.arange(1, len(x) + 1)
    lo = np.maximum(k - window, 0)
    return (cs[k] - cs[lo]) / (k - lo)


def emit_cdf(values, path=None, header_lines=()) -> np.ndarray:
    """Empirical CDF as rows (value, k/n) over the sorted sample.

    Right-continuous step convention: the k-th smallest value carries quantile
    k/n, so repeated values give a vertical step at that value.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    table = np.column_stack([v, np.arange(1, v.size + 1) / v.size])
    if path is not None:
        _write_csv(path, ["value", "quantile"], table.tolist(), header_lines)
    return table


def _header(config: RunConfig, seed) -> list[str]:
    return [f"config: {json.dumps(config.to_dict(), sort_keys=True)}", f"seed: {seed}"]


def _write_csv(path, columns, rows, header_lines=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(columns)
        for row in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Columns and numeric body of a CSV written by this module."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


# -- allocators ----------------------------------------------------------------

def baseline_policy(name: str, config: RunConfig, seed: int):
    """``policy(state, network) -> powers`` for a model-based or trivial allocator.

    Solvers restart every slot (random start for FP, full power for WMMSE) with
    the PF weights in force at the slot.
    """
    if name not in BASELINES:
        raise ValueError(f"unknown baseline {name!r}")
    sc = config.sim_config(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E, BASELINES.index(name)]))
    kw = dict(tol=config.solver_tol, max_iter=config.solver_max_iter)

    if name == "fp":
        return lambda st, net: fp_solve(st.g_now, st.w_now, sc.P_max, sc.sigma2, rng=rng, **kw).p
    if name == "wmmse":
        return lambda st, net: wmmse_solve(st.g_now, st.w_now, sc.P_max, sc.sigma2, **kw).p
    if name == "central":
        return lambda st, net: central_delayed(st.g_prev, st.w_now, sc.P_max, sc.sigma2, rng=rng, **kw).p
    if name == "random":
        return lambda st, net: random_alloc(net.n, sc.P_max, rng)
    return lambda st, net: full_power(net.n, sc.P_max)


def _checkpoint_meta(config: RunConfig, seed: int) -> dict:
    d = config.to_dict()
    return {"seed": seed, "train_config": {k: d[k] for k in _TRAIN_FIELDS}}


def train_or_load(config: RunConfig, seed: int, run_dir, reuse: bool = True, progress_every: int = 0):
    """Train on ``seed`` and save checkpoint plus learning curve in ``run_dir``.

    A checkpoint already in ``run_dir`` is reused when its training config and
    seed match. Returns (params, learning-curve table or None if reused).
    """
    run_dir = Path(run_dir)
    ck = run_dir / "checkpoint.json"
    meta = _checkpoint_meta(config, seed)
    if reuse and ck.exists():
        try:
            params, old = load_checkpoint(ck, LAYER_SIZES[:-1] + (config.levels,))
        except (ValueError, KeyError, json.JSONDecodeError):
            old = None
        if old == json.loads(json.dumps(meta)):
            log.info("seed %d: reusing %s", seed, ck)
            return params, None
    res = run_training(config, seed, progress_every=progress_every)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ck, res.params, meta)
    ma = moving_average(res.slot_mean_rate, config.moving_average)
    ma_log = moving_average(res.sum_log_rate, config.moving_average)
    slots = res.start_slot + np.arange(len(ma))
    rows = zip(slots, res.slot_mean_rate, ma, res.sum_log_rate, ma_log, res.losses)
    _write_csv(run_dir / "learning_curve.csv",
               ["slot", "mean_rate", "mean_rate_ma", "sum_log_rate", "sum_log_rate_ma", "loss"],
               rows, _header(config, seed))
    return res.params, np.column_stack([slots, res.slot_mean_rate, ma])


def run_allocator(config: RunConfig, seed: int, name: str, params=None) -> TestResult:
    keep = config.per_slot_log
    if name in ("dqn-matched", "dqn-unmatched"):
        return run_testing(config, seed, params, keep_records=keep)
    return run_policy(config, seed, baseline_policy(name, config, seed), keep_records=keep)


def write_run(config: RunConfig, seed: int, name: str, res: TestResult, run_dir) -> dict:
    """Per-run CSVs; returns the run's summary entry."""
    run_dir = Path(run_dir)
    head = _header(config, seed) + [f"allocator: {name}"]
    slots = config.train_slots + 1 + np.arange(len(res.slot_mean_rate))
    ma = moving_average(res.slot_mean_rate, config.moving_average)
    _write_csv(run_dir / "test_curve.csv", ["slot", "mean_rate", "mean_rate_ma", "objective", "sum_log_rate"],
               zip(slots, res.slot_mean_rate, ma, res.slot_objective, res.sum_log_rate), head)
    emit_cdf(res.link_mean_rate, run_dir / "cdf.csv", head)
    if config.per_slot_log:
        rows = []
        for rec, rew in zip(res.records, res.rewards):
            sinr_db = 10 * np.log10(np.maximum(rec.sinr, 1e-300))
            for i in range(len(rec.p)):
                rows.append((rec.t, i, rec.p[i], sinr_db[i], rec.C[i], rec.w[i], rew[i]))
        _write_csv(run_dir / "per_slot.csv", ["slot", "link", "power", "sinr_db", "C", "w", "reward"], rows, head)
    entry = {"average": res.average}
    if config.mode == PF:
        entry["sum_log_rate_end"] = float(res.sum_log_rate[-1])
        entry["sum_log_rate_end_unit_bw"] = float(res.sum_log_rate[-1]
                                                  - len(res.link_mean_rate) * np.log(config.bandwidth))
    return entry


def _aggregate(per_seed: dict) -> dict:
    out = {"per_seed": per_seed}
    keys = next(iter(per_seed.values())).keys()
    for k in keys:
        vals = np.array([v[k] for v in per_seed.values()])
        out[f"{k}_mean"] = float(vals.mean())
        out[f"{k}_std"] = float(vals.std())
    return out


def run_experiment(config: RunConfig, overrides: dict | None = None, reuse: bool = True,
                   progress_every: int = 0) -> dict:
    """Train (for matched DQN) and test every allocator on every seed.

    Writes per-run files and ``summary.json`` under config.out_dir and returns
    the summary. The same config and seeds always give the same summary bytes.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump({"config": config.to_dict(), "overrides": overrides or {}}, fh, indent=1, sort_keys=True)
    unmatched = None
    if "dqn-unmatched" in config.allocators:
        unmatched, _ = load_checkpoint(config.checkpoint, LAYER_SIZES[:-1] + (config.levels,))

    results: dict[str, dict] = {name: {} for name in config.allocators}
    for seed in config.seeds:
        for name in config.allocators:
            run_dir = out / f"seed_{seed}" / name
            params = None
            if name == "dqn-matched":
                params, _ = train_or_load(config, seed, run_dir, reuse, progress_every)
            elif name == "dqn-unmatched":
                params = unmatched
            res = run_allocator(config, seed, name, params)
            results[name][str(seed)] = write_run(config, seed, name, res, run_dir)
            log.info("seed %d %s: %.4f", seed, name, res.average)

    summary = {
        "config": config.to_dict(),
        "overrides": overrides or {},
        "units": "average spectral efficiency per link, bit/s/Hz",
        "allocators": {name: _aggregate(per_seed) for name, per_seed in results.items()},
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary
