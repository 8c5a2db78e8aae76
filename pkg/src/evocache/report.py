"""Experiment orchestration and result emission.

Sweeps run policies x cache percentages x seeds over synthetic traces, each
cell an independent, deterministic simulation. Results land as CSV files
(raw rows always included so every aggregate is recomputable) with matching
matplotlib figures rendered alongside:

    <out>/sweep.csv, sweep_agg.csv, sweep.png        hit rate vs cache percentage
    <out>/series_<policy>.csv, series.png            per-window hit rate over time
    <out>/alpha.csv, alpha.png                       hedge weights per retrain
    <out>/loss_curves.csv, loss_curves.png           evolving vs fixed-depth loss
    <out>/loss_quantiles.csv, loss_quantiles.png     loss spread after burn-in
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .evonet import Network
from .simulator import SimConfig, SimResult, run_simulation
from .trace import SyntheticTraceConfig, generate_zipf_trace


@dataclass
class SweepGrid:
    policies: list
    cache_percentages: list
    seeds: list = field(default_factory=lambda: list(range(9)))
    trace: SyntheticTraceConfig = field(default_factory=SyntheticTraceConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def cells(self):
        for policy in self.policies:
            for p in self.cache_percentages:
                for seed in self.seeds:
                    yield (policy, p, seed)


@dataclass
class ResultTable:
    rows: list  # dicts keyed (policy, p, seed) plus metrics; error rows flagged
    aggregates: list  # per (policy, p): mean/median/min/max/variance over seeds


def _run_cell(args):
    grid, policy, p, seed = args
    try:
        catalog, requests = generate_zipf_trace(replace(grid.trace, rng_seed=seed))
        config = replace(grid.sim, policy=policy, cache_percentage=p, seed=seed)
        result = run_simulation(catalog, requests, config)
        return {
            "policy": policy,
            "cache_percentage": p,
            "seed": seed,
            "hit_rate": result.hit_rate,
            "warmup_hit_rate": result.warmup_hit_rate,
            "test_requests": result.test_requests,
            "test_hits": result.test_hits,
            "evictions": result.evictions,
            "error": "",
        }
    except Exception as e:  # per-cell isolation: a bad cell must not kill the sweep
        return {
            "policy": policy,
            "cache_percentage": p,
            "seed": seed,
            "hit_rate": "",
            "warmup_hit_rate": "",
            "test_requests": "",
            "test_hits": "",
            "evictions": "",
            "error": f"{type(e).__name__}: {e}",
        }


def run_sweep(grid: SweepGrid, jobs: int = 1) -> ResultTable:
    """Execute every grid cell; output is invariant to scheduling order."""
    cells = list(grid.cells())
    if not cells:
        raise ValueError("empty sweep grid")
    args = [(grid, policy, p, seed) for policy, p, seed in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, args))
    else:
        rows = [_run_cell(a) for a in args]
    rows.sort(key=lambda r: (r["policy"], r["cache_percentage"], r["seed"]))

    aggregates = []
    for policy in grid.policies:
        for p in grid.cache_percentages:
            vals = [r["hit_rate"] for r in rows
                    if r["policy"] == policy and r["cache_percentage"] == p
                    and r["error"] == ""]
            if not vals:
                continue
            v = np.array(vals, dtype=float)
            aggregates.append({
                "policy": policy,
                "cache_percentage": p,
                "n_seeds": len(vals),
                "mean": float(v.mean()),
                "median": float(np.median(v)),
                "min": float(v.min()),
                "max": float(v.max()),
                "variance": float(v.var()),
            })
    return ResultTable(rows=rows, aggregates=aggregates)


def convergence_comparison(make_batch, n_batches: int, net_evolving: Network,
                           net_fixed: Network):
    """Train an evolving net and a fixed-depth comparator on the same batch stream.

    The comparator is the same architecture with alpha frozen on the last
    layer (the conventional use-the-deepest-head reading). Returns the two
    per-batch combined-loss curves.
    """
    net_fixed.alpha = np.zeros(net_fixed.L)
    net_fixed.alpha[-1] = 1.0
    net_fixed.adapt_alpha = False
    evolving, fixed = [], []
    for i in range(n_batches):
        batch = make_batch(i)
        evolving.append(net_evolving.train_step(batch).combined_loss)
        fixed.append(net_fixed.train_step(batch).combined_loss)
    return evolving, fixed


# --- emission ----------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def emit_sweep(table: ResultTable, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    header = ["policy", "cache_percentage", "seed", "hit_rate", "warmup_hit_rate",
              "test_requests", "test_hits", "evictions", "error"]
    _write_csv(os.path.join(out_dir, "sweep.csv"), header,
               [[_fmt(r[k]) for k in header] for r in table.rows])
    agg_header = ["policy", "cache_percentage", "n_seeds", "mean", "median",
                  "min", "max", "variance"]
    _write_csv(os.path.join(out_dir, "sweep_agg.csv"), agg_header,
               [[_fmt(r[k]) for k in agg_header] for r in table.aggregates])
    _plot_sweep(table, os.path.join(out_dir, "sweep.png"))


def emit_series(results: dict[str, SimResult], out_dir: str):
    """Per-window hit-rate series, one CSV per policy plus a combined figure."""
    os.makedirs(out_dir, exist_ok=True)
    for policy, res in sorted(results.items()):
        rows = [[w, n, h, _fmt(h / n if n else 0.0)]
                for w, (n, h) in enumerate(res.window_hits)]
        _write_csv(os.path.join(out_dir, f"series_{policy}.csv"),
                   ["window", "requests", "hits", "hit_rate"], rows)
    _plot_series(results, os.path.join(out_dir, "series.png"))


def emit_alpha(result: SimResult, out_dir: str):
    """Hedge-weight trajectory: one row per retrain, one column per layer."""
    os.makedirs(out_dir, exist_ok=True)
    if not result.alpha_history:
        return
    L = len(result.alpha_history[0][1])
    rows = [[w] + [_fmt(a) for a in alpha] for w, alpha in result.alpha_history]
    _write_csv(os.path.join(out_dir, "alpha.csv"),
               ["retrain_window"] + [f"alpha_{l + 1}" for l in range(L)], rows)
    _plot_alpha(result.alpha_history, os.path.join(out_dir, "alpha.png"))


def emit_loss_curves(evolving, fixed, out_dir: str, burn_in: int = 200):
    """Per-batch loss curves for both nets, plus spread quantiles after burn-in."""
    os.makedirs(out_dir, exist_ok=True)
    rows = [["evolving", i, _fmt(v)] for i, v in enumerate(evolving)]
    rows += [["fixed", i, _fmt(v)] for i, v in enumerate(fixed)]
    _write_csv(os.path.join(out_dir, "loss_curves.csv"),
               ["variant", "batch", "loss"], rows)
    qrows = []
    for label, curve in (("evolving", evolving), ("fixed", fixed)):
        tail = np.array(curve[burn_in:]) if len(curve) > burn_in else np.array(curve)
        qrows.append([label, len(tail)] + [_fmt(np.percentile(tail, q)) for q in (25, 50, 75)])
    _write_csv(os.path.join(out_dir, "loss_quantiles.csv"),
               ["variant", "n_batches", "p25", "p50", "p75"], qrows)
    _plot_losses(evolving, fixed, burn_in, out_dir)


# --- figures -----------------------------------------------------------------


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _plot_sweep(table: ResultTable, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    policies = sorted({r["policy"] for r in table.aggregates})
    for policy in policies:
        pts = [(r["cache_percentage"], r["mean"]) for r in table.aggregates
               if r["policy"] == policy]
        pts.sort()
        ax.plot([p for p, _ in pts], [m for _, m in pts], marker="o", label=policy)
    ax.set_xlabel("cache percentage (%)")
    ax.set_ylabel("hit rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_series(results, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for policy, res in sorted(results.items()):
        rates = [h / n if n else 0.0 for n, h in res.window_hits]
        ax.plot(rates, label=policy, linewidth=0.9)
    ax.set_xlabel("test window")
    ax.set_ylabel("hit rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_alpha(alpha_history, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    windows = [w for w, _ in alpha_history]
    mat = np.array([a for _, a in alpha_history])
    ax.stackplot(windows, mat.T, labels=[f"layer {l + 1}" for l in range(mat.shape[1])])
    ax.set_xlabel("retrain window")
    ax.set_ylabel("hedge weight")
    ax.set_ylim(0, 1)
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_losses(evolving, fixed, burn_in, out_dir):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(evolving, label="evolving", linewidth=0.9)
    ax.plot(fixed, label="fixed depth", linewidth=0.9)
    ax.set_xlabel("batch")
    ax.set_ylabel("combined loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "loss_curves.png"))
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(4, 4))
    data = [evolving[burn_in:] or evolving, fixed[burn_in:] or fixed]
    ax.boxplot(data, tick_labels=["evolving", "fixed"], showfliers=False)
    ax.set_ylabel("loss after burn-in")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "loss_quantiles.png"))
    plt.close(fig)
