"""Boundary-ablation sweeps over the training engine.

Each grid point retrains from scratch for every fold and seed with the
corresponding boundary transform applied to both streams. Single-run
failures are recorded and the sweep continues.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .matchmismatch import (
    TrainConfig,
    _check_boundary_args,
    make_folds,
    run_fold,
)
from .validation import check_in, check_int

ABLATION_KINDS = ("random_n", "random_count", "skip_n")
_KIND_TO_MODE = {"random_n": "random_fixed", "random_count": "random_count",
                 "skip_n": "skip"}

DEFAULT_GRIDS = {
    "random_n": (1, 2, 4, 8),
    "random_count": ((1, 8),),
    "skip_n": (2, 3, 4, 5),
}


@dataclass(frozen=True)
class AblationPlan:
    kind: str
    grid: tuple
    seeds: tuple
    base_config: TrainConfig

    def validate(self) -> "AblationPlan":
        check_in(self.kind, ABLATION_KINDS, name="kind")
        if not self.grid:
            raise ValueError("ablation grid must not be empty")
        mode = _KIND_TO_MODE[self.kind]
        for value in self.grid:
            _check_boundary_args(mode, value)
        if not self.seeds:
            raise ValueError("ablation needs at least one seed")
        for seed in self.seeds:
            check_int(seed, name="seed", minimum=0)
        self.base_config.validate()
        if self.base_config.boundary_mode != "annotated":
            raise ValueError(
                "base_config must use annotated boundaries; the grid supplies "
                "the transforms"
            )
        return self

    def configs(self):
        """One TrainConfig per (grid value, seed), in plan order."""
        mode = _KIND_TO_MODE[self.kind]
        for value in self.grid:
            for seed in self.seeds:
                yield value, replace(self.base_config, boundary_mode=mode,
                                     boundary_param=value, seed=seed)

    def snapshot(self) -> dict:
        return {
            "kind": self.kind,
            "grid": [_json_param(value) for value in self.grid],
            "seeds": list(self.seeds),
            "train": self.base_config.snapshot(),
        }


def _json_param(value):
    return list(value) if isinstance(value, (tuple, list)) else value


def run_ablation(plan: AblationPlan, records, *, n_folds: int = 3,
                 log=None) -> list:
    """Sweep the plan; one record per (parameter, seed, fold)."""
    plan.validate()
    folds = make_folds((r.subject_id for r in records), n_folds)
    runs = []
    for value, config in plan.configs():
        for fold_index, split in enumerate(folds, start=1):
            entry = {"kind": plan.kind, "parameter": _json_param(value),
                     "seed": config.seed, "fold_index": fold_index}
            try:
                result = run_fold(records, split, config,
                                  fold_index=fold_index, log=log)
            except Exception as exc:
                entry["status"] = "failed"
                entry["error"] = f"{type(exc).__name__}: {exc}"
                if log is not None:
                    log(f"{plan.kind}={value} seed={config.seed} "
                        f"fold={fold_index} failed: {entry['error']}")
            else:
                entry["status"] = "ok"
                entry["result"] = result.to_dict()
            runs.append(entry)
    return runs


def aggregate_runs(runs: Sequence[dict]) -> list:
    """Mean accuracy per parameter over successful folds and seeds."""
    order = []
    grouped = {}
    for entry in runs:
        key = (entry["kind"], repr(entry["parameter"]))
        if key not in grouped:
            grouped[key] = {"kind": entry["kind"],
                            "parameter": entry["parameter"],
                            "accuracies": [], "n_failed": 0}
            order.append(key)
        if entry["status"] == "ok":
            grouped[key]["accuracies"].append(entry["result"]["accuracy"])
        else:
            grouped[key]["n_failed"] += 1
    rows = []
    for key in order:
        group = grouped[key]
        accuracies = group["accuracies"]
        rows.append({
            "kind": group["kind"],
            "parameter": group["parameter"],
            "n_runs": len(accuracies),
            "n_failed": group["n_failed"],
            "mean_accuracy": float(np.mean(accuracies)) if accuracies else None,
            "min_accuracy": float(np.min(accuracies)) if accuracies else None,
            "max_accuracy": float(np.max(accuracies)) if accuracies else None,
        })
    return rows


def trend_plot(rows: Sequence[dict], path, *, title: Optional[str] = None):
    """Accuracy-versus-parameter plot for an aggregated sweep."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plotted = [row for row in rows if row["mean_accuracy"] is not None]
    if not plotted:
        raise ValueError("nothing to plot: every run failed")
    labels = [str(row["parameter"]) for row in plotted]
    means = [row["mean_accuracy"] for row in plotted]
    lows = [row["min_accuracy"] for row in plotted]
    highs = [row["max_accuracy"] for row in plotted]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    x = np.arange(len(labels))
    ax.errorbar(x, means,
                yerr=[np.subtract(means, lows), np.subtract(highs, means)],
                fmt="o-", capsize=3)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel(plotted[0]["kind"])
    ax.set_ylabel("test accuracy [%]")
    ax.set_ylim(0, 100)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
