"""
Metrics and experiment harnesses: accuracy, view-cluster recovery, the
view-removal study, and plot-ready plan exports.
"""

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import MultiViewDataset, SplitSpec, split_and_unalign
from .ot import TransportPlan
from .train import TrainConfig, predict, train_semisupervised


def accuracy(preds, truth) -> float:
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {truth.shape}")
    if preds.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float(np.mean(preds == truth))


def _comb2(x):
    return x * (x - 1) / 2.0


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index of two labelings (pair-counting form)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("partitions must label the same items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(a.size)
    expected = rows * cols / total if total else 0.0
    max_index = (rows + cols) / 2.0
    if max_index == expected:
        # both partitions trivial (all singletons or one block): agreement is perfect
        return 1.0
    return float((index - expected) / (max_index - expected))


def view_assignment(plan) -> np.ndarray:
    """Hard cluster of each view: row argmax of the plan, ties to the lowest column."""
    w = plan.weights if isinstance(plan, TransportPlan) else np.asarray(plan)
    return np.argmax(w, axis=1)


def cluster_recovery(plan, planted) -> float:
    """ARI between the plan's argmax view partition and the planted one."""
    w = plan.weights if isinstance(plan, TransportPlan) else np.asarray(plan)
    planted = np.asarray(planted)
    if w.shape[0] != planted.size:
        raise ValueError(f"plan has {w.shape[0]} rows but {planted.size} views are planted")
    return adjusted_rand_index(view_assignment(w), planted)


@dataclass
class AblationReport:
    """Accuracy (mean, std over trials) with all views and with each view removed."""

    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def removal_drop(self) -> dict:
        """Accuracy lost when each view is removed, relative to the all-view row."""
        base = self.rows[0]["mean"]
        return {r["removed"]: base - r["mean"] for r in self.rows[1:]}

    def most_damaging(self) -> str:
        drop = self.removal_drop()
        return max(drop, key=drop.get)


def _trial_accuracy(dataset, config, seed, split_spec):
    split = split_and_unalign(dataset, replace(split_spec, seed=seed))
    model, _ = train_semisupervised(split, replace(config, seed=seed))
    return accuracy(predict(model, split.test.views), split.test.labels)


def run_ablation(dataset: MultiViewDataset, config: TrainConfig, trials=1, seeds=None,
                 split_spec: SplitSpec = SplitSpec()) -> AblationReport:
    """Retrain with every view removed in turn and record test accuracy.

    Each trial uses one seed for both the split and the model, shared by every
    removal so the comparison is paired.
    """
    if dataset.n_views < 2:
        raise ValueError("ablation needs at least two views")
    seeds = list(seeds) if seeds is not None else list(range(trials))
    variants = [("All", dataset)] + [(dataset.names[s], dataset.drop_view(s)) for s in range(dataset.n_views)]
    report = AblationReport()
    for name, ds in variants:
        accs = [_trial_accuracy(ds, config, seed, split_spec) for seed in seeds]
        report.rows.append({
            "removed": name,
            "mean": float(np.mean(accs)),
            "std": float(np.std(accs)),
            "trials": accs,
        })
    return report


def export_plan_heatmap(plan: TransportPlan, view_names, path, col_names=None):
    """Write the plan as a labeled CSV plus a JSON sidecar with the plan schema.

    Returns ``(csv_path, json_path)``.
    """
    rows, cols = plan.weights.shape
    view_names = list(view_names)
    if len(view_names) != rows:
        raise ValueError(f"need {rows} row names, got {len(view_names)}")
    if col_names is None:
        col_names = view_names if rows == cols else [f"cluster{k}" for k in range(cols)]
    path = Path(path)
    side = path.with_suffix(".json")
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow([""] + list(col_names))
            for name, row in zip(view_names, plan.weights):
                w.writerow([name] + [repr(float(x)) for x in row])
        obj = plan.to_dict()
        obj["row_names"] = view_names
        obj["col_names"] = list(col_names)
        side.write_text(json.dumps(obj, indent=2) + "\n")
    except OSError as e:
        raise OSError(f"cannot write plan export to {path}: {e}") from e
    return path, side


def read_plan_heatmap(path):
    """Inverse of the CSV half of :func:`export_plan_heatmap`: ``(weights, rows, cols)``."""
    with open(path, newline="") as f:
        table = list(csv.reader(f))
    cols = table[0][1:]
    rows = [r[0] for r in table[1:]]
    weights = np.array([[float(x) for x in r[1:]] for r in table[1:]])
    return weights, rows, cols
