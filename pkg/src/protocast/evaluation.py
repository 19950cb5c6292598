"""Forecast metrics, per-instance explanations, activation timelines, the
seasonal-naive baseline, and cluster purity against planted regime labels.

All metrics are computed in normalized space by default; pass the model's
normalizer to report in original units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as tn
from .data import DatasetBundle, Normalizer, VariableSchema, WindowInstance
from .errors import ContractError
from .model import ForecastModel
from .prototypes import align_pattern


@dataclass
class MetricReport:
    mse: float
    mae: float
    per_step_mae: list[float]
    count: int

    def to_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "per_step_mae": self.per_step_mae, "count": self.count}


@dataclass
class Explanation:
    """Exact decomposition of one forecast into leaf contributions.

    ``contributions`` holds (leaf id, path weight, weight * aligned pattern)
    ranked by weight; ``residual`` is prediction minus summed contributions
    and certifies completeness (it should vanish to float noise).
    """

    instance_index: int
    prediction: list[float]
    contributions: list[tuple[int, float, list[float]]]
    residual: list[float]

    def to_dict(self) -> dict:
        return {
            "instance_index": self.instance_index,
            "prediction": self.prediction,
            "contributions": [
                {"leaf_id": nid, "weight": w, "curve": curve} for nid, w, curve in self.contributions
            ],
            "residual": self.residual,
        }


@dataclass
class ActivationEntry:
    instance_index: int
    leaves: list[tuple[int, float]]  # (leaf id, path weight), weight-descending


@dataclass
class ActivationTimeline:
    entries: list[ActivationEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"instance_index": e.instance_index, "leaves": [{"leaf_id": n, "weight": w} for n, w in e.leaves]}
                for e in self.entries
            ]
        }

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["instance_index", "leaf_id", "weight"])
            for e in self.entries:
                for nid, w in e.leaves:
                    writer.writerow([e.instance_index, nid, repr(w)])


def predictions(model: ForecastModel, windows: Sequence[WindowInstance]) -> np.ndarray:
    """Stacked no-grad forecasts, shape (n_windows, H)."""
    out = np.empty((len(windows), windows[0].horizon)) if windows else np.empty((0, 0))
    with tn.no_grad():
        for i, w in enumerate(windows):
            out[i] = model.predict(w)[0].data
    return out


def metrics_from_arrays(pred: np.ndarray, target: np.ndarray, normalizer: Normalizer | None = None) -> MetricReport:
    if pred.shape != target.shape or pred.ndim != 2:
        raise ContractError(f"prediction/target shapes disagree: {pred.shape} vs {target.shape}")
    if normalizer is not None:
        pred = normalizer.invert_y(pred)
        target = normalizer.invert_y(target)
    err = pred - target
    return MetricReport(
        mse=float((err**2).mean()),
        mae=float(np.abs(err).mean()),
        per_step_mae=[float(v) for v in np.abs(err).mean(axis=0)],
        count=pred.shape[0],
    )


def evaluate(
    model: ForecastModel,
    windows: Sequence[WindowInstance],
    denormalize: bool = False,
) -> MetricReport:
    """Mean squared / absolute error over all windows and horizon steps."""
    if not windows:
        raise ContractError("evaluate needs at least one window")
    pred = predictions(model, windows)
    target = np.stack([w.y_target for w in windows])
    return metrics_from_arrays(pred, target, model.normalizer if denormalize else None)


def explain(model: ForecastModel, instance: WindowInstance) -> Explanation:
    """Decompose one forecast into weight-ranked leaf contributions."""
    with tn.no_grad():
        pred, _, leaf_w = model.predict(instance)
        parts = []
        for nid, w in leaf_w:
            aligned = align_pattern(model.tree.nodes[nid].pattern, instance.phase0, instance.horizon)
            parts.append((nid, w.item(), w.item() * aligned.data))
    parts.sort(key=lambda item: (-item[1], item[0]))
    total = np.sum([curve for _, _, curve in parts], axis=0)
    residual = pred.data - total
    return Explanation(
        instance_index=instance.index,
        prediction=[float(v) for v in pred.data],
        contributions=[(nid, w, [float(v) for v in curve]) for nid, w, curve in parts],
        residual=[float(v) for v in residual],
    )


def activation_report(model: ForecastModel, windows: Sequence[WindowInstance], k: int = 1) -> ActivationTimeline:
    """Per instance (in time order): the k largest path-weight leaves.

    Ties break by ascending leaf id; k larger than the leaf count is truncated.
    """
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    timeline = ActivationTimeline()
    with tn.no_grad():
        for w in windows:
            _, _, leaf_w = model.predict(w)
            scored = sorted(((nid, t.item()) for nid, t in leaf_w), key=lambda it: (-it[1], it[0]))
            timeline.entries.append(ActivationEntry(instance_index=w.index, leaves=scored[:k]))
    return timeline


# ---------------------------------------------------------------------------
# baseline and purity
# ---------------------------------------------------------------------------

def seasonal_naive_predictions(
    bundle: DatasetBundle, schema: VariableSchema, windows: Sequence[WindowInstance]
) -> np.ndarray:
    """Per-phase mean of the train split, aligned to each window's phase.

    The desk-scale comparison stand-in: it sees the same train data as the
    model but no covariates.
    """
    T = schema.period_T
    lo, hi = bundle.splits.train
    sums = np.zeros(T)
    counts = np.zeros(T)
    for i in range(lo, hi):
        sums[i % T] += bundle.y[i]
        counts[i % T] += 1
    phase_mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    out = np.empty((len(windows), schema.horizon_H))
    for i, w in enumerate(windows):
        idx = (w.phase0 + np.arange(w.horizon)) % T
        out[i] = phase_mean[idx]
    return out


def windows_majority_regime(windows: Sequence[WindowInstance], labels: np.ndarray) -> np.ndarray:
    """Per-window regime: majority label over the forecast steps (first step wins ties)."""
    out = np.empty(len(windows), dtype=np.int64)
    for i, w in enumerate(windows):
        span = labels[w.index + w.lookback : w.index + w.lookback + w.horizon]
        values, counts = np.unique(span, return_counts=True)
        best = counts.max()
        candidates = set(values[counts == best])
        out[i] = span[0] if int(span[0]) in candidates else int(values[counts.argmax()])
    return out


def leaf_regime_purity(timeline: ActivationTimeline, regimes: np.ndarray) -> float:
    """Majority-vote leaf-to-regime mapping, scored on the dominant leaf.

    ``regimes[i]`` is the true regime of the i-th timeline entry. Purity is
    the fraction of instances whose top-1 leaf maps to their regime.
    """
    if len(timeline.entries) != len(regimes):
        raise ContractError("timeline and regime labels disagree in length")
    votes: dict[int, dict[int, int]] = {}
    tops = []
    for entry, regime in zip(timeline.entries, regimes):
        top = entry.leaves[0][0]
        tops.append(top)
        votes.setdefault(top, {}).setdefault(int(regime), 0)
        votes[top][int(regime)] += 1
    mapping = {leaf: max(hist.items(), key=lambda kv: (kv[1], -kv[0]))[0] for leaf, hist in votes.items()}
    hits = sum(1 for top, regime in zip(tops, regimes) if mapping[top] == int(regime))
    return hits / len(regimes)


def mean_root_entropy(model: ForecastModel, windows: Sequence[WindowInstance]) -> float:
    """Average Shannon entropy of the root weight vector across windows."""
    total = 0.0
    with tn.no_grad():
        for w in windows:
            _, root_w, _ = model.predict(w)
            f = np.maximum(root_w.data, 1e-12)
            total += float(-(f * np.log(f)).sum())
    return total / len(windows)
