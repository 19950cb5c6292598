"""Staged optimization: root stage to convergence, rule-driven splits, refinement.

Convergence means early stopping on validation MAE; the parameters from the
best validation epoch (including the pre-training state of each stage) are
restored at stage end, so validation MAE never regresses across stages.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as tn
from .data import WindowInstance
from .errors import ConfigError, TrainingDiverged
from .model import ForecastModel
from .prototypes import split, splitting_rule
from .tensor import Tape, Tensor, backward


@dataclass(frozen=True)
class StagePlanEntry:
    """One split round: rule parameters, or an explicit expert-chosen leaf set."""

    m: int = 2
    k: int = 1
    alpha: float = 50.0
    leaf_ids: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "alpha": self.alpha,
            "leaf_ids": list(self.leaf_ids) if self.leaf_ids is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StagePlanEntry":
        ids = d.get("leaf_ids")
        return cls(
            m=int(d.get("m", 2)),
            k=int(d.get("k", 1)),
            alpha=float(d.get("alpha", 50.0)),
            leaf_ids=tuple(int(i) for i in ids) if ids is not None else None,
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    max_epochs: int = 30
    patience: int = 5
    batch_size: int = 32
    entropy_weight: float = 0.01
    seed: int = 0
    stage_plan: tuple[StagePlanEntry, ...] = ()
    loss_kind: str = "l1"
    entropy_all_groups: bool = False
    clip_norm: float = 10.0

    def __post_init__(self):
        # lr == 0 is allowed so the no-op identity check stays expressible
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.entropy_weight < 0:
            raise ConfigError(f"entropy weight must be >= 0, got {self.entropy_weight}")
        if self.loss_kind not in ("l1", "l2"):
            raise ConfigError(f"loss_kind must be 'l1' or 'l2', got {self.loss_kind!r}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["stage_plan"] = [e.to_dict() for e in self.stage_plan]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        kwargs = dict(d)
        kwargs["stage_plan"] = tuple(StagePlanEntry.from_dict(e) for e in d.get("stage_plan", []))
        return cls(**kwargs)


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    train_loss: float
    val_mae: float


@dataclass
class SplitEvent:
    stage: int
    leaf_ids: list[int]
    m: int


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    stage_boundaries: list[int] = field(default_factory=list)
    stage_val_mae: list[float] = field(default_factory=list)
    split_events: list[SplitEvent] = field(default_factory=list)
    test_metrics: dict | None = None
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epochs": [vars(e) for e in self.epochs],
            "stage_boundaries": self.stage_boundaries,
            "stage_val_mae": self.stage_val_mae,
            "split_events": [
                {"stage": e.stage, "leaf_ids": e.leaf_ids, "m": e.m} for e in self.split_events
            ],
            "test_metrics": self.test_metrics,
            "wall_clock": self.wall_clock,
        }


@dataclass
class WindowSet:
    train: list[WindowInstance]
    val: list[WindowInstance] = field(default_factory=list)
    test: list[WindowInstance] = field(default_factory=list)


def loss(
    pred: Tensor,
    target: Tensor,
    root_weights: Tensor,
    entropy_weight: float,
    loss_kind: str = "l1",
    extra_groups: Sequence[Tensor] | None = None,
) -> Tensor:
    """Forecast error plus entropy-lowering regularization on prototype weights.

    The regularizer is -lambda * sum_i f_i log f_i, a nonnegative term equal
    to lambda times the entropy of the weights, so minimizing concentrates
    mass on few prototypes. ``extra_groups`` optionally extends the term to
    sibling groups below the roots.
    """
    base = tn.l1_diff(pred, target) if loss_kind == "l1" else tn.l2_diff(pred, target)
    if entropy_weight == 0.0:
        return base
    ent = tn.plogp_sum(root_weights)
    if extra_groups:
        for g in extra_groups:
            ent = tn.add(ent, tn.plogp_sum(g))
    return tn.add(base, tn.smul(ent, -entropy_weight))


class Adam:
    """Adaptive moment estimation with the standard constants."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * p.grad
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * p.grad**2
            p.data -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


def validation_mae(model: ForecastModel, windows: Sequence[WindowInstance]) -> float:
    if not windows:
        return float("nan")
    total = 0.0
    with tn.no_grad():
        for w in windows:
            pred, _, _ = model.predict(w)
            total += float(np.abs(pred.data - w.y_target).mean())
    return total / len(windows)


def train_stage(
    model: ForecastModel,
    windows: WindowSet,
    config: TrainConfig,
    stage_index: int = 0,
    progress_cb: Callable[[int], None] | None = None,
) -> tuple[list[EpochRecord], float]:
    """One stage of mini-batch Adam with early stopping on validation MAE.

    The pre-training state counts as an early-stopping candidate, so the
    restored parameters are never worse on validation than the stage start.
    Returns the per-epoch records and the validation MAE of the restored
    (best) parameters; the latter is NaN when no validation windows exist.
    """
    if not windows.train:
        raise ConfigError("no training windows")
    params = model.named_parameters()
    optimizer = Adam(params, lr=config.lr)
    n = len(windows.train)

    have_val = bool(windows.val)
    best_val = validation_mae(model, windows.val) if have_val else float("inf")
    best_state = model.snapshot() if have_val else None
    stall = 0
    records: list[EpochRecord] = []

    for epoch in range(config.max_epochs):
        rng = np.random.default_rng([max(config.seed, 0), stage_index, epoch])
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b0 in range(0, n, config.batch_size):
            batch = order[b0 : b0 + config.batch_size]
            optimizer.zero_grad()
            with Tape() as tape:
                total = None
                for idx in batch:
                    inst = windows.train[idx]
                    pred, root_w, _, groups = model.predict_full(inst)
                    item = loss(
                        pred,
                        Tensor(inst.y_target),
                        root_w,
                        config.entropy_weight,
                        config.loss_kind,
                        groups if config.entropy_all_groups else None,
                    )
                    total = item if total is None else tn.add(total, item)
                mean_loss = tn.smul(total, 1.0 / len(batch))
                if not mean_loss.is_finite():
                    norm = float(np.sqrt(sum(float((p.data**2).sum()) for p in params.values())))
                    raise TrainingDiverged(
                        f"non-finite loss in stage {stage_index}, epoch {epoch}, "
                        f"batch starting at {b0} (parameter norm {norm:.3e})"
                    )
                backward(mean_loss, tape)
            clip_gradients(params, config.clip_norm)
            optimizer.step()
            epoch_loss += mean_loss.item() * len(batch)

        val = validation_mae(model, windows.val) if have_val else float("nan")
        records.append(EpochRecord(stage=stage_index, epoch=epoch, train_loss=epoch_loss / n, val_mae=val))
        if progress_cb is not None:
            progress_cb(epoch + 1)
        if have_val:
            if val < best_val:
                best_val = val
                best_state = model.snapshot()
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    break

    if best_state is not None:
        model.restore(best_state)
        return records, best_val
    return records, float("nan")


def _split_seed(seed: int, stage: int, node_id: int) -> int:
    return (max(seed, 0) % (2**31)) * 1_000_003 + stage * 10_007 + node_id * 101


def staged_train(
    model: ForecastModel,
    windows: WindowSet,
    config: TrainConfig,
    progress_cb: Callable[[int], None] | None = None,
) -> TrainReport:
    """Root stage, then per plan entry: select leaves, split, refine.

    Returns a report covering every stage; test metrics are attached when
    test windows are present.
    """
    t0 = time.perf_counter()
    report = TrainReport()
    done = 0

    def cb(epochs_in_stage: int) -> None:
        if progress_cb is not None:
            progress_cb(done + epochs_in_stage)

    records, stage_val = train_stage(model, windows, config, stage_index=0, progress_cb=cb)
    report.epochs.extend(records)
    done = len(report.epochs)
    report.stage_boundaries.append(done)
    report.stage_val_mae.append(stage_val)

    for stage, entry in enumerate(config.stage_plan, start=1):
        if entry.leaf_ids is not None:
            chosen = sorted(entry.leaf_ids)
        else:
            chosen = sorted(splitting_rule(model, windows.train, entry.k, entry.alpha))
        for nid in chosen:
            model.tree = split(model.tree, nid, entry.m, seed=_split_seed(config.seed, stage, nid))
        report.split_events.append(SplitEvent(stage=stage, leaf_ids=chosen, m=entry.m))
        records, stage_val = train_stage(model, windows, config, stage_index=stage, progress_cb=cb)
        report.epochs.extend(records)
        done = len(report.epochs)
        report.stage_boundaries.append(done)
        report.stage_val_mae.append(stage_val)

    if windows.test:
        from .evaluation import evaluate

        report.test_metrics = evaluate(model, windows.test).to_dict()
    report.wall_clock = time.perf_counter() - t0
    return report
