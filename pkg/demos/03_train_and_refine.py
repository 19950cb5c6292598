#!/usr/bin/env python3
"""Train the full model on planted data: root stage, rule-driven split, refine.

Prints the stage-by-stage story, compares against the seasonal-naive
baseline, scores leaf/regime purity against the generator's labels, and
writes a checkpoint that the other demos reuse.
"""

import time
from pathlib import Path

import numpy as np

from protocast.checkpoint import save_model
from protocast.data import Normalizer, SynthConfig, make_windows, synth_generate
from protocast.evaluation import (
    activation_report,
    evaluate,
    leaf_regime_purity,
    metrics_from_arrays,
    seasonal_naive_predictions,
    windows_majority_regime,
)
from protocast.model import ModelConfig, build_model, seed_prototypes_from_data
from protocast.trainer import StagePlanEntry, TrainConfig, WindowSet, staged_train

here = Path(__file__).parent
t0 = time.perf_counter()

config = SynthConfig(regimes=4, period=24, n_periods=200, noise=0.1,
                     lookback=24, horizon=12, regime_block=3)
bundle, schema, labels = synth_generate(config, seed=11)
normalizer = Normalizer.fit(bundle, schema)
normalized = normalizer.apply(bundle)
windows = WindowSet(
    train=make_windows(normalized, schema, stride=2, split="train"),
    val=make_windows(normalized, schema, stride=2, split="val"),
    test=make_windows(normalized, schema, stride=1, split="test"),
)
print(f"windows: {len(windows.train)} train / {len(windows.val)} val / {len(windows.test)} test")

model = build_model(schema, ModelConfig(d=16, d_bottle=4, n_blocks=1, n_roots=4),
                    seed=11, normalizer=normalizer)
seed_prototypes_from_data(model, windows.train, seed=11)

train_config = TrainConfig(
    lr=0.01, max_epochs=20, patience=6, batch_size=32, entropy_weight=0.01, seed=11,
    stage_plan=(StagePlanEntry(m=2, k=1, alpha=50.0),),
)
report = staged_train(model, windows, train_config)

for boundary, val in zip(report.stage_boundaries, report.stage_val_mae):
    stage = report.stage_boundaries.index(boundary)
    print(f"stage {stage}: {boundary} cumulative epochs, val MAE {val:.4f}")
for event in report.split_events:
    print(f"split round {event.stage}: refined leaves {event.leaf_ids} into {event.m} children each")
print(f"tree now has {len(model.tree.leaves())} leaves at depth {model.tree.depth}")

metrics = evaluate(model, windows.test)
naive = metrics_from_arrays(
    seasonal_naive_predictions(normalized, schema, windows.test),
    np.stack([w.y_target for w in windows.test]),
)
print(f"\ntest MAE  {metrics.mae:.4f}   (seasonal-naive {naive.mae:.4f}, "
      f"{100 * (1 - metrics.mae / naive.mae):.0f}% better)")
print(f"test MSE  {metrics.mse:.4f}   (seasonal-naive {naive.mse:.4f})")

timeline = activation_report(model, windows.test, k=1)
purity = leaf_regime_purity(timeline, windows_majority_regime(windows.test, labels))
print(f"leaf-to-regime purity {purity:.3f}")

out = here / "03_checkpoint.bin"
save_model(model, out, train_config=train_config.to_dict(), seed_lineage=[11])
print(f"\nwrote {out}  ({time.perf_counter() - t0:.0f}s total)")
