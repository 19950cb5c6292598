#!/usr/bin/env python3
"""Read a trained checkpoint and take its explanations apart.

Every forecast is exactly a weighted sum of aligned prototype patterns, so
the explanation is the model, not a story about it. Run 03 first to produce
the checkpoint.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from protocast.checkpoint import load_model
from protocast.data import SynthConfig, make_windows, synth_generate
from protocast.evaluation import activation_report, explain

here = Path(__file__).parent
ckpt = here / "03_checkpoint.bin"
if not ckpt.exists():
    raise SystemExit("run demos/03_train_and_refine.py first")

model = load_model(ckpt)
config = SynthConfig(regimes=4, period=24, n_periods=200, noise=0.1,
                     lookback=24, horizon=12, regime_block=3)
bundle, schema, labels = synth_generate(config, seed=11)
normalized = model.normalizer.apply(bundle)
test_windows = make_windows(normalized, schema, stride=1, split="test")

instance = test_windows[40]
out = explain(model, instance)
print(f"instance at row {out.instance_index}, phase {instance.phase0}")
print(f"{'leaf':>6} {'weight':>9}   contribution curve (first 4 steps)")
for leaf_id, weight, curve in out.contributions:
    head = ", ".join(f"{v:+.3f}" for v in curve[:4])
    print(f"{leaf_id:>6} {weight:>9.5f}   [{head}, ...]")
print(f"residual max abs: {max(abs(v) for v in out.residual):.2e}  (decomposition is exact)")

fig, axes = plt.subplots(1, 2, figsize=(12, 4))
axes[0].plot(instance.y_target, "k-", lw=2, label="target")
axes[0].plot(out.prediction, "C3--", lw=2, label="forecast")
for leaf_id, weight, curve in out.contributions[:3]:
    axes[0].plot(curve, alpha=0.6, label=f"leaf {leaf_id} (w={weight:.2f})")
axes[0].set_title("forecast = sum of weighted aligned patterns")
axes[0].legend(fontsize=8)

# Activation timeline: which prototype carries each test instance.
timeline = activation_report(model, test_windows, k=len(model.tree.leaves()))
leaves = model.tree.leaves()
stack = np.array([[dict(e.leaves).get(l, 0.0) for l in leaves] for e in timeline.entries])
bottom = np.zeros(len(stack))
for j, leaf in enumerate(leaves):
    axes[1].bar(range(len(stack)), stack[:, j], bottom=bottom, width=1.0, label=f"leaf {leaf}")
    bottom += stack[:, j]
axes[1].set_title("activation weights across the test timeline (sum to 1)")
axes[1].set_xlim(0, min(len(stack), 300))
axes[1].legend(fontsize=7, ncol=2)
fig.tight_layout()
png = here / "04_explanations.png"
fig.savefig(png, dpi=110)
print(f"wrote {png}")
