"""Independent reference implementations used to check the library.

Everything here is straight-line numpy with no tape, written separately from
the code under test so the two sides can disagree.
"""

from __future__ import annotations

import numpy as np

from protocast import no_grad
from protocast.tensor import Tensor


def central_diff_gradients(loss_fn, params: dict[str, Tensor], step: float = 1e-5) -> dict[str, np.ndarray]:
    """Numerical gradient of ``loss_fn()`` (a pure float recomputation) per parameter."""
    grads = {}
    with no_grad():
        for name, p in params.items():
            g = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn()
                flat[i] = orig - step
                down = loss_fn()
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * step)
            grads[name] = g
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max |a - n| / max(|a|, |n|, floor); the floor turns tiny-gradient noise
    into an absolute comparison instead of a blow-up."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def softmax_neg_dense(d: np.ndarray) -> np.ndarray:
    e = np.exp(-np.asarray(d, dtype=np.float64))
    return e / e.sum()


def aligned_dense(pattern: np.ndarray, phase0: int, horizon: int) -> np.ndarray:
    period = len(pattern)
    return np.array([pattern[(phase0 + t) % period] for t in range(horizon)])


def tree_arrays(tree) -> dict:
    """Detach a prototype tree into plain numpy structures."""
    return {
        "roots": list(tree.roots),
        "children": {nid: list(n.children) for nid, n in tree.nodes.items()},
        "mu": {nid: n.mu.data.copy() for nid, n in tree.nodes.items()},
        "pattern": {nid: n.pattern.data.copy() for nid, n in tree.nodes.items()},
    }


def path_weights_dense(arr: dict, z: np.ndarray) -> dict[int, float]:
    """Leaf path weights by explicit root-to-leaf enumeration."""
    out: dict[int, float] = {}

    def group_softmax(ids):
        d = np.array([np.sum((z - arr["mu"][i]) ** 2) for i in ids])
        return softmax_neg_dense(d)

    def walk(nid, weight):
        kids = arr["children"][nid]
        if not kids:
            out[nid] = weight
            return
        w = group_softmax(kids)
        for j, c in enumerate(kids):
            walk(c, weight * w[j])

    root_w = group_softmax(arr["roots"])
    for i, r in enumerate(arr["roots"]):
        walk(r, float(root_w[i]))
    return out


def hierarchical_predict_dense(arr: dict, z: np.ndarray, phase0: int, horizon: int) -> np.ndarray:
    weights = path_weights_dense(arr, z)
    pred = np.zeros(horizon)
    for nid, w in weights.items():
        pred += w * aligned_dense(arr["pattern"][nid], phase0, horizon)
    return pred


def fuse_dense(z: np.ndarray, blocks: list[dict]) -> np.ndarray:
    """Mixer stack on raw arrays; ``blocks`` holds w1/b1/w2/b2 pairs per axis."""
    out = np.asarray(z, dtype=np.float64)
    for blk in blocks:
        a = np.maximum(out @ blk["fw1"] + blk["fb1"], 0.0) @ blk["fw2"] + blk["fb2"]
        at = a.T
        b = np.maximum(at @ blk["tw1"] + blk["tb1"], 0.0) @ blk["tw2"] + blk["tb2"]
        out = b.T
    return out


def splitting_rule_dense(
    leaf_ids: list[int],
    instance_losses: list[float],
    instance_scores: list[dict[int, float]],
    k: int,
    alpha: float,
) -> set[int]:
    """Loss-attribution rule from precomputed per-instance losses and leaf scores."""
    loss = {nid: 0.0 for nid in leaf_ids}
    count = {nid: 0 for nid in leaf_ids}
    for inst_loss, scores in zip(instance_losses, instance_scores):
        ranked = sorted(leaf_ids, key=lambda nid: (-scores[nid], nid))
        for nid in ranked[:k]:
            loss[nid] += inst_loss
            count[nid] += 1
    norm = {nid: (loss[nid] / count[nid]) if count[nid] else 0.0 for nid in leaf_ids}
    n_sel = max(1, int(np.ceil(len(leaf_ids) * alpha / 100.0)))
    cutoff = sorted(norm.values(), reverse=True)[n_sel - 1]
    return {nid for nid in leaf_ids if norm[nid] >= cutoff}
