"""Prototype tree: similarities, phase-aligned predictions, splits, the
loss-attribution splitting rule, and expert pattern edits.

Each prototype pairs an embedding ``mu`` (matched against the query vector
by squared Euclidean distance, the Gaussian-mixture reading of "Euclidean")
with a period-length temporal pattern in normalized units of the endogenous
variable. Roots form the coarse level; any leaf can be split further, and a
leaf's weight is the product of group-softmax weights along its root-to-leaf
path. Summed over leaves those path weights always total 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import ContractError
from .tensor import Tensor


@dataclass
class PrototypeNode:
    id: int
    mu: Tensor
    pattern: Tensor
    children: list[int] = field(default_factory=list)
    label: str | None = None
    pattern_locked: bool = False

    @property
    def is_leaf(self) -> bool:
        return not self.children


class PrototypeTree:
    """Nodes by id plus an ordered root list; every non-root has one parent."""

    def __init__(self, nodes: dict[int, PrototypeNode], roots: list[int]):
        self.nodes = nodes
        self.roots = list(roots)
        self._validate()

    def _validate(self) -> None:
        if not self.roots:
            raise ContractError("tree needs at least one root")
        seen: set[int] = set()
        parent: dict[int, int] = {}
        stack = list(self.roots)
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise ContractError(f"node {nid} reachable twice (cycle or shared child)")
            seen.add(nid)
            node = self.nodes.get(nid)
            if node is None:
                raise ContractError(f"dangling child id {nid}")
            if len(node.children) == 1:
                raise ContractError(f"node {nid} has a single child; splits produce >= 2")
            for c in node.children:
                parent[c] = nid
                stack.append(c)
        if seen != set(self.nodes):
            raise ContractError("tree contains unreachable nodes")
        lengths = {self.nodes[n].pattern.data.shape for n in self.nodes}
        if len(lengths) > 1:
            raise ContractError(f"patterns disagree on period length: {lengths}")

    @property
    def period(self) -> int:
        return self.nodes[self.roots[0]].pattern.data.shape[0]

    @property
    def depth(self) -> int:
        def dive(nid: int) -> int:
            node = self.nodes[nid]
            return 1 if node.is_leaf else 1 + max(dive(c) for c in node.children)

        return max(dive(r) for r in self.roots)

    def leaves(self) -> list[int]:
        """Leaf ids in depth-first order following root and child order."""
        out: list[int] = []

        def dive(nid: int) -> None:
            node = self.nodes[nid]
            if node.is_leaf:
                out.append(nid)
            else:
                for c in node.children:
                    dive(c)

        for r in self.roots:
            dive(r)
        return out

    def next_id(self) -> int:
        return max(self.nodes) + 1

    def clone(self) -> "PrototypeTree":
        nodes = {
            nid: PrototypeNode(
                id=nid,
                mu=n.mu.detached_copy(),
                pattern=n.pattern.detached_copy(),
                children=list(n.children),
                label=n.label,
                pattern_locked=n.pattern_locked,
            )
            for nid, n in self.nodes.items()
        }
        return PrototypeTree(nodes, list(self.roots))

    def named_parameters(self) -> dict[str, Tensor]:
        """Trainable tensors: every mu, plus unlocked leaf patterns.

        Internal-node patterns no longer enter any prediction, so they are
        kept for display but excluded from optimization.
        """
        out: dict[str, Tensor] = {}
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            out[f"proto.{nid}.mu"] = node.mu
            if node.is_leaf and not node.pattern_locked:
                out[f"proto.{nid}.pattern"] = node.pattern
        return out


def init_tree(n_roots: int, d: int, period: int, rng: np.random.Generator) -> PrototypeTree:
    """Fresh flat tree: mu ~ Normal(0, 0.1), patterns start at zero."""
    nodes = {
        i: PrototypeNode(
            id=i,
            mu=Tensor(rng.normal(0.0, 0.1, size=d), requires_grad=True),
            pattern=Tensor(np.zeros(period), requires_grad=True),
        )
        for i in range(n_roots)
    }
    return PrototypeTree(nodes, list(range(n_roots)))


# ---------------------------------------------------------------------------
# similarities and predictions
# ---------------------------------------------------------------------------

def root_similarity(z: Tensor, tree: PrototypeTree) -> Tensor:
    """Softmax over negated squared distances to every root embedding."""
    mus = [tree.nodes[r].mu for r in tree.roots]
    return tn.softmax_neg(tn.sqdist_to(z, mus))


def child_similarity(z: Tensor, tree: PrototypeTree, parent_id: int) -> Tensor:
    """Group softmax restricted to one sibling set; sums to 1 on its own."""
    parent = tree.nodes[parent_id]
    if parent.is_leaf:
        raise ContractError(f"node {parent_id} is a leaf; it has no sibling group")
    mus = [tree.nodes[c].mu for c in parent.children]
    return tn.softmax_neg(tn.sqdist_to(z, mus))


def align_pattern(p: Tensor, phase0: int, horizon: int) -> Tensor:
    """Slice a period-T pattern onto the forecast window: out[t] = p[(phase0+t) mod T]."""
    period = p.data.shape[0]
    if not 0 <= phase0 < period:
        raise ContractError(f"phase0 must be in [0, {period}), got {phase0}")
    idx = (phase0 + np.arange(horizon)) % period
    return tn.take(p, idx)


def root_predict(z: Tensor, tree: PrototypeTree, phase0: int, horizon: int) -> Tensor:
    """Stage-1 forecast: root weights times phase-aligned root patterns."""
    weights = root_similarity(z, tree)
    pred = None
    for i, r in enumerate(tree.roots):
        term = tn.scale(align_pattern(tree.nodes[r].pattern, phase0, horizon), tn.take(weights, i))
        pred = term if pred is None else tn.add(pred, term)
    return pred


def path_weights(
    z: Tensor, tree: PrototypeTree
) -> tuple[Tensor, list[tuple[int, Tensor]], list[Tensor]]:
    """Root weight vector, (leaf id, path weight) pairs in leaf order, and
    every sibling-group weight vector below the roots.

    The path weight of a leaf is the product of the group-softmax weights
    along its root-to-leaf path, which generalizes the two-level prediction
    to ragged trees of any depth.
    """
    root_w = root_similarity(z, tree)
    leaf_w: list[tuple[int, Tensor]] = []
    groups: list[Tensor] = []

    def dive(nid: int, weight: Tensor) -> None:
        node = tree.nodes[nid]
        if node.is_leaf:
            leaf_w.append((nid, weight))
            return
        group = child_similarity(z, tree, nid)
        groups.append(group)
        for j, c in enumerate(node.children):
            dive(c, tn.mul(weight, tn.take(group, j)))

    for i, r in enumerate(tree.roots):
        dive(r, tn.take(root_w, i))
    return root_w, leaf_w, groups


def hierarchical_predict(z: Tensor, tree: PrototypeTree, phase0: int, horizon: int) -> Tensor:
    """Forecast over a possibly ragged tree: sum of path-weighted leaf patterns."""
    _, leaf_w, _ = path_weights(z, tree)
    pred = None
    for nid, w in leaf_w:
        term = tn.scale(align_pattern(tree.nodes[nid].pattern, phase0, horizon), w)
        pred = term if pred is None else tn.add(pred, term)
    return pred


# ---------------------------------------------------------------------------
# mutations
# ---------------------------------------------------------------------------

def split(tree: PrototypeTree, node_id: int, m: int, seed: int, jitter: float = 0.01) -> PrototypeTree:
    """Split a leaf into m children on a fresh tree snapshot.

    Children copy the parent's pattern exactly and jitter its embedding with
    Normal(0, jitter) noise, so the post-split prediction is continuous with
    the pre-split one. The parent's pattern stops receiving gradient.
    """
    if m < 2:
        raise ContractError(f"split needs m >= 2, got {m}")
    if node_id not in tree.nodes:
        raise ContractError(f"no node {node_id}")
    if not tree.nodes[node_id].is_leaf:
        raise ContractError(f"node {node_id} already has children")

    out = tree.clone()
    parent = out.nodes[node_id]
    rng = np.random.default_rng(seed)
    d = parent.mu.data.shape[0]
    for _ in range(m):
        cid = out.next_id()
        out.nodes[cid] = PrototypeNode(
            id=cid,
            mu=Tensor(parent.mu.data + rng.normal(0.0, jitter, size=d), requires_grad=True),
            pattern=Tensor(parent.pattern.data.copy(), requires_grad=True),
        )
        parent.children.append(cid)
    parent.pattern.requires_grad = False
    out._validate()
    return out


def edit_pattern(tree: PrototypeTree, node_id: int, new_pattern, lock: bool) -> PrototypeTree:
    """Replace a node's pattern on a fresh snapshot; ``lock`` freezes it against training."""
    if node_id not in tree.nodes:
        raise ContractError(f"no node {node_id}")
    values = np.asarray(new_pattern, dtype=np.float64)
    if values.shape != (tree.period,):
        raise ContractError(f"pattern must have length {tree.period}, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ContractError("pattern values must be finite")
    out = tree.clone()
    node = out.nodes[node_id]
    node.pattern = Tensor(values.copy(), requires_grad=not lock and node.is_leaf)
    node.pattern_locked = lock
    return out


# ---------------------------------------------------------------------------
# splitting rule
# ---------------------------------------------------------------------------

def top_alpha_count(n: int, alpha: float) -> int:
    """Number of leaves in the top alpha percent (at least 1)."""
    return max(1, int(np.ceil(n * alpha / 100.0)))


def splitting_rule(model, windows, k: int, alpha: float) -> set[int]:
    """Loss-attribution rule for choosing which leaves to refine.

    Per instance: absolute-error (MAE) loss is attributed to its k most
    similar leaves by path weight; each leaf's attributed loss is normalized
    by its attribution count (0 if never attributed); leaves in the top
    alpha percent of normalized loss are returned. Similarity ties break by
    ascending node id, and ties at the alpha cutoff are all included.
    """
    leaves = model.tree.leaves()
    if not leaves:
        raise ContractError("tree has no leaves")
    if k < 1 or not 0 < alpha <= 100:
        raise ContractError(f"need k >= 1 and 0 < alpha <= 100, got k={k}, alpha={alpha}")

    loss_sum = {nid: 0.0 for nid in leaves}
    count = {nid: 0 for nid in leaves}
    with tn.no_grad():
        for inst in windows:
            pred, _, leaf_w = model.predict(inst)
            inst_loss = float(np.abs(pred.data - inst.y_target).mean())
            scored = sorted(leaf_w, key=lambda item: (-item[1].item(), item[0]))
            for nid, _ in scored[:k]:
                loss_sum[nid] += inst_loss
                count[nid] += 1

    norm_loss = {nid: (loss_sum[nid] / count[nid] if count[nid] > 0 else 0.0) for nid in leaves}
    n_select = top_alpha_count(len(leaves), alpha)
    threshold = sorted(norm_loss.values(), reverse=True)[n_select - 1]
    return {nid for nid in leaves if norm_loss[nid] >= threshold}
