"""Prototype tree: similarity math, alignment, hierarchy algebra, splits,
the splitting rule against a brute-force oracle, and pattern edits."""

from types import SimpleNamespace

import numpy as np
import pytest

from protocast.errors import ContractError
from protocast.prototypes import (
    PrototypeNode,
    PrototypeTree,
    align_pattern,
    child_similarity,
    edit_pattern,
    hierarchical_predict,
    init_tree,
    path_weights,
    root_predict,
    root_similarity,
    split,
    splitting_rule,
)
from protocast.tensor import Tensor

from oracles import (
    hierarchical_predict_dense,
    path_weights_dense,
    softmax_neg_dense,
    splitting_rule_dense,
    tree_arrays,
)


def flat_tree(mus, patterns):
    nodes = {
        i: PrototypeNode(id=i, mu=Tensor(np.asarray(mu, dtype=float)), pattern=Tensor(np.asarray(p, dtype=float)))
        for i, (mu, p) in enumerate(zip(mus, patterns))
    }
    return PrototypeTree(nodes, list(range(len(mus))))


def random_tree(rng, d=4, period=6, rounds=3, max_leaves=30, max_depth=3):
    tree = init_tree(int(rng.integers(2, 5)), d, period, rng)
    for node in tree.nodes.values():
        node.mu.data[...] = rng.normal(size=d)
        node.pattern.data[...] = rng.normal(size=period)
    for _ in range(rounds):
        leaves = tree.leaves()
        if len(leaves) >= max_leaves or tree.depth >= max_depth:
            break
        target = int(rng.choice(leaves))
        tree = split(tree, target, int(rng.integers(2, 4)), seed=int(rng.integers(1_000_000)))
        for cid in tree.nodes[target].children:
            tree.nodes[cid].mu.data[...] = rng.normal(size=d)
            tree.nodes[cid].pattern.data[...] = rng.normal(size=period)
    return tree


# ---------------------------------------------------------------------------
# similarities
# ---------------------------------------------------------------------------

def test_root_similarity_equidistant():
    tree = flat_tree([[1.0, 0.0], [-1.0, 0.0]], [[0.0] * 4] * 2)
    w = root_similarity(Tensor([0.0, 0.0]), tree)
    assert np.allclose(w.data, [0.5, 0.5])


def test_root_similarity_analytic():
    # z at the first root; second root at squared distance ln 3
    tree = flat_tree([[0.0], [np.sqrt(np.log(3.0))]], [[0.0] * 4] * 2)
    w = root_similarity(Tensor([0.0]), tree)
    assert np.allclose(w.data, [0.75, 0.25], atol=1e-12)


def test_root_similarity_matches_brute_force():
    rng = np.random.default_rng(0)
    tree = flat_tree(rng.normal(size=(3, 4)), rng.normal(size=(3, 6)))
    z = rng.normal(size=4)
    d = np.array([np.sum((z - tree.nodes[i].mu.data) ** 2) for i in tree.roots])
    assert np.max(np.abs(root_similarity(Tensor(z), tree).data - softmax_neg_dense(d))) < 1e-12


def test_child_similarity_cases():
    rng = np.random.default_rng(1)
    tree = flat_tree(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)))
    tree = split(tree, 0, 2, seed=0)
    kids = tree.nodes[0].children
    # equal embeddings -> even split
    for cid in kids:
        tree.nodes[cid].mu.data[...] = 1.0
    w = child_similarity(Tensor(np.zeros(3)), tree, 0)
    assert np.allclose(w.data, [0.5, 0.5])
    # one child at z, the other at squared distance 20
    z = np.zeros(3)
    tree.nodes[kids[0]].mu.data[...] = 0.0
    tree.nodes[kids[1]].mu.data[...] = np.array([np.sqrt(20.0), 0.0, 0.0])
    w = child_similarity(Tensor(z), tree, 0).data
    expected = np.array([1.0, np.exp(-20.0)])
    expected /= expected.sum()
    assert np.allclose(w, expected, atol=1e-12)
    with pytest.raises(ContractError):
        child_similarity(Tensor(z), tree, 1)  # leaf has no sibling group


def test_child_similarity_matches_brute_force():
    rng = np.random.default_rng(2)
    tree = flat_tree(rng.normal(size=(2, 4)), rng.normal(size=(2, 5)))
    tree = split(tree, 1, 3, seed=1)
    for cid in tree.nodes[1].children:
        tree.nodes[cid].mu.data[...] = rng.normal(size=4)
    z = rng.normal(size=4)
    d = np.array([np.sum((z - tree.nodes[c].mu.data) ** 2) for c in tree.nodes[1].children])
    assert np.max(np.abs(child_similarity(Tensor(z), tree, 1).data - softmax_neg_dense(d))) < 1e-12


# ---------------------------------------------------------------------------
# alignment and prediction
# ---------------------------------------------------------------------------

def test_align_pattern_examples():
    p = Tensor([1.0, 2.0, 3.0, 4.0])  # a, b, c, d
    assert np.array_equal(align_pattern(p, 2, 3).data, [3.0, 4.0, 1.0])
    assert np.array_equal(align_pattern(p, 0, 4).data, p.data)
    assert np.array_equal(align_pattern(p, 0, 8).data, np.tile(p.data, 2))


def test_root_predict_single_root_is_aligned_pattern():
    tree = flat_tree([[0.0, 0.0]], [[1.0, 2.0, 3.0, 4.0]])
    out = root_predict(Tensor([5.0, -3.0]), tree, phase0=1, horizon=3)
    assert np.allclose(out.data, [2.0, 3.0, 4.0])


def test_root_predict_weighted_combination():
    # weights (0.75, 0.25) via distances (0, ln 3); aligned patterns [1,1] and [-1,3]
    tree = flat_tree([[0.0], [np.sqrt(np.log(3.0))]], [[1.0, 1.0], [-1.0, 3.0]])
    out = root_predict(Tensor([0.0]), tree, phase0=0, horizon=2)
    assert np.allclose(out.data, [0.5, 1.5], atol=1e-12)


def test_root_predict_matches_dense_recomputation():
    rng = np.random.default_rng(3)
    tree = flat_tree(rng.normal(size=(6, 5)), rng.normal(size=(6, 24)))
    z = rng.normal(size=5)
    out = root_predict(Tensor(z), tree, phase0=7, horizon=96)
    arr = tree_arrays(tree)
    dense = hierarchical_predict_dense(arr, z, 7, 96)
    assert np.max(np.abs(out.data - dense)) < 1e-10


def test_hierarchical_equals_root_predict_when_unsplit():
    rng = np.random.default_rng(4)
    tree = flat_tree(rng.normal(size=(4, 3)), rng.normal(size=(4, 8)))
    z = Tensor(rng.normal(size=3))
    a = root_predict(z, tree, 3, 5).data
    b = hierarchical_predict(z, tree, 3, 5).data
    assert np.array_equal(a, b)


def test_hierarchical_telescopes_when_children_share_parent_pattern():
    rng = np.random.default_rng(5)
    tree = flat_tree(rng.normal(size=(3, 4)), rng.normal(size=(3, 6)))
    before = hierarchical_predict(Tensor(rng.normal(size=4)), tree, 2, 6).data
    grown = split(tree, 1, 3, seed=9)  # children copy the parent pattern
    for z_trial in rng.normal(size=(10, 4)):
        pre = hierarchical_predict(Tensor(z_trial), tree, 2, 6).data
        post = hierarchical_predict(Tensor(z_trial), grown, 2, 6).data
        assert np.max(np.abs(pre - post)) < 1e-12
    assert before.shape == (6,)


def test_hierarchical_matches_brute_force_on_ragged_trees():
    rng = np.random.default_rng(6)
    for _ in range(25):
        tree = random_tree(rng)
        arr = tree_arrays(tree)
        z = rng.normal(size=4)
        phase0 = int(rng.integers(0, 6))
        horizon = int(rng.integers(1, 15))
        ours = hierarchical_predict(Tensor(z), tree, phase0, horizon).data
        dense = hierarchical_predict_dense(arr, z, phase0, horizon)
        assert np.max(np.abs(ours - dense)) < 1e-10


def test_path_weight_conservation_and_group_sums():
    rng = np.random.default_rng(7)
    for _ in range(15):
        tree = random_tree(rng, rounds=4)
        z = Tensor(rng.normal(size=4))
        root_w, leaf_w, groups = path_weights(z, tree)
        assert abs(root_w.data.sum() - 1.0) <= 1e-9
        for g in groups:
            assert abs(g.data.sum() - 1.0) <= 1e-9
        total = sum(w.item() for _, w in leaf_w)
        assert abs(total - 1.0) <= 1e-9


def test_prediction_convexity_per_step():
    rng = np.random.default_rng(8)
    for _ in range(10):
        tree = random_tree(rng)
        z = rng.normal(size=4)
        phase0, horizon = int(rng.integers(0, 6)), 9
        pred = hierarchical_predict(Tensor(z), tree, phase0, horizon).data
        arr = tree_arrays(tree)
        leaves = list(path_weights_dense(arr, z))
        aligned = np.stack(
            [arr["pattern"][nid][(phase0 + np.arange(horizon)) % 6] for nid in leaves]
        )
        assert np.all(pred <= aligned.max(axis=0) + 1e-12)
        assert np.all(pred >= aligned.min(axis=0) - 1e-12)


def test_similarity_translation_invariance():
    rng = np.random.default_rng(9)
    tree = random_tree(rng)
    z = rng.normal(size=4)
    shift = rng.normal(size=4)
    _, leaf_before, _ = path_weights(Tensor(z), tree)
    for node in tree.nodes.values():
        node.mu.data += shift
    _, leaf_after, _ = path_weights(Tensor(z + shift), tree)
    for (na, wa), (nb, wb) in zip(leaf_before, leaf_after):
        assert na == nb
        assert abs(wa.item() - wb.item()) < 1e-12


# ---------------------------------------------------------------------------
# split mechanics
# ---------------------------------------------------------------------------

def test_split_is_deterministic_and_continuous():
    rng = np.random.default_rng(10)
    tree = flat_tree(rng.normal(size=(2, 3)), rng.normal(size=(2, 5)))
    a = split(tree, 0, 2, seed=42)
    b = split(tree, 0, 2, seed=42)
    for nid in a.nodes[0].children:
        assert np.array_equal(a.nodes[nid].mu.data, b.nodes[nid].mu.data)
        assert np.array_equal(a.nodes[nid].pattern.data, tree.nodes[0].pattern.data)
    # prediction is continuous across the split (patterns are exact copies)
    z = Tensor(rng.normal(size=3))
    pre = hierarchical_predict(z, tree, 1, 5).data
    post = hierarchical_predict(z, a, 1, 5).data
    assert np.max(np.abs(pre - post)) < 0.02


def test_split_rejects_non_leaf_and_unknown_nodes():
    rng = np.random.default_rng(11)
    tree = flat_tree(rng.normal(size=(2, 3)), rng.normal(size=(2, 5)))
    grown = split(tree, 0, 2, seed=0)
    with pytest.raises(ContractError):
        split(grown, 0, 2, seed=0)
    with pytest.raises(ContractError):
        split(grown, 99, 2, seed=0)


def test_split_does_not_mutate_input_tree():
    rng = np.random.default_rng(12)
    tree = flat_tree(rng.normal(size=(2, 3)), rng.normal(size=(2, 5)))
    split(tree, 0, 3, seed=1)
    assert tree.nodes[0].is_leaf
    assert len(tree.nodes) == 2


# ---------------------------------------------------------------------------
# pattern edits
# ---------------------------------------------------------------------------

def test_edit_pattern_changes_prediction_exactly():
    tree = flat_tree([[0.0, 0.0]], [[0.0] * 4])
    new = [1.0, -2.0, 3.0, 4.0]
    edited = edit_pattern(tree, 0, new, lock=False)
    out = hierarchical_predict(Tensor([9.0, 9.0]), edited, phase0=1, horizon=4)
    assert np.allclose(out.data, [-2.0, 3.0, 4.0, 1.0])


def test_edit_pattern_validation():
    tree = flat_tree([[0.0, 0.0]], [[0.0] * 4])
    with pytest.raises(ContractError):
        edit_pattern(tree, 0, [1.0, 2.0], lock=False)
    with pytest.raises(ContractError):
        edit_pattern(tree, 0, [np.nan] * 4, lock=False)
    with pytest.raises(ContractError):
        edit_pattern(tree, 5, [0.0] * 4, lock=False)


def test_edit_pattern_lock_masks_gradient():
    tree = flat_tree([[0.0, 0.0]], [[0.0] * 4])
    locked = edit_pattern(tree, 0, [1.0, 2.0, 3.0, 4.0], lock=True)
    assert locked.nodes[0].pattern_locked
    assert not locked.nodes[0].pattern.requires_grad
    assert "proto.0.pattern" not in locked.named_parameters()
    unlocked = edit_pattern(locked, 0, [1.0, 2.0, 3.0, 4.0], lock=False)
    assert unlocked.nodes[0].pattern.requires_grad


# ---------------------------------------------------------------------------
# splitting rule
# ---------------------------------------------------------------------------

class CannedModel:
    """Model stub feeding preset predictions and leaf scores to the rule."""

    def __init__(self, tree, preds, scores):
        self.tree = tree
        self.preds = preds
        self.scores = scores

    def predict(self, inst):
        leaf_w = [(nid, Tensor(np.array(v))) for nid, v in self.scores[inst.index].items()]
        return Tensor(self.preds[inst.index]), None, leaf_w


def canned_setup(leaf_patterns, assignments, losses):
    """Two-leaf hand-trace helper: assignments pick the top-scoring leaf."""
    tree = flat_tree([[float(i)] for i in range(len(leaf_patterns))], leaf_patterns)
    preds, scores, windows = [], [], []
    for i, (leaf, loss_value) in enumerate(zip(assignments, losses)):
        preds.append(np.array([loss_value]))  # |pred - 0| == loss
        scores.append({nid: (0.9 if nid == leaf else 0.1 / (len(leaf_patterns) - 1)) for nid in tree.roots})
        windows.append(SimpleNamespace(index=i, y_target=np.array([0.0])))
    return CannedModel(tree, preds, scores), windows


def test_splitting_rule_hand_trace():
    model, windows = canned_setup([[0.0]] * 2, assignments=[0, 0, 1], losses=[1.0, 2.0, 3.0])
    # NormLoss: leaf0 = 1.5, leaf1 = 3.0; alpha=50% of 2 leaves -> top 1
    assert splitting_rule(model, windows, k=1, alpha=50.0) == {1}


def test_splitting_rule_never_selects_inactive_leaf():
    model, windows = canned_setup([[0.0]] * 3, assignments=[0, 1, 0], losses=[1.0, 2.0, 1.0])
    # leaf 2 is never in any top-1: NormLoss 0 -> excluded at alpha=50 (top 2 of 3)
    chosen = splitting_rule(model, windows, k=1, alpha=50.0)
    assert 2 not in chosen


def test_splitting_rule_k_equals_leaf_count():
    model, windows = canned_setup([[0.0]] * 3, assignments=[0, 1, 2], losses=[1.0, 1.0, 1.0])
    chosen = splitting_rule(model, windows, k=3, alpha=100.0)
    assert chosen == {0, 1, 2}  # all counts equal the instance count; all selected


def test_splitting_rule_contract_errors():
    model, windows = canned_setup([[0.0]] * 2, assignments=[0, 1], losses=[1.0, 2.0])
    with pytest.raises(ContractError):
        splitting_rule(model, windows, k=0, alpha=50.0)
    with pytest.raises(ContractError):
        splitting_rule(model, windows, k=1, alpha=0.0)


def test_splitting_rule_matches_brute_force_on_randomized_instances():
    rng = np.random.default_rng(13)
    for trial in range(200):
        n_leaves = int(rng.integers(1, 6))
        n_windows = int(rng.integers(1, 21))
        k = int(rng.choice([1, 2, 3]))
        alpha = float(rng.choice([20.0, 50.0, 100.0]))
        k = min(k, n_leaves)

        tree = flat_tree([[float(i)] for i in range(n_leaves)], [[0.0]] * n_leaves)
        preds, scores, windows, losses, score_dicts = [], [], [], [], []
        for i in range(n_windows):
            pred = rng.normal(size=3)
            target = rng.normal(size=3)
            raw = rng.random(size=n_leaves)
            if rng.random() < 0.3:  # force similarity ties to exercise tie-breaking
                raw = np.round(raw, 1)
            sdict = {nid: float(raw[nid]) for nid in range(n_leaves)}
            preds.append(pred)
            scores.append(sdict)
            windows.append(SimpleNamespace(index=i, y_target=target))
            losses.append(float(np.abs(pred - target).mean()))
            score_dicts.append(sdict)

        model = CannedModel(tree, preds, scores)
        ours = splitting_rule(model, windows, k=k, alpha=alpha)
        reference = splitting_rule_dense(list(range(n_leaves)), losses, score_dicts, k, alpha)
        assert ours == reference, f"trial {trial}: {ours} != {reference}"
