"""Full forecasting model: encoder, prototype tree, normalizer, and config."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import prototypes as proto
from . import tensor as tn
from .data import Normalizer, VariableSchema, WindowInstance
from .encoder import EncoderDims, EncoderParams
from .errors import ConfigError
from .prototypes import PrototypeTree
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; ablations are flags so variants share one code path.

    ``single_channel`` replaces the per-variable channels with one shared
    perceptron over concatenated raw values; ``no_bottleneck`` keeps the
    mixer but removes the compression (full-width hidden layers).
    """

    d: int = 32
    d_bottle: int = 8
    n_blocks: int = 1
    t_bottle: int | None = None
    n_roots: int = 4
    single_channel: bool = False
    no_bottleneck: bool = False

    def __post_init__(self):
        if self.n_roots < 1:
            raise ConfigError(f"need n_roots >= 1, got {self.n_roots}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class ForecastModel:
    """Owns the parameters; prediction composes encode -> path weights -> patterns."""

    def __init__(
        self,
        schema: VariableSchema,
        config: ModelConfig,
        encoder: EncoderParams,
        tree: PrototypeTree,
        normalizer: Normalizer | None = None,
    ):
        self.schema = schema
        self.config = config
        self.encoder = encoder
        self.tree = tree
        self.normalizer = normalizer

    def encode(self, instance: WindowInstance) -> Tensor:
        return enc.encode(instance, self.encoder, self.schema)

    def predict(self, instance: WindowInstance) -> tuple[Tensor, Tensor, list[tuple[int, Tensor]]]:
        """Forecast one window: (prediction[H], root weights[N], leaf path weights)."""
        pred, root_w, leaf_w, _ = self.predict_full(instance)
        return pred, root_w, leaf_w

    def predict_full(
        self, instance: WindowInstance
    ) -> tuple[Tensor, Tensor, list[tuple[int, Tensor]], list[Tensor]]:
        """As :meth:`predict`, also returning the sibling-group weight vectors."""
        z = self.encode(instance)
        root_w, leaf_w, groups = proto.path_weights(z, self.tree)
        pred = None
        for nid, w in leaf_w:
            aligned = proto.align_pattern(self.tree.nodes[nid].pattern, instance.phase0, instance.horizon)
            term = tn.scale(aligned, w)
            pred = term if pred is None else tn.add(pred, term)
        return pred, root_w, leaf_w, groups

    def named_parameters(self) -> dict[str, Tensor]:
        out = self.encoder.named_parameters()
        out.update(self.tree.named_parameters())
        return out

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def restore(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for name, saved in state.items():
            params[name].data[...] = saved

    def clone(self) -> "ForecastModel":
        return ForecastModel(
            self.schema, self.config, _clone_encoder(self.encoder), self.tree.clone(), self.normalizer
        )


def _clone_mlp(m: enc.Mlp) -> enc.Mlp:
    return enc.Mlp(m.w1.detached_copy(), m.b1.detached_copy(), m.w2.detached_copy(), m.b2.detached_copy())


def _clone_encoder(p: EncoderParams) -> EncoderParams:
    return EncoderParams(
        dims=p.dims,
        gamma=_clone_mlp(p.gamma),
        tables={k: v.detached_copy() for k, v in p.tables.items()},
        psi={k: _clone_mlp(v) for k, v in p.psi.items()},
        blocks=[
            enc.FusionBlock(_clone_mlp(b.mlp_feature), _clone_mlp(b.mlp_time)) for b in p.blocks
        ],
        w_agg=p.w_agg.detached_copy(),
        single=_clone_mlp(p.single) if p.single is not None else None,
    )


def build_model(
    schema: VariableSchema,
    config: ModelConfig,
    seed: int,
    normalizer: Normalizer | None = None,
) -> ForecastModel:
    """Deterministically initialize a fresh model from (schema, config, seed)."""
    rng = np.random.default_rng(seed)
    span = schema.lookback_L + schema.horizon_H
    if config.no_bottleneck:
        dims = EncoderDims(d=config.d, d_bottle=config.d, t_bottle=span, n_blocks=config.n_blocks, compressed=False)
    else:
        dims = EncoderDims(
            d=config.d,
            d_bottle=config.d_bottle,
            t_bottle=config.t_bottle if config.t_bottle is not None else enc.default_t_bottle(span),
            n_blocks=config.n_blocks,
        )
    encoder = enc.init_encoder(schema, dims, rng, single_channel=config.single_channel)
    tree = proto.init_tree(config.n_roots, config.d, schema.period_T, rng)
    return ForecastModel(schema, config, encoder, tree, normalizer)


def _kmeans(z: np.ndarray, k: int, rng: np.random.Generator, iters: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd iterations with a greedy spread start; empty clusters are
    reseeded at the point farthest from its current center."""
    centers = z[[int(rng.integers(len(z)))]]
    while len(centers) < k:
        d2 = np.min(((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
        centers = np.vstack([centers, z[int(np.argmax(d2))]])
    for _ in range(iters):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        for j in range(k):
            members = z[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                worst = int(np.argmax(d2[np.arange(len(z)), assign]))
                centers[j] = z[worst]
    d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return centers, np.argmin(d2, axis=1)


def seed_prototypes_from_data(model: ForecastModel, windows, seed: int, sample: int = 256) -> None:
    """Data-driven start for a fresh tree: k-means centers of encoded windows
    become the root embeddings, and each root's pattern starts at the
    per-phase mean of the targets assigned to it (global phase mean where a
    cluster has no data).

    Cold random prototypes invite collapse: the entropy term hardens weights
    before the encoder separates regimes, and spread-only seeding lands on
    outliers when covariates are noisy. Call this once before training a
    fresh model; locked patterns are left alone.
    """
    if not windows:
        return
    rng = np.random.default_rng(seed)
    T = model.schema.period_T
    pick = rng.choice(len(windows), size=min(sample, len(windows)), replace=False)
    chosen_windows = [windows[i] for i in pick]
    with tn.no_grad():
        z = np.stack([model.encode(w).data for w in chosen_windows])

    roots = model.tree.roots
    centers, assign = _kmeans(z, len(roots), rng)

    phase_sum = np.zeros((len(roots), T))
    phase_count = np.zeros((len(roots), T))
    global_sum = np.zeros(T)
    global_count = np.zeros(T)
    for w, cluster in zip(chosen_windows, assign):
        phases = (w.phase0 + np.arange(w.horizon)) % T
        np.add.at(phase_sum[cluster], phases, w.y_target)
        np.add.at(phase_count[cluster], phases, 1.0)
        np.add.at(global_sum, phases, w.y_target)
        np.add.at(global_count, phases, 1.0)
    global_mean = np.where(global_count > 0, global_sum / np.maximum(global_count, 1), 0.0)

    for i, rid in enumerate(roots):
        node = model.tree.nodes[rid]
        node.mu.data[...] = centers[i]
        if node.pattern_locked:
            continue
        mean = np.where(phase_count[i] > 0, phase_sum[i] / np.maximum(phase_count[i], 1), global_mean)
        node.pattern.data[...] = mean
