"""Multi-channel embedding, bottleneck mixer fusion, and temporal aggregation.

Turns one window instance into a query vector of width d: per-step channel
embeddings are summed (endogenous values only inside the look-back), the
stacked (L+H, d) matrix is passed through bottleneck mixer blocks that
alternate feature-axis and time-axis perceptrons, and a learned (L+H, 1)
projection collapses the time axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .data import VariableSchema, WindowInstance
from .errors import ConfigError
from .tensor import Tensor

UNK_ROW = 0  # row 0 of every embedding table is reserved for unseen categories


@dataclass
class Mlp:
    """Two-layer perceptron, ReLU between the layers, applied row-wise."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def apply_rows(self, x: Tensor) -> Tensor:
        h = tn.relu(tn.add_rowvec(tn.matmul(x, self.w1), self.b1))
        return tn.add_rowvec(tn.matmul(h, self.w2), self.b2)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1, f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}


@dataclass
class FusionBlock:
    """One mixer block: feature-axis bottleneck MLP, then time-axis bottleneck MLP.

    No skip connection and no normalization: a block with all-zero weights
    yields an all-zero output, not the identity.
    """

    mlp_feature: Mlp  # d -> d_bottle -> d
    mlp_time: Mlp     # (L+H) -> t_bottle -> (L+H)

    def apply(self, z: Tensor) -> Tensor:
        a = self.mlp_feature.apply_rows(z)
        return tn.transpose(self.mlp_time.apply_rows(tn.transpose(a)))

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = self.mlp_feature.named(f"{prefix}.feature")
        out.update(self.mlp_time.named(f"{prefix}.time"))
        return out


@dataclass(frozen=True)
class EncoderDims:
    d: int
    d_bottle: int
    t_bottle: int
    n_blocks: int
    compressed: bool = True  # False only for the no-bottleneck ablation (full-width mixer)

    def __post_init__(self):
        if self.compressed and self.n_blocks > 0 and not self.d_bottle < self.d:
            raise ConfigError(f"d_bottle must be < d, got {self.d_bottle} >= {self.d}")
        if self.d < 1 or (self.n_blocks > 0 and (self.d_bottle < 1 or self.t_bottle < 1)):
            raise ConfigError("encoder widths must be positive")


@dataclass
class EncoderParams:
    """All learnable encoder state.

    ``tables[name]`` has vocab_size+1 rows; row 0 is the UNK row, so stored
    codes are shifted by one. ``single`` replaces the per-channel paths when
    the single-channel ablation is active.
    """

    dims: EncoderDims
    gamma: Mlp
    tables: dict[str, Tensor]
    psi: dict[str, Mlp]
    blocks: list[FusionBlock]
    w_agg: Tensor
    single: Mlp | None = None

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.single is not None:
            out.update(self.single.named("encoder.single"))
        else:
            out.update(self.gamma.named("encoder.gamma"))
            for name, table in self.tables.items():
                out[f"encoder.table.{name}"] = table
            for name, mlp in self.psi.items():
                out.update(mlp.named(f"encoder.psi.{name}"))
        for i, block in enumerate(self.blocks):
            out.update(block.named(f"encoder.block{i}"))
        out["encoder.w_agg"] = self.w_agg
        return out


def default_t_bottle(span: int) -> int:
    return max(4, span // 8)


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    bound = 1.0 / np.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True)
    return w, b


def _init_mlp(rng: np.random.Generator, n_in: int, n_hidden: int, n_out: int) -> Mlp:
    w1, b1 = _init_linear(rng, n_in, n_hidden)
    w2, b2 = _init_linear(rng, n_hidden, n_out)
    return Mlp(w1, b1, w2, b2)


def init_encoder(
    schema: VariableSchema,
    dims: EncoderDims,
    rng: np.random.Generator,
    single_channel: bool = False,
) -> EncoderParams:
    """Fresh parameters: uniform(-1/sqrt(fan_in), ..) matrices, zero biases,
    Normal(0, 0.02) embedding tables."""
    d = dims.d
    span = schema.lookback_L + schema.horizon_H
    gamma = _init_mlp(rng, 1, d, d)
    tables = {
        name: Tensor(rng.normal(0.0, 0.02, size=(vocab + 1, d)), requires_grad=True)
        for name, vocab in schema.discrete_vars
    }
    psi = {name: _init_mlp(rng, 1, d, d) for name in schema.continuous_vars}
    blocks = [
        FusionBlock(
            mlp_feature=_init_mlp(rng, d, dims.d_bottle, d),
            mlp_time=_init_mlp(rng, span, dims.t_bottle, span),
        )
        for _ in range(dims.n_blocks)
    ]
    # mean pooling at init: a sign-mixed random w_agg can cancel the
    # constant-over-window covariate channels out of the query vector
    w_agg = Tensor(np.full((span, 1), 1.0 / span), requires_grad=True)
    single = None
    if single_channel:
        n_in = 1 + schema.n_discrete + schema.n_continuous
        single = _init_mlp(rng, n_in, d, d)
    return EncoderParams(dims=dims, gamma=gamma, tables=tables, psi=psi, blocks=blocks, w_agg=w_agg, single=single)


def _shift_codes(codes: np.ndarray, vocab: int) -> np.ndarray:
    """Declared codes [0, vocab) map to table rows [1, vocab]; anything else to UNK."""
    shifted = codes + 1
    return np.where((codes >= 0) & (codes < vocab), shifted, UNK_ROW)


def embed_timestep(instance: WindowInstance, t: int, params: EncoderParams, schema: VariableSchema) -> Tensor:
    """Channel-sum embedding of one step, 1-based t in [1, L+H].

    Steps beyond the look-back use exogenous channels only; the endogenous
    value is never read there.
    """
    L = instance.lookback
    span = L + instance.horizon
    if not 1 <= t <= span:
        raise ConfigError(f"t must be in [1, {span}], got {t}")
    i = t - 1

    if params.single is not None:
        row = _single_channel_rows(instance, schema)[i : i + 1]
        return tn.reshape(params.single.apply_rows(Tensor(row)), (params.dims.d,))

    acc = Tensor(np.zeros(params.dims.d))
    if t <= L:
        y_cell = Tensor(np.array([[instance.y_past[i]]]))
        acc = tn.add(acc, tn.reshape(params.gamma.apply_rows(y_cell), (params.dims.d,)))
    for j, (name, vocab) in enumerate(schema.discrete_vars):
        row_index = int(_shift_codes(instance.x_dis[i : i + 1, j], vocab)[0])
        acc = tn.add(acc, tn.gather_rows(params.tables[name], row_index))
    for j, name in enumerate(schema.continuous_vars):
        x_cell = Tensor(np.array([[instance.x_con[i, j]]]))
        acc = tn.add(acc, tn.reshape(params.psi[name].apply_rows(x_cell), (params.dims.d,)))
    return acc


def _single_channel_rows(instance: WindowInstance, schema: VariableSchema) -> np.ndarray:
    """(L+H, C+1) matrix of raw values for the single-channel ablation.

    The endogenous slot is zero-filled over the forecast window, mirroring
    the per-channel path dropping the endogenous term there.
    """
    span = instance.lookback + instance.horizon
    y_col = np.zeros(span)
    y_col[: instance.lookback] = instance.y_past
    return np.concatenate([y_col[:, None], instance.x_dis.astype(np.float64), instance.x_con], axis=1)


def embed_window(instance: WindowInstance, params: EncoderParams, schema: VariableSchema) -> Tensor:
    """Vectorized stack of per-step embeddings: (L+H, d)."""
    L, H = instance.lookback, instance.horizon

    if params.single is not None:
        return params.single.apply_rows(Tensor(_single_channel_rows(instance, schema)))

    y_col = Tensor(instance.y_past[:, None])
    acc = tn.vstack([params.gamma.apply_rows(y_col), Tensor(np.zeros((H, params.dims.d)))])
    for j, (name, vocab) in enumerate(schema.discrete_vars):
        rows = _shift_codes(instance.x_dis[:, j], vocab)
        acc = tn.add(acc, tn.gather_rows(params.tables[name], rows))
    for j, name in enumerate(schema.continuous_vars):
        col = Tensor(instance.x_con[:, j][:, None])
        acc = tn.add(acc, params.psi[name].apply_rows(col))
    return acc


def fuse(z: Tensor, params: EncoderParams) -> Tensor:
    """Apply every fusion block in order; zero blocks means identity."""
    for block in params.blocks:
        z = block.apply(z)
    return z


def encode(instance: WindowInstance, params: EncoderParams, schema: VariableSchema) -> Tensor:
    """Query vector: collapse the fused (L+H, d) matrix over time with w_agg."""
    z = fuse(embed_window(instance, params, schema), params)
    return tn.reshape(tn.matmul(tn.transpose(z), params.w_agg), (params.dims.d,))
