"""CSV ingestion, normalization, windowing, and planted-pattern synthesis.

Timestamps are abstract integer steps; calendar parsing is the caller's
concern. Phase is derived from a row's absolute position in the bundle.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, SchemaError, VocabularyError


@dataclass(frozen=True)
class VariableSchema:
    """Declared variables plus the window geometry (period T, look-back L, horizon H)."""

    endogenous_name: str
    discrete_vars: tuple[tuple[str, int], ...]
    continuous_vars: tuple[str, ...]
    period_T: int
    lookback_L: int
    horizon_H: int

    def __post_init__(self):
        names = [self.endogenous_name] + [n for n, _ in self.discrete_vars] + list(self.continuous_vars)
        if len(set(names)) != len(names):
            raise SchemaError(f"variable names must be unique, got {names}")
        for name, vocab in self.discrete_vars:
            if vocab < 1:
                raise SchemaError(f"vocab_size for {name!r} must be >= 1, got {vocab}")
        if self.period_T < 1 or self.lookback_L < 1 or self.horizon_H < 1:
            raise SchemaError("period_T, lookback_L and horizon_H must all be >= 1")

    @property
    def n_discrete(self) -> int:
        return len(self.discrete_vars)

    @property
    def n_continuous(self) -> int:
        return len(self.continuous_vars)

    def vocab_size(self, name: str) -> int:
        for n, v in self.discrete_vars:
            if n == name:
                return v
        raise SchemaError(f"unknown discrete variable {name!r}")

    def to_dict(self) -> dict:
        return {
            "endogenous_name": self.endogenous_name,
            "discrete_vars": [{"name": n, "vocab_size": v} for n, v in self.discrete_vars],
            "continuous_vars": list(self.continuous_vars),
            "period_T": self.period_T,
            "lookback_L": self.lookback_L,
            "horizon_H": self.horizon_H,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSchema":
        return cls(
            endogenous_name=d["endogenous_name"],
            discrete_vars=tuple((e["name"], int(e["vocab_size"])) for e in d["discrete_vars"]),
            continuous_vars=tuple(d["continuous_vars"]),
            period_T=int(d["period_T"]),
            lookback_L=int(d["lookback_L"]),
            horizon_H=int(d["horizon_H"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "VariableSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Splits:
    """Contiguous, ordered (start, stop) row ranges: train < val < test."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        t, v, s = self.train, self.val, self.test
        if not (0 <= t[0] <= t[1] == v[0] <= v[1] == s[0] <= s[1]):
            raise SchemaError(f"splits must be contiguous and ordered, got {t}, {v}, {s}")

    @classmethod
    def from_fractions(cls, n: int, fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)) -> "Splits":
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {fractions}")
        n_train = int(round(n * fractions[0]))
        n_val = int(round(n * fractions[1]))
        return cls(train=(0, n_train), val=(n_train, n_train + n_val), test=(n_train + n_val, n))

    def range(self, name: str) -> tuple[int, int]:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ConfigError(f"unknown split {name!r}") from None


@dataclass
class DatasetBundle:
    """One time-indexed table of endogenous + exogenous columns with split ranges."""

    timestamps: np.ndarray
    y: np.ndarray
    x_dis: dict[str, np.ndarray]
    x_con: dict[str, np.ndarray]
    splits: Splits

    def __post_init__(self):
        n = len(self.timestamps)
        lengths = [len(self.y)] + [len(v) for v in self.x_dis.values()] + [len(v) for v in self.x_con.values()]
        if any(m != n for m in lengths):
            raise SchemaError("all columns must share one length")
        if n > 1 and not (np.diff(self.timestamps) > 0).all():
            raise ParseError("timestamps must be strictly increasing")
        if self.splits.test[1] != n:
            raise SchemaError(f"splits cover {self.splits.test[1]} rows but bundle has {n}")

    def __len__(self) -> int:
        return len(self.timestamps)

    def validate_vocab(self, schema: VariableSchema) -> None:
        for name, vocab in schema.discrete_vars:
            col = self.x_dis[name]
            bad = np.nonzero((col < 0) | (col >= vocab))[0]
            if bad.size:
                raise VocabularyError(
                    f"value {int(col[bad[0]])} of {name!r} at row {int(bad[0])} "
                    f"outside vocabulary [0, {vocab})"
                )

    def equals(self, other: "DatasetBundle") -> bool:
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.y, other.y)
            and set(self.x_dis) == set(other.x_dis)
            and set(self.x_con) == set(other.x_con)
            and all(np.array_equal(self.x_dis[k], other.x_dis[k]) for k in self.x_dis)
            and all(np.array_equal(self.x_con[k], other.x_con[k]) for k in self.x_con)
            and self.splits == other.splits
        )


@dataclass(frozen=True)
class Normalizer:
    """Per-variable z-scoring statistics, fit on the train split only.

    Patterns are global parameters shared by every instance, so normalization
    is global per variable rather than per instance; a per-instance rescaling
    would make a fixed pattern meaningless.
    """

    y_mean: float
    y_std: float
    con_stats: dict[str, tuple[float, float]]

    @classmethod
    def fit(cls, bundle: DatasetBundle, schema: VariableSchema) -> "Normalizer":
        lo, hi = bundle.splits.train

        def stats(col: np.ndarray) -> tuple[float, float]:
            mean = float(col[lo:hi].mean())
            std = float(col[lo:hi].std())
            return mean, (std if std >= 1e-8 else 1.0)

        y_mean, y_std = stats(bundle.y)
        return cls(
            y_mean=y_mean,
            y_std=y_std,
            con_stats={name: stats(bundle.x_con[name]) for name in schema.continuous_vars},
        )

    def apply(self, bundle: DatasetBundle) -> DatasetBundle:
        x_con = {
            name: (col - self.con_stats[name][0]) / self.con_stats[name][1]
            for name, col in bundle.x_con.items()
        }
        return DatasetBundle(
            timestamps=bundle.timestamps,
            y=(bundle.y - self.y_mean) / self.y_std,
            x_dis={k: v.copy() for k, v in bundle.x_dis.items()},
            x_con=x_con,
            splits=bundle.splits,
        )

    def invert_y(self, values: np.ndarray) -> np.ndarray:
        return values * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "con_stats": {k: list(v) for k, v in self.con_stats.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
            con_stats={k: (float(v[0]), float(v[1])) for k, v in d["con_stats"].items()},
        )


@dataclass(frozen=True)
class WindowInstance:
    """One training/inference example.

    ``x_dis``/``x_con`` cover the full look-back plus forecast span (L+H rows);
    ``phase0`` is the phase of the first forecast step, i.e. its absolute row
    index in the bundle modulo the pattern period.
    """

    y_past: np.ndarray
    x_dis: np.ndarray
    x_con: np.ndarray
    y_target: np.ndarray
    phase0: int
    index: int

    @property
    def lookback(self) -> int:
        return len(self.y_past)

    @property
    def horizon(self) -> int:
        return len(self.y_target)

    @property
    def x_past(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x_dis[: self.lookback], self.x_con[: self.lookback]

    @property
    def x_future(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x_dis[self.lookback :], self.x_con[self.lookback :]


def make_windows(
    bundle: DatasetBundle,
    schema: VariableSchema,
    stride: int = 1,
    split: str = "train",
) -> list[WindowInstance]:
    """Slide a (L, H) window over one split; start offsets are multiples of ``stride``.

    Returns an empty list (with a warning) when the split is shorter than L+H.
    """
    if stride < 1:
        raise ConfigError(f"stride must be positive, got {stride}")
    L, H, T = schema.lookback_L, schema.horizon_H, schema.period_T
    lo, hi = bundle.splits.range(split)
    length = hi - lo
    if length < L + H:
        warnings.warn(f"split {split!r} has {length} rows, need at least {L + H}; no windows")
        return []

    dis_names = [n for n, _ in schema.discrete_vars]
    con_names = list(schema.continuous_vars)
    dis_mat = (
        np.stack([bundle.x_dis[n] for n in dis_names], axis=1)
        if dis_names
        else np.zeros((len(bundle), 0), dtype=np.int64)
    )
    con_mat = (
        np.stack([bundle.x_con[n] for n in con_names], axis=1)
        if con_names
        else np.zeros((len(bundle), 0))
    )

    windows = []
    for start in range(0, length - L - H + 1, stride):
        a = lo + start
        windows.append(
            WindowInstance(
                y_past=bundle.y[a : a + L].copy(),
                x_dis=dis_mat[a : a + L + H].copy(),
                x_con=con_mat[a : a + L + H].copy(),
                y_target=bundle.y[a + L : a + L + H].copy(),
                phase0=(a + L) % T,
                index=a,
            )
        )
    return windows


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def load_csv(
    path,
    schema: VariableSchema,
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> DatasetBundle:
    """Read a UTF-8 CSV with a header row and integer "ts" column into a bundle.

    Rows are sorted by timestamp. Blank cells are rejected (no imputation),
    and discrete values are checked against the declared vocabularies.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)

    needed = ["ts", schema.endogenous_name] + [n for n, _ in schema.discrete_vars] + list(schema.continuous_vars)
    for name in needed:
        if name not in header:
            raise SchemaError(f"{path}: missing column {name!r}")
    col_index = {name: header.index(name) for name in needed}

    def cell(row, row_no, name, kind):
        raw = row[col_index[name]].strip()
        if raw == "":
            raise ParseError(f"{path}: blank {name!r} cell at data row {row_no}")
        try:
            return int(raw) if kind is int else float(raw)
        except ValueError:
            raise ParseError(f"{path}: non-numeric {name!r} value {raw!r} at data row {row_no}") from None

    n = len(rows)
    ts = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    x_dis = {name: np.empty(n, dtype=np.int64) for name, _ in schema.discrete_vars}
    x_con = {name: np.empty(n) for name in schema.continuous_vars}
    for i, row in enumerate(rows):
        ts[i] = cell(row, i, "ts", int)
        y[i] = cell(row, i, schema.endogenous_name, float)
        for name, vocab in schema.discrete_vars:
            v = cell(row, i, name, int)
            if not 0 <= v < vocab:
                raise VocabularyError(f"{path}: {name!r} value {v} at data row {i} outside vocabulary [0, {vocab})")
            x_dis[name][i] = v
        for name in schema.continuous_vars:
            x_con[name][i] = cell(row, i, name, float)

    order = np.argsort(ts, kind="stable")
    bundle = DatasetBundle(
        timestamps=ts[order],
        y=y[order],
        x_dis={k: v[order] for k, v in x_dis.items()},
        x_con={k: v[order] for k, v in x_con.items()},
        splits=Splits.from_fractions(n, split_fractions),
    )
    return bundle


def write_csv(bundle: DatasetBundle, schema: VariableSchema, path) -> None:
    """Inverse of :func:`load_csv` (modulo split fractions, which live with the caller)."""
    path = Path(path)
    dis_names = [n for n, _ in schema.discrete_vars]
    con_names = list(schema.continuous_vars)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ts", schema.endogenous_name] + dis_names + con_names)
        for i in range(len(bundle)):
            row = [int(bundle.timestamps[i]), repr(float(bundle.y[i]))]
            row += [int(bundle.x_dis[n][i]) for n in dis_names]
            row += [repr(float(bundle.x_con[n][i])) for n in con_names]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# planted-pattern synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale generator: K regimes, each a period-T template curve keyed to
    a deterministic function of discrete covariates, plus regime-correlated
    continuous covariates, optional distractors, and i.i.d. Gaussian noise."""

    regimes: int = 4
    period: int = 24
    n_periods: int = 200
    noise: float = 0.1
    lookback: int = 24
    horizon: int = 12
    regime_block: int = 1
    n_variants: int = 1
    variant_strength: float = 0.0
    informative_continuous: int = 1
    distractor_continuous: int = 0
    distractor_discrete: int = 0
    distractor_vocab: int = 5
    future_noise: float = 0.0
    amplitude: float = 1.0
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        if self.regimes < 1 or self.period < 1:
            raise ConfigError(f"need regimes >= 1 and period >= 1, got {self.regimes}, {self.period}")
        if self.n_variants < 1 or self.regime_block < 1:
            raise ConfigError("n_variants and regime_block must be >= 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        kwargs = dict(d)
        if "split_fractions" in kwargs:
            kwargs["split_fractions"] = tuple(kwargs["split_fractions"])
        return cls(**kwargs)


def _factor_pair(k: int) -> tuple[int, int]:
    """Largest factor pair (a, b) with a*b == k and a >= b."""
    for b in range(int(np.sqrt(k)), 0, -1):
        if k % b == 0:
            return k // b, b
    return k, 1


def _smooth_curves(rng: np.random.Generator, count: int, period: int) -> np.ndarray:
    """Random period-length curves from a few harmonics, unit std each."""
    t = np.arange(period)
    curves = np.zeros((count, period))
    for i in range(count):
        for h in range(1, 4):
            amp = rng.uniform(0.4, 1.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            curves[i] += amp * np.sin(2.0 * np.pi * h * t / period + phase)
        std = curves[i].std()
        if std > 1e-12:
            curves[i] /= std
    return curves


def synth_generate(config: SynthConfig, seed: int) -> tuple[DatasetBundle, VariableSchema, np.ndarray]:
    """Generate a planted-pattern dataset; returns (bundle, schema, per-step regime labels).

    y_t = template[regime(t)][t mod T] (+ variant modulation) + noise * eps_t,
    with regime(t) a deterministic function of the regime-code covariates.
    Generation is deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    K, T = config.regimes, config.period
    n = T * config.n_periods

    templates = _smooth_curves(rng, K, T) * config.amplitude
    templates += (np.arange(K) - (K - 1) / 2.0)[:, None] * config.amplitude
    variant_curves = _smooth_curves(rng, config.n_variants, T)

    n_blocks = -(-config.n_periods // config.regime_block)
    regime_per_block = rng.integers(0, K, size=n_blocks)
    variant_per_block = rng.integers(0, config.n_variants, size=n_blocks)
    block_of_period = np.arange(config.n_periods) // config.regime_block
    regime = np.repeat(regime_per_block[block_of_period], T)[:n]
    variant = np.repeat(variant_per_block[block_of_period], T)[:n]

    phase = np.arange(n) % T
    y = templates[regime, phase]
    if config.variant_strength > 0.0:
        y = y + config.variant_strength * variant_curves[variant, phase]
    if config.noise > 0.0:
        y = y + config.noise * rng.standard_normal(n)

    ka, kb = _factor_pair(K)
    x_dis: dict[str, np.ndarray] = {
        "regime_a": regime // kb,
        "regime_b": regime % kb,
    }
    discrete_vars: list[tuple[str, int]] = [("regime_a", ka), ("regime_b", kb)]
    if config.n_variants > 1:
        x_dis["variant"] = variant
        discrete_vars.append(("variant", config.n_variants))
    for j in range(config.distractor_discrete):
        name = f"noise_d{j}"
        x_dis[name] = rng.integers(0, config.distractor_vocab, size=n)
        discrete_vars.append((name, config.distractor_vocab))

    x_con: dict[str, np.ndarray] = {}
    continuous_vars: list[str] = []
    centers = np.linspace(-1.0, 1.0, K) if K > 1 else np.zeros(1)
    for j in range(config.informative_continuous):
        name = f"signal_c{j}"
        x_con[name] = centers[regime] + 0.25 * rng.standard_normal(n)
        continuous_vars.append(name)
    for j in range(config.distractor_continuous):
        name = f"noise_c{j}"
        x_con[name] = rng.standard_normal(n)
        continuous_vars.append(name)

    if config.future_noise > 0.0:
        # Stand-in for imperfect covariate forecasts: continuous columns carry
        # extra noise everywhere; no per-window protocol is modeled.
        for name in continuous_vars:
            x_con[name] = x_con[name] + config.future_noise * rng.standard_normal(n)

    schema = VariableSchema(
        endogenous_name="y",
        discrete_vars=tuple(discrete_vars),
        continuous_vars=tuple(continuous_vars),
        period_T=T,
        lookback_L=config.lookback,
        horizon_H=config.horizon,
    )
    bundle = DatasetBundle(
        timestamps=np.arange(n, dtype=np.int64),
        y=y,
        x_dis=x_dis,
        x_con=x_con,
        splits=Splits.from_fractions(n, config.split_fractions),
    )
    return bundle, schema, regime.astype(np.int64)
