"""Shared fixtures-in-code: tiny planted datasets and quick model builds."""

from __future__ import annotations

import warnings

from protocast.data import Normalizer, SynthConfig, make_windows, synth_generate
from protocast.model import ModelConfig, build_model
from protocast.trainer import WindowSet


def tiny_dataset(seed=0, regimes=2, periods=30, period=6, lookback=6, horizon=3, stride=1, noise=0.05, **synth_overrides):
    cfg = SynthConfig(
        regimes=regimes,
        period=period,
        n_periods=periods,
        noise=noise,
        lookback=lookback,
        horizon=horizon,
        **synth_overrides,
    )
    bundle, schema, labels = synth_generate(cfg, seed)
    normalizer = Normalizer.fit(bundle, schema)
    normalized = normalizer.apply(bundle)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # tiny splits may legitimately be empty
        windows = WindowSet(
            train=make_windows(normalized, schema, stride=stride, split="train"),
            val=make_windows(normalized, schema, stride=stride, split="val"),
            test=make_windows(normalized, schema, stride=stride, split="test"),
        )
    return bundle, schema, normalizer, windows, labels


def tiny_model(schema, normalizer=None, seed=0, **config_overrides):
    kwargs = dict(d=8, d_bottle=3, n_blocks=1, n_roots=2)
    kwargs.update(config_overrides)
    return build_model(schema, ModelConfig(**kwargs), seed=seed, normalizer=normalizer)
