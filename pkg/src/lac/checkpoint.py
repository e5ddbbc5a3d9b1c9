"""Named-tensor checkpoints shared by the encoder and the augmenter.

A checkpoint is an ``.npz`` archive: one float64 array per parameter under
its dotted name (``encoder.W0``, ``mta.layer0.head1.wq``, ``cfa.K``, ...),
the MTA mask under ``mta.mask`` and the run configuration as UTF-8 JSON
bytes under ``__config__``.
"""
from __future__ import annotations

import json

import numpy as np

from .encoder import EncoderParams, init_encoder
from .trainer import Augmenter, GraphContext, TrainConfig, init_augmenter

CONFIG_KEY = "__config__"


def save_checkpoint(path, encoder: EncoderParams, augmenter: Augmenter, cfg: TrainConfig) -> None:
    arrays = {name: t.data for name, t in encoder.named_parameters()}
    arrays.update({name: t.data for name, t in augmenter.named_parameters()})
    if augmenter.mta is not None:
        arrays["mta.mask"] = augmenter.mta.mask
    arrays[CONFIG_KEY] = np.frombuffer(json.dumps(cfg.to_dict(), sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path) -> tuple[dict, dict]:
    """``(config dict, {name: array})`` without rebuilding any model."""
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    cfg = json.loads(arrays.pop(CONFIG_KEY).tobytes().decode())
    return cfg, arrays


def restore(path, ctx: GraphContext) -> tuple[TrainConfig, EncoderParams, Augmenter]:
    """Rebuild the encoder and augmenter for ``ctx`` and load saved values into them."""
    cfg_dict, arrays = read_checkpoint(path)
    cfg = TrainConfig(**cfg_dict)
    rng = np.random.default_rng(cfg.seed)
    enc = init_encoder(ctx.X.shape[1], cfg.hidden, cfg.embed_dim, cfg.layers, rng)
    aug = init_augmenter(ctx, cfg, rng)
    if aug.mta is not None:
        aug.mta.mask = arrays.pop("mta.mask")
    for name, t in enc.named_parameters() + aug.named_parameters():
        if name not in arrays:
            raise KeyError(f"checkpoint {path} lacks {name}")
        if arrays[name].shape != t.shape:
            raise ValueError(f"{name}: checkpoint shape {arrays[name].shape} != model shape {t.shape}")
        t.data = arrays.pop(name).astype(np.float64)
    if arrays:
        raise KeyError(f"checkpoint {path} has unexpected entries {sorted(arrays)}")
    return cfg, enc, aug
