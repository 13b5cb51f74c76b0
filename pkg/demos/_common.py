"""Shared helpers for the demo scripts: a small scene and a quick model."""

import os

import numpy as np

from vidatlas import data, losses, train

OUT_DIR = os.path.join(os.path.dirname(__file__), "_out")


def demo_scene():
    return data.SynthSpec(
        seed=11,
        frames=16,
        height=48,
        width=64,
        bg_velocity=(-0.5, 0.25),
        sprite_velocity=(2.2, 0.5),
        sprite_size=(20, 14),
        sprite_start=(8.0, 10.0),
        sprite_shape="box",
    )


def demo_config(total_iters=4000):
    return train.TrainConfig(
        batch_size=384,
        total_iters=total_iters,
        bootstrap_iters=min(800, total_iters),
        identity_pretrain_iters=100,
        learning_rate=1e-3,
        hidden=48,
        map_bg_layers=4,
        map_fg_layers=4,
        alpha_layers=4,
        atlas_layers=4,
        atlas_skips="",
        log_interval=500,
        checkpoint_interval=0,
        dtype="float32",
        # a strong bootstrap anchor keeps the tiny quick-demo model from
        # collapsing the decomposition (see the acceptance config)
        weights=losses.LossWeights(mask_bootstrap=500.0),
    )


def train_or_load_demo_model():
    """Train the demo model once and cache the checkpoint under demos/_out."""
    os.makedirs(OUT_DIR, exist_ok=True)
    ckpt_path = os.path.join(OUT_DIR, "demo_checkpoint.lnat")
    dataset = data.synth_dataset(demo_scene())
    if os.path.exists(ckpt_path):
        cached = train.load_checkpoint(ckpt_path).model
        if cached.dims == dataset.video.dims:
            print(f"loading cached model from {ckpt_path}")
            return cached, dataset
        print("cached model does not match the scene; retraining")
    cfg = demo_config()
    print("training a small model (a couple of minutes on one core)...")
    model, states, _ = train.fit(
        dataset.video, dataset.flow, dataset.masks, None, cfg,
        progress=lambda i, t, b: print(f"  iter {i}: loss {t:.2f}"),
    )
    train.save_checkpoint(ckpt_path, model, states, cfg.total_iters,
                          np.random.default_rng(0).bit_generator.state, cfg)
    print(f"saved {ckpt_path}")
    return model, dataset
