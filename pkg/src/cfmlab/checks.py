"""Finite-difference gradient checks of every layer and training objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models, nn
from .dataset import Batch

CHECK_SIZE = 16
CHECK_BATCH = 4


@dataclass
class CheckItem:
    name: str
    seed: int
    max_error: float
    checked: int
    skipped_kinks: int


def _leaf_store(rng, **shapes):
    store = nn.ParamStore(np.float64)
    for name, shape in shapes.items():
        store.add(name, rng.normal(0.0, 1.0, size=shape))
    return store


def _layer_cases(rng):
    x = rng.normal(size=(3, 2, 6, 6))
    s = _leaf_store(rng, x=x.shape, W=(4, 2, 3, 3), b=(4,))
    yield "conv2d", s, lambda p: (nn.conv2d(p["x"], p["W"], p["b"], stride=2, pad=1) ** 2).sum()
    s = _leaf_store(rng, x=(2, 3, 3, 3), W=(3, 2, 4, 4), b=(2,))
    yield "conv_transpose2d", s, lambda p: (nn.conv_transpose2d(p["x"], p["W"], p["b"], stride=2, pad=1) ** 2).sum()
    s = _leaf_store(rng, x=(5, 4), W=(4, 3), b=(3,))
    yield "dense", s, lambda p: (nn.dense(p["x"], p["W"], p["b"]) ** 2).sum()
    s = _leaf_store(rng, x=(6, 5))
    yield "leaky_relu", s, lambda p: (nn.leaky_relu(p["x"]) * nn.leaky_relu(p["x"])).sum()
    s = _leaf_store(rng, x=(4, 7))
    yield "logsumexp", s, lambda p: (nn.logsumexp(p["x"], axis=1) ** 2).sum()


def tiny_encoder(size=CHECK_SIZE, latent_dim=8):
    return models.EncoderSpec(size, (3, 4, 4, 4), (1, 2, 2, 2), (4, 6, 6, 8), latent_dim=latent_dim)


def synthetic_batch(rng, size=CHECK_SIZE, batch=CHECK_BATCH, action_dim=4):
    # picks live in [0, 1], deltas in [-1, 1], as in collected data
    actions = rng.uniform(-1, 1, size=(batch, action_dim))
    if action_dim > 2:
        actions[:, :2] = rng.uniform(0, 1, size=(batch, 2))
    return Batch(
        obs=rng.uniform(-1, 1, size=(batch, 3, size, size)),
        actions=actions,
        next_obs=rng.uniform(-1, 1, size=(batch, 3, size, size)),
        index=np.zeros((batch, 2), dtype=np.int64),
    )


def _model_cases(rng, seed):
    enc = tiny_encoder()
    batch = synthetic_batch(rng)
    for variant in models.FORWARD_VARIANTS:
        fwd = models.ForwardModelSpec(variant, (32, 32), 4, 8)
        ck = models.init_model("cfm", enc, fwd, seed, np.float64)
        leaf = _leaf_store(rng, z=(5, 8), a=(5, 4))
        for name, p in leaf.items():
            ck.params.add(f"input.{name}", p.data)

        def f(p, ck=ck):
            return (models.forward_tensor(ck, p["input.z"], p["input.a"]) ** 2).sum()

        yield f"forward_{variant}", ck.params, f
    fwd = models.ForwardModelSpec("mlp_linear", (32, 32), 4, 8)
    for sim_id in models.SIMILARITIES:
        ck = models.init_model("cfm", enc, fwd, seed, np.float64, similarity=sim_id)
        yield f"infonce_{sim_id}", ck.params, lambda p, ck=ck: models.infonce_loss(ck, batch)
    ck = models.init_model("autoencoder", enc, fwd, seed, np.float64)
    yield "autoencoder", ck.params, lambda p, ck=ck: models.autoencoder_loss(ck, batch)
    ck = models.init_model("joint", enc, fwd, seed, np.float64)
    yield "joint", ck.params, lambda p, ck=ck: models.joint_loss(ck, batch)


def run_gradcheck(seeds=range(20), h=1e-5, max_coords=12):
    """One :class:`CheckItem` per (layer or objective, seed), in float64."""
    items = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        cases = list(_layer_cases(rng)) + list(_model_cases(rng, seed))
        for name, store, f in cases:
            rep = nn.grad_check(f, store, h=h, max_coords=max_coords, rng=np.random.default_rng([seed, 7]),
                                per_param=True)
            items.append(CheckItem(name, int(seed), rep.max_error, rep.checked, rep.skipped_kinks))
    return items


def summarize(items):
    """``{name: worst error over seeds}`` in first-seen order."""
    out = {}
    for it in items:
        out[it.name] = max(out.get(it.name, 0.0), it.max_error)
    return out
