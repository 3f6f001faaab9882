"""
Why the contrastive term matters
================================

A latent model trained to minimise plain prediction error can cheat by
mapping every image to the same vector.  The InfoNCE loss cannot be fooled
this way: a constant encoder leaves it at ln(B), the value of guessing.
"""

import math

import numpy as np

from cfmlab import dataset, models

data = dataset.collect_random("rope", n_traj=8, traj_len=16, seed=1, size=32)
batch = dataset.sample_batch(data, 64, np.random.default_rng(0))

ckpt = models.init_model("cfm", models.EncoderSpec.desk(32), models.ForwardModelSpec(action_dim=4),
                         seed=0, dtype=np.float64)

# Collapse by hand: zero the encoder projection and make f(z, a) = z.
ckpt.params["enc.fc.W"].data[:] = 0
ckpt.params["enc.fc.b"].data[:] = 1.0
for name, p in ckpt.params.items():
    if name.startswith("fwd."):
        p.data[:] = 0
ckpt.params["fwd.out.b"].data[:64] = np.eye(8).ravel()

print("latent MSE of the collapsed model:", float(models.latent_mse_loss(ckpt, batch).data))
print("InfoNCE of the collapsed model:   ", float(models.infonce_loss(ckpt, batch).data))
print("ln(64):                           ", math.log(64))

# Real training pulls the loss below chance.
fresh, losses = models.train(data, models.TrainConfig("cfm", epochs=15, batch_size=64, seed=0))
print("trained InfoNCE per epoch:", np.round(losses, 3))
