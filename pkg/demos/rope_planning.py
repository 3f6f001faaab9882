"""
Rope manipulation with a contrastive forward model
==================================================

The desk-scale rope pipeline end to end: random pick-and-place data,
contrastive training at 32x32, then greedy one-step MPC towards a straight
horizontal rope and towards random goal shapes.

Full settings (400 x 25 transitions, 10 epochs) take about 8 minutes.  Set
QUICK = True for a smaller run.
"""

import time

import numpy as np

from cfmlab import bench, dataset, models, sim

QUICK = False
n_traj, epochs, episodes = (80, 3, 10) if QUICK else (400, 10, 50)

t0 = time.perf_counter()
data = dataset.collect_random("rope", n_traj=n_traj, traj_len=25, seed=0, size=32)
print(f"collected {data.n_transitions} transitions in {time.perf_counter() - t0:.0f}s")

# Picks are sampled on the segmentation mask, so every action grabs the rope.
obs, params = data.images[0, 0], data.render_params(0)
print("foreground pixels in the first frame:", int(sim.segment(obs, params).sum()))

ckpt, losses = models.train(data, models.TrainConfig("cfm", epochs=epochs, seed=0))
print("InfoNCE per epoch:", np.round(losses, 3))
print("embedding std per dim:", np.round(models.embedding_std(ckpt, data.images[:, 0]), 2))

# Goal images for the benchmark are rendered with canonical parameters.
g_state, g_obs = bench.make_goal(bench.GoalSpec("rope", "horizontal"))
print("goal rope spans x =", g_state.pos[[0, -1], 0].round(3))

table = bench.benchmark("rope", {"cfm": ckpt}, ["horizontal", "random"], n_episodes=episodes)
print(table.format_text())

# Traces are kept per episode if you want to look at a single rollout.
rep = bench.run_episode("rope", ckpt, "horizontal", seed=0)
print("distance trace of episode 0:", np.round(rep.trace, 2))
