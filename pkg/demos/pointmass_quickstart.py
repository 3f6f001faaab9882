"""
Pointmass quickstart
====================

Collect random pushes of a single disk, train a contrastive latent model on
16x16 images and use it to steer the disk towards a goal image.

Runs in roughly two minutes on one CPU core.
"""

import numpy as np

from cfmlab import bench, dataset, models, planner, sim

# A few hundred random pushes are plenty for a 2-D world.
data = dataset.collect_random("pointmass", n_traj=200, traj_len=25, seed=0, size=16)
print("transitions:", data.n_transitions, "images:", data.images.shape)

# Train encoder + forward model jointly with InfoNCE.
ckpt, losses = models.train(data, models.TrainConfig("cfm", epochs=10, seed=0))
print("loss per epoch:", np.round(losses, 3))

# The learned latent should vary with position: compare embeddings of a
# disk moved left-to-right across the workspace.
rp = sim.canonical_render_params("pointmass", 16)
row = []
for x in np.linspace(0.1, 0.9, 5):
    s = sim.canonical_state("pointmass")
    s.pos[0, :2] = (x, 0.5)
    row.append(sim.render(s, rp))
z = ckpt.encode_images(np.stack(row))
print("latent distance from the leftmost disk:", np.round(np.linalg.norm(z - z[0], axis=1), 2))

# One planning step by hand: 100 candidate pushes, pick the one whose
# predicted latent lands closest to the goal's.
state, obs, params = sim.reset("pointmass", 3, size=16)
_, goal_obs = bench.make_goal(bench.GoalSpec("pointmass", "center", size=16))
res = planner.plan_step(ckpt, obs, goal_obs, sim.segment(obs, params), 100, np.random.default_rng(0))
print("start", state.pos[0, :2].round(3), "chosen push", np.round(res.action.delta, 2))

# Closed loop with replanning, against the random policy.
table = bench.benchmark("pointmass", {"cfm": ckpt}, ["center", "random"], n_episodes=10, size=16)
print(table.format_text())
