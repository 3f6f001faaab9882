"""One-step model-predictive control in latent space, plus the random baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sim
from .dataset import random_action


@dataclass
class PlanResult:
    action: sim.PickPlaceAction
    candidates: list
    distances: np.ndarray  # (n,) predicted latent l2 distance to the goal
    z: np.ndarray
    z_goal: np.ndarray

    @property
    def index(self):
        return int(np.argmin(self.distances))


def _check_mask(kind, mask):
    if kind != "pointmass" and not np.any(mask):
        raise ValueError("empty segmentation mask: no pick location available")


def sample_candidate_actions(mask, n, rng, env_kind):
    """``n`` actions with picks uniform over foreground pixels and uniform deltas.

    Candidates are drawn one after another from ``rng``, so the first ``m``
    candidates of a size-``n`` draw equal a size-``m`` draw from the same seed.
    """
    if n < 1:
        raise ValueError("need at least one candidate")
    mask = np.asarray(mask, dtype=bool)
    _check_mask(env_kind, mask)
    return [random_action(env_kind, mask, rng, mask.shape[0]) for _ in range(n)]


def random_policy_step(mask, rng, env_kind):
    return sample_candidate_actions(mask, 1, rng, env_kind)[0]


def score_candidates(model, z, z_goal, candidates):
    """Plain l2 distance between each predicted next latent and the goal latent."""
    acts = np.stack([c.as_vector() for c in candidates])
    z_rep = np.repeat(np.asarray(z, dtype=np.float64)[None, :], len(candidates), axis=0)
    pred = model.predict(z_rep, acts)
    return np.sqrt(np.sum((pred - np.asarray(z_goal, dtype=np.float64)) ** 2, axis=1))


def plan_step(model, obs, goal_obs, mask, n, rng, env_kind=None, z_goal=None):
    """Sample ``n`` candidates, score them through the forward model, pick the argmin.

    ``model`` needs ``encode_images(uint8 batch) -> latents`` and
    ``predict(latents, action vectors) -> latents``.  Pass ``z_goal`` to reuse a
    cached goal embedding.  Ties go to the lowest candidate index.
    """
    if env_kind is None:
        env_kind = _kind_from_action_dim(model)
    candidates = sample_candidate_actions(mask, n, rng, env_kind)
    if z_goal is None:
        z, z_goal = model.encode_images(np.stack([obs, goal_obs]))
    else:
        z = model.encode_images(np.asarray(obs)[None])[0]
    d = score_candidates(model, z, z_goal, candidates)
    return PlanResult(candidates[int(np.argmin(d))], candidates, d, z, np.asarray(z_goal))


def _kind_from_action_dim(model):
    dim = model.forward.action_dim
    kinds = [k for k, v in sim.ACTION_DIMS.items() if v == dim]
    if len(kinds) != 1:
        raise ValueError("cannot infer the environment from the model; pass env_kind")
    return kinds[0]


class PointmassOracle:
    """Ground-truth latent model for the pointmass: latent = position.

    The encoder reads the position off the segmentation mask (its centroid in
    workspace coordinates).  ``dynamics="true"`` predicts with the simulator's
    own update; ``dynamics="identity"`` returns the latent unchanged.
    """

    def __init__(self, params, dynamics="true", physics=sim.DEFAULT_PHYSICS):
        if dynamics not in ("true", "identity"):
            raise ValueError(f"unknown oracle dynamics {dynamics!r}")
        self.params = params
        self.dynamics = dynamics
        self.scale = physics.pointmass_delta_scale

    def encode_images(self, images):
        out = []
        for img in images:
            rows, cols = np.nonzero(sim.segment(img, self.params))
            if len(rows) == 0:
                raise ValueError("oracle encoder found no foreground")
            S = img.shape[0]
            out.append(((cols.mean() + 0.5) / S, (rows.mean() + 0.5) / S))
        return np.array(out, dtype=np.float64)

    def predict(self, z, actions):
        z = np.asarray(z, dtype=np.float64)
        if self.dynamics == "identity":
            return z.copy()
        return np.clip(z + self.scale * np.asarray(actions, dtype=np.float64), 0.0, 1.0)
