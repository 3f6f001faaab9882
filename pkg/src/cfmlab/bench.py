"""Goal states, evaluation metrics, the episode runner and results tables."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .errors import EpisodeError
from .planner import plan_step, random_policy_step

log = logging.getLogger(__name__)

ROPE_LINES = {
    "horizontal": (1.0, 0.0),
    "vertical": (0.0, 1.0),
    "diag45": (1.0, 1.0),
    "diag135": (-1.0, 1.0),
}
GOALS = {
    "rope": tuple(ROPE_LINES) + ("squiggle", "random"),
    "cloth": ("flat", "random"),
    "pointmass": ("center", "random"),
}
DEFAULT_MAX_STEPS = {"pointmass": 20, "rope": 20, "cloth": 40}
SQUIGGLE_PERIODS = 1.5
SQUIGGLE_PEAK_TO_PEAK = 0.15


@dataclass(frozen=True)
class GoalSpec:
    env_kind: str
    goal: str
    seed: int = 0
    size: int = 32

    def __post_init__(self):
        if self.env_kind not in GOALS:
            raise ValueError(f"unknown env kind {self.env_kind!r}")
        if self.goal not in GOALS[self.env_kind]:
            raise ValueError(f"goal {self.goal!r} is not defined for {self.env_kind}; "
                             f"choose from {GOALS[self.env_kind]}")


def _squiggle_points(n, length):
    """``n`` points at equal arc length on a centred sinusoid of total arc ``length``."""
    def curve(width, m=4001):
        x = np.linspace(-width / 2, width / 2, m)
        y = 0.5 * SQUIGGLE_PEAK_TO_PEAK * np.sin(2 * np.pi * SQUIGGLE_PERIODS * (x / width + 0.5))
        seg = np.hypot(np.diff(x), np.diff(y))
        return x, y, np.concatenate([[0.0], np.cumsum(seg)])

    # bisect the horizontal extent so the curve is exactly as long as the rope
    lo, hi = 1e-3, length
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if curve(mid)[2][-1] > length:
            hi = mid
        else:
            lo = mid
    x, y, s = curve(0.5 * (lo + hi))
    targets = np.linspace(0.0, s[-1], n)
    return np.interp(targets, s, x), np.interp(targets, s, y)


def goal_state(spec, physics=sim.DEFAULT_PHYSICS):
    kind, goal = spec.env_kind, spec.goal
    if goal == "random":
        state, _, _ = sim.reset(kind, spec.seed, False, spec.size, physics)
        return state
    state = sim.canonical_state(kind, physics)
    if kind == "rope":
        n = sim.N_PARTICLES["rope"]
        length = (n - 1) * physics.rope_rest_length
        if goal == "squiggle":
            x, y = _squiggle_points(n, length)
        else:
            d = np.asarray(ROPE_LINES[goal]) / np.hypot(*ROPE_LINES[goal])
            t = np.linspace(-length / 2, length / 2, n)
            x, y = t * d[0], t * d[1]
        state.pos[:, 0] = 0.5 + x
        state.pos[:, 1] = 0.5 + y
    return state


def make_goal(spec, physics=sim.DEFAULT_PHYSICS):
    """Goal state and its image, rendered with canonical parameters."""
    state = goal_state(spec, physics)
    return state, sim.render(state, sim.canonical_render_params(spec.env_kind, spec.size))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------
def paired_geom_distance(a, b):
    """Sum of distances between index-matched particles (rope: either orientation)."""
    pa, pb = np.asarray(getattr(a, "pos", a), np.float64), np.asarray(getattr(b, "pos", b), np.float64)
    if pa.shape != pb.shape:
        raise ValueError(f"particle counts differ: {pa.shape} vs {pb.shape}")
    d = float(np.sum(np.linalg.norm(pa - pb, axis=1)))
    if getattr(a, "kind", None) == "rope":
        d = min(d, float(np.sum(np.linalg.norm(pa[::-1] - pb, axis=1))))
    return d


def pixel_intersection(mask_a, mask_b):
    mask_a, mask_b = np.asarray(mask_a, bool), np.asarray(mask_b, bool)
    if mask_a.shape != mask_b.shape:
        raise ValueError(f"mask shapes differ: {mask_a.shape} vs {mask_b.shape}")
    return int(np.count_nonzero(mask_a & mask_b))


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------
@dataclass
class EpisodeReport:
    trace: list  # metric before any action, then after each action
    best: float
    final: float
    n_actions: int
    seed: int
    wall_time: float
    final_pixel_intersection: int = 0
    fallbacks: int = 0


def _planning_view(state, obs, params, kind, step_idx):
    mask = sim.segment(obs, params)
    if kind == "pointmass" or mask.any():
        return obs, mask, 0
    log.warning("empty mask at step %d; re-rendering with canonical parameters", step_idx)
    canon = sim.canonical_render_params(kind, obs.shape[0])
    obs = sim.render(state, canon)
    mask = sim.segment(obs, canon)
    if not mask.any():
        raise EpisodeError(f"object not visible at step {step_idx} even with canonical rendering "
                           f"(particles span {state.pos[:, :2].min(0)}..{state.pos[:, :2].max(0)})")
    return obs, mask, 1


def run_episode(env_kind, policy, goal, max_steps=None, seed=0, randomize=False, n_candidates=100,
                size=None, physics=sim.DEFAULT_PHYSICS):
    """Roll out ``policy`` (a latent model or ``"random"``) towards ``goal``.

    The environment reset and the policy draw from independent streams of
    ``seed``, so every method sees the same start state for the same seed.
    """
    if isinstance(goal, str):
        goal = GoalSpec(env_kind, goal, seed, size or 32)
    if goal.env_kind != env_kind:
        raise ValueError("goal belongs to a different environment")
    size = size or goal.size
    max_steps = DEFAULT_MAX_STEPS[env_kind] if max_steps is None else max_steps
    t0 = time.perf_counter()
    reset_seq, policy_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(policy_seq)
    state, obs, params = sim.reset(env_kind, reset_seq, randomize, size, physics)
    g_state, g_obs = make_goal(goal, physics)
    if g_obs.shape != obs.shape:
        raise ValueError(f"goal image {g_obs.shape} and observation {obs.shape} differ in size")
    z_goal = None
    if policy != "random":
        z_goal = policy.encode_images(g_obs[None])[0]
    trace = [paired_geom_distance(state, g_state)]
    fallbacks = 0
    for t in range(max_steps):
        view, mask, fb = _planning_view(state, obs, params, env_kind, t)
        fallbacks += fb
        if policy == "random":
            action = random_policy_step(mask, rng, env_kind)
        else:
            action = plan_step(policy, view, g_obs, mask, n_candidates, rng, env_kind, z_goal=z_goal).action
        state = sim.step(state, action, params, physics)
        obs = sim.render(state, params)
        trace.append(paired_geom_distance(state, g_state))
    g_mask = sim.segment(g_obs, sim.canonical_render_params(env_kind, size))
    inter = pixel_intersection(sim.segment(obs, params), g_mask)
    return EpisodeReport(trace, min(trace), trace[-1], max_steps, int(seed), time.perf_counter() - t0, inter, fallbacks)


# ---------------------------------------------------------------------------
# benchmark tables
# ---------------------------------------------------------------------------
def _fmean_std(values):
    # exact summation makes the result independent of episode order
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)
    return mean, std


def episode_seeds(seed, goal_index, n):
    ss = np.random.SeedSequence([seed, goal_index])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n)]


@dataclass
class ResultRow:
    method: str
    goal: str
    mean_best: float
    std_best: float
    mean_final: float
    std_final: float
    n: int
    seeds: list

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ResultsTable:
    env_kind: str
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash(self.config)

    def row(self, method, goal):
        for r in self.rows:
            if r.method == method and r.goal == goal:
                return r
        raise KeyError(f"no result for method {method!r} on goal {goal!r}")

    def to_json(self):
        return json.dumps({"env_kind": self.env_kind, "config": self.config, "config_hash": self.config_hash,
                           "rows": [r.as_dict() for r in self.rows]}, indent=2, sort_keys=True)

    def to_tsv(self):
        head = "method\tgoal\tmean_best\tstd_best\tmean_final\tstd_final\tn"
        lines = [f"{r.method}\t{r.goal}\t{r.mean_best:.6f}\t{r.std_best:.6f}\t{r.mean_final:.6f}\t"
                 f"{r.std_final:.6f}\t{r.n}" for r in self.rows]
        return "\n".join([head] + lines) + "\n"

    def format_text(self):
        w = max([len(r.method) for r in self.rows] + [6])
        out = [f"{'method':<{w}}  {'goal':<10}  {'best':>15}  {'final':>15}  n"]
        for r in self.rows:
            out.append(f"{r.method:<{w}}  {r.goal:<10}  {r.mean_best:7.3f} ± {r.std_best:5.3f}  "
                       f"{r.mean_final:7.3f} ± {r.std_final:5.3f}  {r.n}")
        return "\n".join(out)


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:10]


def benchmark(env_kind, methods, goals, n_episodes=50, max_steps=None, seed=0, n_candidates=100, size=32,
              randomize=False, physics=sim.DEFAULT_PHYSICS, config=None):
    """Mean and std of best and final distance for every (method, goal).

    ``methods`` maps a row name to a latent model or ``"random"``; a random
    row is added when absent.  Episode ``e`` of a goal uses the same seed
    (and, for random goals, the same goal) for every method.
    """
    methods = dict(methods)
    methods.setdefault("random", "random")
    for name, m in methods.items():
        if m is None:
            raise ValueError(f"method {name!r} has no checkpoint; train one first")
    table = ResultsTable(env_kind, config=dict(config or {}, env_kind=env_kind, goals=list(goals),
                                               n_episodes=n_episodes, max_steps=max_steps, seed=seed,
                                               n_candidates=n_candidates, size=size, randomize=randomize))
    for gi, goal in enumerate(goals):
        seeds = episode_seeds(seed, gi, n_episodes)
        for name, model in methods.items():
            best, final = [], []
            for s in seeds:
                spec = GoalSpec(env_kind, goal, s, size)
                rep = run_episode(env_kind, model, spec, max_steps, s, randomize, n_candidates, size, physics)
                best.append(rep.best)
                final.append(rep.final)
            mb, sb = _fmean_std(best)
            mf, sf = _fmean_std(final)
            table.rows.append(ResultRow(name, goal, mb, sb, mf, sf, n_episodes, seeds))
            log.info("%s / %s: best %.3f ± %.3f, final %.3f ± %.3f", name, goal, mb, sb, mf, sf)
    return table


ABLATION_FORWARD = ("linear", "mlp", "mlp_linear")
ABLATION_SIMILARITY = ("e2", "logbilinear")


def ablate(data, train_config, goals=("random",), forward_variants=ABLATION_FORWARD,
           similarities=ABLATION_SIMILARITY, pretrained=None, **bench_kwargs):
    """Train one CFM model per (forward model, similarity) cell and benchmark all cells.

    Cells are named ``"<forward>/<similarity>"``; models already in
    ``pretrained`` under that name are used as given.  Returns
    ``(table, {cell name: checkpoint})``.
    """
    import dataclasses

    from .models import train

    models = {}
    for fv in forward_variants:
        for simid in similarities:
            name = f"{fv}/{simid}"
            if pretrained and name in pretrained:
                models[name] = pretrained[name]
                continue
            cfg = dataclasses.replace(train_config, objective="cfm", forward_variant=fv, similarity=simid)
            log.info("training ablation cell %s", name)
            models[name], _ = train(data, cfg)
    table = benchmark(data.env_kind, models, goals, size=data.image_size,
                      config={"train": train_config.to_dict(), "grid": [list(forward_variants), list(similarities)]},
                      **bench_kwargs)
    return table, models
