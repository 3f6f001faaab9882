"""Random-perturbation datasets, the CFMD file format and minibatching.

A dataset holds ``n_traj`` trajectories of ``traj_len`` actions each.  Every
trajectory stores its render parameters, ``traj_len + 1`` uint8 images,
``traj_len`` actions and the ground-truth particle states.  The states are
for evaluation only: training code goes through :meth:`Dataset.transitions`,
which does not expose them.

CFMD layout (little-endian)::

    b"CFMD" | u32 version | u8 env_kind | u16 H | u16 W | u8 action_dim
    | u32 n_traj | u32 traj_len
    then per trajectory:
    f32[15] render params | u8[(L+1)*H*W*3] images | f32[L*action_dim] actions
    | f32[(L+1)*N*6] states (position xyz, velocity xyz per particle)
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import sim
from .errors import BadMagicError, FormatError, TruncatedFileError, VersionMismatchError

log = logging.getLogger(__name__)

MAGIC = b"CFMD"
VERSION = 1
_HEADER = struct.Struct("<4sIBHHBII")
_KIND_CODES = {"pointmass": 0, "rope": 1, "cloth": 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def normalize_images(images):
    """uint8 (..., H, W, 3) -> float32 (..., 3, H, W) in [-1, 1]."""
    x = np.asarray(images, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)
    return np.moveaxis(x, -1, -3)


def normalize_actions(actions):
    """Map pick coordinates from [0, 1] to [-1, 1]; deltas are already there.

    Pick-and-place vectors start with the (u, v) pick; pointmass actions are
    bare 2-d deltas and pass through unchanged.
    """
    a = np.array(actions, dtype=np.float64)
    if a.shape[-1] > 2:
        a[..., :2] = 2.0 * a[..., :2] - 1.0
    return a


def denormalize_images(x):
    """Inverse of :func:`normalize_images` (rounds to the 8-bit lattice)."""
    img = np.moveaxis(np.asarray(x, dtype=np.float64), -3, -1)
    return np.clip(np.rint((img + 1.0) * 127.5), 0, 255).astype(np.uint8)


@dataclass
class Dataset:
    env_kind: str
    params: np.ndarray  # (n_traj, 15) float32
    images: np.ndarray  # (n_traj, L+1, H, W, 3) uint8
    actions: np.ndarray  # (n_traj, L, action_dim) float32
    _states: np.ndarray  # (n_traj, L+1, N, 6) float32, evaluation only
    resampled_params: int = 0

    def __post_init__(self):
        n, lp1 = self.images.shape[:2]
        if self.actions.shape[:2] != (n, lp1 - 1):
            raise ValueError("need exactly one more observation than actions per trajectory")
        if self.actions.shape[2] != sim.ACTION_DIMS[self.env_kind]:
            raise ValueError(f"{self.env_kind} actions have {sim.ACTION_DIMS[self.env_kind]} dims")

    @property
    def n_traj(self):
        return self.images.shape[0]

    @property
    def traj_len(self):
        return self.actions.shape[1]

    @property
    def image_size(self):
        return self.images.shape[2]

    @property
    def action_dim(self):
        return self.actions.shape[2]

    @property
    def n_transitions(self):
        return self.n_traj * self.traj_len

    def render_params(self, i):
        return sim.RenderParams.from_array(self.params[i])

    def evaluation_states(self, i):
        """Ground-truth states of trajectory ``i`` (never used for training)."""
        kind = self.env_kind
        return [sim.EnvState(kind, s[:, :3], s[:, 3:]) for s in self._states[i].astype(np.float64)]

    def transitions(self):
        return Transitions(self.env_kind, self.images, self.actions)

    def equals(self, other):
        return (
            self.env_kind == other.env_kind
            and all(
                a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in [(self.params, other.params), (self.images, other.images),
                             (self.actions, other.actions), (self._states, other._states)]
            )
        )


@dataclass(frozen=True)
class Transitions:
    """Training view of a dataset: images and actions only."""

    env_kind: str
    images: np.ndarray
    actions: np.ndarray

    @property
    def n_transitions(self):
        return self.actions.shape[0] * self.actions.shape[1]

    @property
    def action_dim(self):
        return self.actions.shape[2]

    @property
    def image_size(self):
        return self.images.shape[2]

    def gather(self, flat_idx):
        L = self.actions.shape[1]
        traj, t = np.divmod(np.asarray(flat_idx), L)
        return Batch(
            obs=normalize_images(self.images[traj, t]),
            actions=self.actions[traj, t].astype(np.float32),
            next_obs=normalize_images(self.images[traj, t + 1]),
            index=np.stack([traj, t], axis=1),
        )


@dataclass
class Batch:
    obs: np.ndarray  # (B, 3, H, W) float32 in [-1, 1]
    actions: np.ndarray  # (B, action_dim)
    next_obs: np.ndarray
    index: np.ndarray  # (B, 2) trajectory / step provenance

    def __len__(self):
        return len(self.actions)


def _as_transitions(data):
    return data.transitions() if isinstance(data, Dataset) else data


def sample_batch(data, batch_size, rng):
    """``batch_size`` distinct transitions drawn uniformly at random."""
    data = _as_transitions(data)
    if batch_size < 2:
        raise ValueError("batches need at least two rows so each row has negatives")
    if data.n_transitions < batch_size:
        raise ValueError(f"dataset holds {data.n_transitions} transitions, fewer than batch size {batch_size}")
    return data.gather(rng.choice(data.n_transitions, size=batch_size, replace=False))


def epoch_batches(data, batch_size, rng):
    """Shuffle once and yield full batches; the remainder is dropped."""
    data = _as_transitions(data)
    if batch_size < 2:
        raise ValueError("batches need at least two rows so each row has negatives")
    if data.n_transitions < batch_size:
        raise ValueError(f"dataset holds {data.n_transitions} transitions, fewer than batch size {batch_size}")
    order = rng.permutation(data.n_transitions)
    for start in range(0, len(order) - batch_size + 1, batch_size):
        yield data.gather(order[start : start + batch_size])


def random_action(kind, mask, rng, size):
    """Pick uniform over foreground pixels, delta uniform in [-1, 1]^k."""
    delta = tuple(rng.uniform(-1.0, 1.0, size=sim.DELTA_DIMS[kind]))
    if kind == "pointmass":
        return sim.PickPlaceAction(kind, None, delta)
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        raise ValueError("cannot sample a pick point from an empty mask")
    j = int(rng.integers(len(rows)))
    return sim.PickPlaceAction(kind, sim.pixel_to_pick(rows[j], cols[j], size), delta)


def collect_random(env_kind, n_traj, traj_len, seed, randomize=False, size=32,
                   physics=sim.DEFAULT_PHYSICS, jitter=sim.DEFAULT_JITTER, n_init=None):
    """Roll out the random pick-and-place policy from ``n_traj`` reset states.

    Trajectory ``i`` uses the ``i``-th child of ``SeedSequence(seed)`` so the
    result is independent of collection order.
    """
    if n_traj < 1 or traj_len < 1:
        raise ValueError("n_traj and traj_len must be >= 1")
    n_part = sim.N_PARTICLES[env_kind]
    adim = sim.ACTION_DIMS[env_kind]
    params = np.zeros((n_traj, sim.RENDER_PARAM_FIELDS), np.float32)
    images = np.zeros((n_traj, traj_len + 1, size, size, 3), np.uint8)
    actions = np.zeros((n_traj, traj_len, adim), np.float32)
    states = np.zeros((n_traj, traj_len + 1, n_part, 6), np.float32)
    resampled = 0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_traj)):
        reset_seq, act_seq = child.spawn(2)
        state, obs, rp = sim.reset(env_kind, reset_seq, randomize, size, physics, jitter, n_init)
        rng = np.random.default_rng(act_seq)
        for t in range(traj_len + 1):
            mask = sim.segment(obs, rp)
            while env_kind != "pointmass" and not mask.any():
                resampled += 1
                log.warning("empty segmentation in trajectory %d step %d; resampling render params", i, t)
                rp = sim.sample_render_params(rng, randomize, jitter, env_kind, size)
                obs = sim.render(state, rp)
                mask = sim.segment(obs, rp)
            images[i, t] = obs
            states[i, t, :, :3] = state.pos
            states[i, t, :, 3:] = state.vel
            if t == traj_len:
                break
            action = random_action(env_kind, mask, rng, size)
            actions[i, t] = action.as_vector()
            # replay from the stored float32 action so files reproduce exactly
            action = sim.PickPlaceAction.from_vector(env_kind, actions[i, t].astype(np.float64))
            state = sim.step(state, action, rp, physics)
            obs = sim.render(state, rp)
        params[i] = rp.as_array()
    return Dataset(env_kind, params, images, actions, states, resampled)


# ---------------------------------------------------------------------------
# CFMD serialisation
# ---------------------------------------------------------------------------
def save(dataset):
    S = dataset.image_size
    header = _HEADER.pack(MAGIC, VERSION, _KIND_CODES[dataset.env_kind], S, S, dataset.action_dim,
                          dataset.n_traj, dataset.traj_len)
    chunks = [header]
    for i in range(dataset.n_traj):
        chunks.append(dataset.params[i].astype("<f4").tobytes())
        chunks.append(np.ascontiguousarray(dataset.images[i]).tobytes())
        chunks.append(dataset.actions[i].astype("<f4").tobytes())
        chunks.append(dataset._states[i].astype("<f4").tobytes())
    return b"".join(chunks)


def load(buf):
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"not a CFMD file (magic {buf[:4]!r})")
    if len(buf) < _HEADER.size:
        raise TruncatedFileError("file ends inside the header")
    _, version, kind_code, H, W, adim, n_traj, L = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionMismatchError(f"CFMD version {version}, expected {VERSION}")
    if kind_code not in _CODE_KINDS:
        raise FormatError(f"unknown env kind code {kind_code}")
    kind = _CODE_KINDS[kind_code]
    if H != W:
        raise FormatError(f"images must be square, got {H}x{W}")
    n_part = sim.N_PARTICLES[kind]
    sizes = [sim.RENDER_PARAM_FIELDS * 4, (L + 1) * H * W * 3, L * adim * 4, (L + 1) * n_part * 6 * 4]
    expected = _HEADER.size + n_traj * sum(sizes)
    if len(buf) < expected:
        raise TruncatedFileError(f"payload truncated: {len(buf)} bytes, expected {expected}")
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after payload")
    params = np.zeros((n_traj, sim.RENDER_PARAM_FIELDS), np.float32)
    images = np.zeros((n_traj, L + 1, H, W, 3), np.uint8)
    actions = np.zeros((n_traj, L, adim), np.float32)
    states = np.zeros((n_traj, L + 1, n_part, 6), np.float32)
    off = _HEADER.size
    for i in range(n_traj):
        params[i] = np.frombuffer(buf, "<f4", sim.RENDER_PARAM_FIELDS, off)
        off += sizes[0]
        images[i] = np.frombuffer(buf, np.uint8, sizes[1], off).reshape(L + 1, H, W, 3)
        off += sizes[1]
        actions[i] = np.frombuffer(buf, "<f4", L * adim, off).reshape(L, adim)
        off += sizes[2]
        states[i] = np.frombuffer(buf, "<f4", (L + 1) * n_part * 6, off).reshape(L + 1, n_part, 6)
        off += sizes[3]
    return Dataset(kind, params, images, actions, states)


def save_file(dataset, path):
    with open(path, "wb") as fh:
        fh.write(save(dataset))


def load_file(path):
    with open(path, "rb") as fh:
        return load(fh.read())
