"""Desk-scale deformable-object simulators with top-down rendering.

Three environments share one interface:

* ``pointmass`` -- a single disk moved directly by a 2-D delta.
* ``rope``      -- a 25-particle planar chain.
* ``cloth``     -- a 9x9 particle grid with structural and shear springs,
                   gravity along -z and the table plane at z = 0.

Rope and cloth actions are pick-and-place: the particle nearest to the pick
point is grabbed, dragged along a straight line (cloth may be lifted on the
way), released, and the object is left to settle.  The dynamics are a
tension-only mass-spring system integrated with semi-implicit Euler, with
linear drag, Coulomb friction against the table and an inextensibility
projection that caps every rope link at ``stretch_limit * rest_length``.

Positions live in the unit square workspace; image pixel ``(row, col)`` of an
``S x S`` render covers ``x in [col/S, (col+1)/S)`` and ``y in [row/S, (row+1)/S)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numba import njit

ENV_KINDS = ("pointmass", "rope", "cloth")
N_PARTICLES = {"pointmass": 1, "rope": 25, "cloth": 81}
ACTION_DIMS = {"pointmass": 2, "rope": 4, "cloth": 5}
DELTA_DIMS = {"pointmass": 2, "rope": 2, "cloth": 3}
IMAGE_SIZES = (16, 32, 64)
CLOTH_SIDE = 9

SEG_THRESHOLD = 60.0
CANONICAL_BACKGROUND = (40, 40, 40)
PALETTE = ((235, 200, 60), (70, 160, 235), (225, 85, 85), (120, 220, 120))
CANONICAL_COLOR = {"rope": PALETTE[0], "cloth": PALETTE[1], "pointmass": PALETTE[2]}
# particle radius in pixels of a 32 x 32 render; scaled with the image size
CANONICAL_RADIUS_32 = {"pointmass": 2.0, "rope": 1.5, "cloth": 1.2}


def _check_kind(kind):
    if kind not in ENV_KINDS:
        raise ValueError(f"unknown env kind {kind!r}; expected one of {ENV_KINDS}")


@dataclass(frozen=True)
class PhysicsConfig:
    rope_rest_length: float = 0.025
    cloth_rest_length: float = 0.055
    stiffness: float = 1000.0
    drag: float = 5.0  # linear velocity damping, 1/s
    friction: float = 20.0  # Coulomb deceleration on the table, units/s^2
    mass: float = 1.0
    gravity: float = 10.0
    dt: float = 0.01
    drag_substeps: int = 40
    relax_substeps: int = 60
    stretch_limit: float = 1.1
    grab_radius: float = 3.0 / 32.0
    move_scale: float = 5.0 / 64.0
    lift_height: float = 0.1
    cloth_projection_iters: int = 8
    pointmass_delta_scale: float = 0.1
    reset_actions: dict = field(default_factory=lambda: {"pointmass": 0, "rope": 120, "cloth": 50})

    def rest_length(self, kind):
        return self.cloth_rest_length if kind == "cloth" else self.rope_rest_length


DEFAULT_PHYSICS = PhysicsConfig()


@dataclass
class EnvState:
    kind: str
    pos: np.ndarray  # (N, 3)
    vel: np.ndarray  # (N, 3)

    def __post_init__(self):
        _check_kind(self.kind)
        self.pos = np.asarray(self.pos, dtype=np.float64).reshape(-1, 3)
        self.vel = np.asarray(self.vel, dtype=np.float64).reshape(-1, 3)
        n = N_PARTICLES[self.kind]
        if self.pos.shape != (n, 3) or self.vel.shape != (n, 3):
            raise ValueError(f"{self.kind} state needs {n} particles, got {self.pos.shape}")

    @property
    def particles(self):
        return self.pos

    def copy(self):
        return EnvState(self.kind, self.pos.copy(), self.vel.copy())

    def equals(self, other):
        return (
            self.kind == other.kind
            and self.pos.tobytes() == other.pos.tobytes()
            and self.vel.tobytes() == other.vel.tobytes()
        )


@dataclass(frozen=True)
class PickPlaceAction:
    """Pick point (normalised image coordinates) plus a delta in [-1, 1]^k.

    Pointmass actions have no pick point.
    """

    kind: str
    pick: tuple | None
    delta: tuple

    def __post_init__(self):
        _check_kind(self.kind)
        delta = tuple(float(d) for d in self.delta)
        if len(delta) != DELTA_DIMS[self.kind]:
            raise ValueError(f"{self.kind} delta needs {DELTA_DIMS[self.kind]} components, got {len(delta)}")
        if any(not -1.0 <= d <= 1.0 for d in delta):
            raise ValueError(f"delta components must lie in [-1, 1], got {delta}")
        object.__setattr__(self, "delta", delta)
        if self.kind == "pointmass":
            if self.pick is not None:
                raise ValueError("pointmass actions take no pick point")
            return
        if self.pick is None or len(self.pick) != 2:
            raise ValueError(f"{self.kind} actions need a 2-D pick point")
        pick = tuple(float(p) for p in self.pick)
        if any(not 0.0 <= p <= 1.0 for p in pick):
            raise ValueError(f"pick coordinates must lie in [0, 1], got {pick}")
        object.__setattr__(self, "pick", pick)

    @property
    def dim(self):
        return ACTION_DIMS[self.kind]

    def as_vector(self):
        head = () if self.pick is None else self.pick
        return np.array(head + self.delta, dtype=np.float64)

    @classmethod
    def from_vector(cls, kind, vec):
        vec = [float(v) for v in np.asarray(vec).reshape(-1)]
        if len(vec) != ACTION_DIMS[kind]:
            raise ValueError(f"{kind} actions have {ACTION_DIMS[kind]} dims, got {len(vec)}")
        if kind == "pointmass":
            return cls(kind, None, tuple(vec))
        return cls(kind, tuple(vec[:2]), tuple(vec[2:]))


@dataclass(frozen=True)
class JitterConfig:
    """Ranges sampled uniformly when domain randomisation is on."""

    background: tuple = (0.0, 90.0)  # per channel
    object_color: tuple = (0.0, 255.0)  # per channel
    brightness: tuple = (0.75, 1.25)
    noise_std: tuple = (0.0, 14.0)
    radius_scale: tuple = (0.85, 1.25)
    stiffness: tuple = (0.7, 1.3)
    damping: tuple = (0.7, 1.3)
    mass: tuple = (0.7, 1.3)
    friction: tuple = (0.7, 1.3)

    def validate(self):
        for f in dataclasses.fields(self):
            lo, hi = getattr(self, f.name)
            if lo > hi:
                raise ValueError(f"jitter range {f.name} is empty: {(lo, hi)}")
        if self.noise_std[1] >= SEG_THRESHOLD / 4:
            raise ValueError("noise std must stay below a quarter of the segmentation threshold")
        if self.brightness[0] <= 0 or self.mass[0] <= 0:
            raise ValueError("brightness and mass multipliers must be positive")


DEFAULT_JITTER = JitterConfig()


@dataclass(frozen=True)
class RenderParams:
    size: int
    background: tuple
    object_color: tuple
    radius: float  # pixels at this image size
    brightness: float = 1.0
    noise_std: float = 0.0
    noise_seed: int = 0
    stiffness_mult: float = 1.0
    damping_mult: float = 1.0
    mass_mult: float = 1.0
    friction_mult: float = 1.0

    def __post_init__(self):
        if self.size not in IMAGE_SIZES:
            raise ValueError(f"image size must be one of {IMAGE_SIZES}, got {self.size}")
        if self.radius < 1.0:
            raise ValueError("particle radius must be at least one pixel")

    def effective_colors(self):
        bg = np.clip(np.asarray(self.background, dtype=np.float64) * self.brightness, 0, 255)
        obj = np.clip(np.asarray(self.object_color, dtype=np.float64) * self.brightness, 0, 255)
        return bg, obj

    def as_array(self):
        return np.array(
            [self.size, *self.background, *self.object_color, self.radius, self.brightness, self.noise_std,
             self.noise_seed, self.stiffness_mult, self.damping_mult, self.mass_mult, self.friction_mult],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr):
        a = [float(x) for x in arr]
        return cls(
            size=int(a[0]), background=tuple(a[1:4]), object_color=tuple(a[4:7]), radius=a[7], brightness=a[8],
            noise_std=a[9], noise_seed=int(a[10]), stiffness_mult=a[11], damping_mult=a[12], mass_mult=a[13],
            friction_mult=a[14],
        )


RENDER_PARAM_FIELDS = 15


def _f32(x):
    return float(np.float32(x))


def canonical_render_params(kind, size=32):
    _check_kind(kind)
    return RenderParams(
        size=size,
        background=tuple(float(c) for c in CANONICAL_BACKGROUND),
        object_color=tuple(float(c) for c in CANONICAL_COLOR[kind]),
        radius=_f32(max(1.0, CANONICAL_RADIUS_32[kind] * size / 32.0)),
    )


def sample_render_params(rng, randomize, jitter=DEFAULT_JITTER, kind="rope", size=32):
    """Canonical parameters, or a uniform draw from ``jitter`` when ``randomize``.

    Object and background colours are rejection-sampled until their rendered
    (brightness-scaled) colours are at least twice the segmentation threshold
    apart.
    """
    base = canonical_render_params(kind, size)
    if not randomize:
        return base
    jitter.validate()

    # every value is rounded to float32 so the CFMD file stores it exactly
    def u(rng_range):
        return _f32(rng.uniform(*rng_range))

    brightness = u(jitter.brightness)
    for _ in range(10_000):
        bg = tuple(_f32(x) for x in rng.uniform(*jitter.background, size=3))
        obj = tuple(_f32(x) for x in rng.uniform(*jitter.object_color, size=3))
        bg_eff = np.clip(np.array(bg) * brightness, 0, 255)
        obj_eff = np.clip(np.array(obj) * brightness, 0, 255)
        if np.linalg.norm(bg_eff - obj_eff) >= 2 * SEG_THRESHOLD:
            break
    else:  # pragma: no cover - unreachable for sane ranges
        raise RuntimeError("could not sample separable object/background colours")
    return RenderParams(
        size=size,
        background=bg,
        object_color=obj,
        radius=_f32(max(1.0, base.radius * u(jitter.radius_scale))),
        brightness=brightness,
        noise_std=u(jitter.noise_std),
        noise_seed=int(rng.integers(0, 2**24)),
        stiffness_mult=u(jitter.stiffness),
        damping_mult=u(jitter.damping),
        mass_mult=u(jitter.mass),
        friction_mult=u(jitter.friction),
    )


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------
def _rope_edges():
    i = np.arange(N_PARTICLES["rope"] - 1)
    return np.stack([i, i + 1], axis=1)


def _cloth_edges():
    n = CLOTH_SIDE
    idx = np.arange(n * n).reshape(n, n)
    structural = np.concatenate([
        np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], 1),
        np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], 1),
    ])
    shear = np.concatenate([
        np.stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()], 1),
        np.stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()], 1),
    ])
    return structural, shear


ROPE_EDGES = _rope_edges()
CLOTH_STRUCTURAL, CLOTH_SHEAR = _cloth_edges()


def render_edges(kind):
    """Index pairs drawn as capsules by :func:`render`."""
    if kind == "rope":
        return ROPE_EDGES
    if kind == "cloth":
        return CLOTH_STRUCTURAL
    return np.zeros((0, 2), dtype=np.int64)


def _spring_table(kind, physics):
    rest = physics.rest_length(kind)
    if kind == "rope":
        edges = ROPE_EDGES
        rest_e = np.full(len(edges), rest)
    else:
        edges = np.concatenate([CLOTH_STRUCTURAL, CLOTH_SHEAR])
        rest_e = np.concatenate([np.full(len(CLOTH_STRUCTURAL), rest), np.full(len(CLOTH_SHEAR), rest * np.sqrt(2))])
    return edges[:, 0].copy(), edges[:, 1].copy(), rest_e


def max_spring_acceleration(kind, physics, params):
    """Upper bound on spring acceleration of any particle with links within the stretch limit."""
    k = physics.stiffness * params.stiffness_mult
    m = physics.mass * params.mass_mult
    rest = physics.rest_length(kind)
    degree = 2 if kind == "rope" else 8
    diag = np.sqrt(2) if kind == "cloth" else 1.0
    return degree * k * (physics.stretch_limit - 1.0) * rest * diag / m


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------
@njit(cache=True)
def _integrate(pos, vel, ei, ej, rest_e, k, drag, mu, mass, g, dt, grab, path, chain, limit, proj_iters, ke):
    n = pos.shape[0]
    n_sub = ke.shape[0]
    force = np.zeros((n, 3))
    for s in range(n_sub):
        force[:, :] = 0.0
        for e in range(ei.shape[0]):
            i = ei[e]
            j = ej[e]
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            length = np.sqrt(dx * dx + dy * dy + dz * dz)
            if length > rest_e[e]:
                f = k * (length - rest_e[e]) / length
                force[i, 0] += f * dx
                force[i, 1] += f * dy
                force[i, 2] += f * dz
                force[j, 0] -= f * dx
                force[j, 1] -= f * dy
                force[j, 2] -= f * dz
        shrink = max(0.0, 1.0 - drag * dt)
        for p in range(n):
            if p == grab:
                continue
            on_table = pos[p, 2] <= 1e-12
            vx = (vel[p, 0] + dt * force[p, 0] / mass) * shrink
            vy = (vel[p, 1] + dt * force[p, 1] / mass) * shrink
            vz = (vel[p, 2] + dt * (force[p, 2] / mass - g)) * shrink
            if on_table:
                if vz < 0.0:
                    vz = 0.0
                speed = np.sqrt(vx * vx + vy * vy)
                dec = mu * dt
                if speed <= dec:
                    vx = 0.0
                    vy = 0.0
                else:
                    r = 1.0 - dec / speed
                    vx *= r
                    vy *= r
            vel[p, 0] = vx
            vel[p, 1] = vy
            vel[p, 2] = vz
            pos[p, 0] += dt * vx
            pos[p, 1] += dt * vy
            pos[p, 2] += dt * vz
            if pos[p, 2] < 0.0:
                pos[p, 2] = 0.0
                vel[p, 2] = 0.0
        if grab >= 0:
            for c in range(3):
                vel[grab, c] = (path[s, c] - pos[grab, c]) / dt
                pos[grab, c] = path[s, c]
        # inextensibility
        if chain:
            anchor = grab if grab >= 0 else 0
            for p in range(anchor + 1, n):
                _pull(pos, p, p - 1, limit[p - 1])
            for p in range(anchor - 1, -1, -1):
                _pull(pos, p, p + 1, limit[p])
        else:
            for _ in range(proj_iters):
                for e in range(ei.shape[0]):
                    i = ei[e]
                    j = ej[e]
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    dz = pos[j, 2] - pos[i, 2]
                    length = np.sqrt(dx * dx + dy * dy + dz * dz)
                    if length > limit[e]:
                        excess = (length - limit[e]) / length
                        wi = 0.0 if i == grab else 1.0
                        wj = 0.0 if j == grab else 1.0
                        if wi + wj == 0.0:
                            continue
                        ci = excess * wi / (wi + wj)
                        cj = excess * wj / (wi + wj)
                        pos[i, 0] += ci * dx
                        pos[i, 1] += ci * dy
                        pos[i, 2] += ci * dz
                        pos[j, 0] -= cj * dx
                        pos[j, 1] -= cj * dy
                        pos[j, 2] -= cj * dz
        # containment: clamping to a box never lengthens a link
        for p in range(n):
            for c in range(2):
                if pos[p, c] < 0.0:
                    pos[p, c] = 0.0
                    vel[p, c] = 0.0
                elif pos[p, c] > 1.0:
                    pos[p, c] = 1.0
                    vel[p, c] = 0.0
            if pos[p, 2] < 0.0:
                pos[p, 2] = 0.0
        total = 0.0
        for p in range(n):
            total += 0.5 * mass * (vel[p, 0] ** 2 + vel[p, 1] ** 2 + vel[p, 2] ** 2)
        ke[s] = total


@njit(cache=True)
def _pull(pos, p, q, limit):
    # move particle p towards q until |p - q| <= limit
    dx = pos[p, 0] - pos[q, 0]
    dy = pos[p, 1] - pos[q, 1]
    dz = pos[p, 2] - pos[q, 2]
    length = np.sqrt(dx * dx + dy * dy + dz * dz)
    if length > limit:
        r = limit * (1.0 - 1e-12) / length
        pos[p, 0] = pos[q, 0] + dx * r
        pos[p, 1] = pos[q, 1] + dy * r
        pos[p, 2] = pos[q, 2] + dz * r


def _physics_args(kind, physics, params):
    ei, ej, rest_e = _spring_table(kind, physics)
    mass = physics.mass * params.mass_mult
    mu = physics.friction * params.friction_mult
    # keep friction above the largest in-limit spring pull so a released
    # object cannot convert stored spring energy back into motion
    mu = max(mu, max_spring_acceleration(kind, physics, params))
    return dict(
        ei=ei, ej=ej, rest_e=rest_e,
        k=physics.stiffness * params.stiffness_mult,
        drag=physics.drag * params.damping_mult,
        mu=mu, mass=mass,
        g=physics.gravity if kind == "cloth" else 0.0,
        dt=physics.dt,
        chain=kind == "rope",
        limit=rest_e * physics.stretch_limit,
        proj_iters=physics.cloth_projection_iters,
    )


def relax(state, params, physics=DEFAULT_PHYSICS, n_substeps=None, return_energy=False):
    """Free (ungrabbed) substeps; optionally return the kinetic energy trace.

    The trace starts with the energy before the first substep.
    """
    out = state.copy()
    if state.kind == "pointmass":
        return (out, np.zeros(1)) if return_energy else out
    n = physics.relax_substeps if n_substeps is None else n_substeps
    args = _physics_args(state.kind, physics, params)
    ke = np.zeros(n)
    _integrate(out.pos, out.vel, grab=-1, path=np.zeros((1, 3)), ke=ke, **args)
    if return_energy:
        ke0 = 0.5 * args["mass"] * float(np.sum(state.vel**2))
        return out, np.concatenate([[ke0], ke])
    return out


def grab_index(state, pick, physics=DEFAULT_PHYSICS):
    """Index of the particle nearest to ``pick`` within the grab radius, or -1."""
    d = np.hypot(state.pos[:, 0] - pick[0], state.pos[:, 1] - pick[1])
    i = int(np.argmin(d))
    return i if d[i] <= physics.grab_radius else -1


def step(state, action, params, physics=DEFAULT_PHYSICS):
    """Apply one pick-and-place action and return the settled next state."""
    if action.kind != state.kind:
        raise ValueError(f"action for {action.kind} applied to {state.kind} state")
    if state.kind == "pointmass":
        out = state.copy()
        out.pos[0, :2] = np.clip(out.pos[0, :2] + physics.pointmass_delta_scale * np.asarray(action.delta), 0.0, 1.0)
        out.vel[:] = 0.0
        return out
    g = grab_index(state, action.pick, physics)
    if g < 0:
        return relax(state, params, physics)
    out = state.copy()
    T = physics.drag_substeps
    start = out.pos[g].copy()
    target = start.copy()
    target[:2] = np.clip(start[:2] + physics.move_scale * np.asarray(action.delta[:2]), 0.0, 1.0)
    s = np.arange(1, T + 1) / T
    path = start[None, :] + s[:, None] * (target - start)[None, :]
    if state.kind == "cloth":
        lift = physics.lift_height * max(action.delta[2], 0.0)
        path[:, 2] = start[2] + lift * np.sin(np.pi * s)
    args = _physics_args(state.kind, physics, params)
    _integrate(out.pos, out.vel, grab=g, path=path, ke=np.zeros(T), **args)
    return relax(out, params, physics)


def canonical_state(kind, physics=DEFAULT_PHYSICS):
    """Straight rope / flat cloth / pointmass, centred in the workspace."""
    _check_kind(kind)
    n = N_PARTICLES[kind]
    pos = np.zeros((n, 3))
    if kind == "pointmass":
        pos[0, :2] = 0.5
    elif kind == "rope":
        half = (n - 1) * physics.rope_rest_length / 2
        pos[:, 0] = np.linspace(0.5 - half, 0.5 + half, n)
        pos[:, 1] = 0.5
    else:
        half = (CLOTH_SIDE - 1) * physics.cloth_rest_length / 2
        coords = np.linspace(0.5 - half, 0.5 + half, CLOTH_SIDE)
        yy, xx = np.meshgrid(coords, coords, indexing="ij")
        pos[:, 0] = xx.ravel()
        pos[:, 1] = yy.ravel()
    return EnvState(kind, pos, np.zeros((n, 3)))


def random_particle_action(state, rng):
    """Random action whose pick lands exactly on a random particle."""
    kind = state.kind
    delta = tuple(rng.uniform(-1.0, 1.0, size=DELTA_DIMS[kind]))
    if kind == "pointmass":
        return PickPlaceAction(kind, None, delta)
    i = int(rng.integers(N_PARTICLES[kind]))
    return PickPlaceAction(kind, tuple(state.pos[i, :2]), delta)


def reset(kind, seed, randomize=False, size=32, physics=DEFAULT_PHYSICS, jitter=DEFAULT_JITTER, n_init=None):
    """Sample a start state; returns ``(state, obs, params)``.

    Rope and cloth start from the canonical configuration perturbed by
    ``n_init`` random actions (``physics.reset_actions`` by default); the
    pointmass is placed uniformly at random.
    """
    _check_kind(kind)
    root = np.random.default_rng(seed)
    param_rng, state_rng = root.spawn(2)
    params = sample_render_params(param_rng, randomize, jitter, kind, size)
    state = canonical_state(kind, physics)
    if kind == "pointmass":
        state.pos[0, :2] = state_rng.uniform(0.05, 0.95, size=2)
    else:
        n = physics.reset_actions[kind] if n_init is None else n_init
        for _ in range(n):
            state = step(state, random_particle_action(state, state_rng), params, physics)
    return state, render(state, params), params


# ---------------------------------------------------------------------------
# rendering / segmentation
# ---------------------------------------------------------------------------
def _pixel_centres(size):
    c = (np.arange(size) + 0.5) / size
    return np.meshgrid(c, c, indexing="ij")  # (ys, xs)


def coverage_mask(state, params):
    """Boolean (S, S) mask of pixels whose centre lies under the object."""
    S = params.size
    ys, xs = _pixel_centres(S)
    r = params.radius / S
    px = state.pos[:, 0]
    py = state.pos[:, 1]
    d2 = (xs[..., None] - px) ** 2 + (ys[..., None] - py) ** 2
    mask = (d2 <= r * r).any(axis=-1)
    edges = render_edges(state.kind)
    if len(edges):
        ax, ay = px[edges[:, 0]], py[edges[:, 0]]
        bx, by = px[edges[:, 1]], py[edges[:, 1]]
        ex, ey = bx - ax, by - ay
        len2 = np.maximum(ex * ex + ey * ey, 1e-18)
        t = np.clip(((xs[..., None] - ax) * ex + (ys[..., None] - ay) * ey) / len2, 0.0, 1.0)
        qx = ax + t * ex - xs[..., None]
        qy = ay + t * ey - ys[..., None]
        mask |= (qx * qx + qy * qy <= r * r).any(axis=-1)
    return mask


def render(state, params):
    """Top-down orthographic render to an (S, S, 3) uint8 image."""
    mask = coverage_mask(state, params)
    bg, obj = params.effective_colors()
    img = np.where(mask[..., None], obj, bg)
    if params.noise_std > 0:
        noise_rng = np.random.default_rng(params.noise_seed)
        # truncated at two standard deviations per channel so noise can never
        # carry a pixel across the segmentation threshold
        noise = np.clip(noise_rng.normal(0.0, params.noise_std, size=img.shape), -2 * params.noise_std, 2 * params.noise_std)
        img = img + noise
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def segment(obs, params, threshold=SEG_THRESHOLD):
    """Foreground mask: RGB distance from the rendered background above ``threshold``."""
    bg, _ = params.effective_colors()
    d = np.linalg.norm(np.asarray(obs, dtype=np.float64) - bg, axis=-1)
    return d > threshold


def pixel_to_pick(row, col, size):
    """Normalised image coordinates ``(u, v)`` of a pixel centre."""
    return ((col + 0.5) / size, (row + 0.5) / size)


def max_link_ratio(state, physics=DEFAULT_PHYSICS):
    """Largest rope link length divided by the rest length."""
    d = np.linalg.norm(np.diff(state.pos, axis=0), axis=1)
    return float(d.max() / physics.rope_rest_length)
