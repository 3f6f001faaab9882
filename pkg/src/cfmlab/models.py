"""Latent dynamics models: conv encoder, latent forward models and objectives.

Three training objectives share the encoder and the forward model:

``cfm``
    InfoNCE over the batch: the predicted next latent must be closer to its
    own next-observation embedding than to the other rows' embeddings.
``autoencoder``
    pixel reconstruction of ``o_t`` through a transposed-conv decoder, plus a
    latent forward-prediction term.
``joint``
    latent forward-prediction plus an inverse model recovering ``a_t`` from
    ``(z_t, z_{t+1})``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import Dataset, Transitions, epoch_batches, normalize_actions, normalize_images
from .errors import BadMagicError, FormatError, TrainingDivergedError, TruncatedFileError, VersionMismatchError
from .nn import Tensor

log = logging.getLogger(__name__)

OBJECTIVES = ("cfm", "autoencoder", "joint")
SIMILARITIES = ("e2", "logbilinear")
FORWARD_VARIANTS = ("linear", "mlp", "mlp_linear")
LEAKY_SLOPE = 0.01


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------
def _default_pads(kernels, strides):
    # stride-1 k=3 layers keep their size, stride-2 k=4 layers halve it
    return tuple((k - s + 1) // 2 for k, s in zip(kernels, strides))


@dataclass(frozen=True)
class EncoderSpec:
    input_size: int = 32
    kernels: tuple = (3, 4, 4, 4)
    strides: tuple = (1, 2, 2, 2)
    filters: tuple = (16, 32, 32, 64)
    pads: tuple = None
    latent_dim: int = 8

    def __post_init__(self):
        for name in ("kernels", "strides", "filters"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.pads is None:
            object.__setattr__(self, "pads", _default_pads(self.kernels, self.strides))
        else:
            object.__setattr__(self, "pads", tuple(int(v) for v in self.pads))
        if not len(self.kernels) == len(self.strides) == len(self.filters) == len(self.pads):
            raise ValueError("kernels, strides, filters and pads must have equal length")

    @classmethod
    def paper(cls, latent_dim=8):
        return cls(64, (3, 4, 3, 4, 4, 4), (1, 2, 1, 2, 2, 2), (64, 64, 64, 128, 256, 256), latent_dim=latent_dim)

    @classmethod
    def desk(cls, input_size=32, latent_dim=8):
        return cls(input_size, (3, 4, 4, 4), (1, 2, 2, 2), (16, 32, 32, 64), latent_dim=latent_dim)

    def feature_shapes(self):
        """(channels, size) after each conv layer."""
        out = []
        n = self.input_size
        for k, s, f, p in zip(self.kernels, self.strides, self.filters, self.pads):
            n = nn.conv_output_size(n, k, s, p)
            if n < 1:
                raise ValueError(f"encoder collapses {self.input_size}px input to nothing")
            out.append((f, n))
        return out


@dataclass(frozen=True)
class ForwardModelSpec:
    variant: str = "mlp_linear"
    hidden: tuple = (32, 32)
    action_dim: int = 4
    latent_dim: int = 8
    condition: str = "concat"  # mlp_linear input: "concat" (z and a) or "action" (a only)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.variant not in FORWARD_VARIANTS:
            raise ValueError(f"unknown forward model variant {self.variant!r}")
        if self.condition not in ("concat", "action"):
            raise ValueError(f"unknown forward model conditioning {self.condition!r}")


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "cfm"
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    latent_dim: int = 8
    forward_variant: str = "mlp_linear"
    hidden: tuple = (32, 32)
    condition: str = "concat"
    similarity: str = "e2"
    include_positive: bool = True
    encoder: str = "desk"  # "desk" or "paper"
    lambda_forward: float = 1.0
    lambda_inverse: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVES}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"unknown similarity {self.similarity!r}; expected one of {SIMILARITIES}")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# ---------------------------------------------------------------------------
# the model container (doubles as the checkpoint)
# ---------------------------------------------------------------------------
@dataclass
class ModelCheckpoint:
    encoder: EncoderSpec
    forward: ForwardModelSpec
    objective: str
    params: nn.ParamStore
    similarity: str = "e2"
    include_positive: bool = True
    config: dict = field(default_factory=dict)
    lambda_forward: float = 1.0
    lambda_inverse: float = 1.0

    @property
    def latent_dim(self):
        return self.encoder.latent_dim

    @property
    def has_decoder(self):
        return "dec.fc.W" in self.params

    @property
    def has_inverse(self):
        return "inv.out.W" in self.params

    # array-level API used by the planner
    def encode_images(self, images):
        """uint8 (B, H, W, 3) -> (B, d) float64 latents."""
        with nn.no_grad():
            z = encode_tensor(self, Tensor(normalize_images(images).astype(self.params.dtype)))
        return z.data.astype(np.float64)

    def predict(self, z, actions):
        with nn.no_grad():
            p = self.params.dtype
            out = forward_tensor(self, Tensor(np.asarray(z, dtype=p)), Tensor(normalize_actions(actions).astype(p)))
        return out.data.astype(np.float64)

    def astype(self, dtype):
        return dataclasses.replace(self, params=self.params.astype(dtype))


def _decoder_plan(spec):
    """(c_in, c_out) per transposed conv: one per stride-2 encoder layer, reversed."""
    ins = [3] + list(spec.filters[:-1])
    plan = [(spec.filters[i], ins[i]) for i, s in enumerate(spec.strides) if s == 2]
    plan = plan[::-1]
    if plan:
        plan[-1] = (plan[-1][0], 3)
    return plan


def init_model(objective, encoder, forward, seed=0, dtype=np.float32, similarity="e2", include_positive=True,
               lambda_forward=1.0, lambda_inverse=1.0, config=None):
    """Freshly initialised parameters: Glorot-uniform weights, zero biases.

    The one exception is the ``mlp_linear`` output bias, which starts at
    ``A = I, c = 0`` so the untrained forward model is close to the identity.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if forward.latent_dim != encoder.latent_dim:
        raise ValueError("encoder and forward model latent sizes differ")
    rng = np.random.default_rng(seed)
    store = nn.ParamStore(dtype)
    c_in = 3
    shapes = encoder.feature_shapes()
    for i, (k, (f, _)) in enumerate(zip(encoder.kernels, shapes)):
        nn.init_conv(store, rng, f"enc.conv{i}", c_in, f, k)
        c_in = f
    f_last, n_last = shapes[-1]
    d = encoder.latent_dim
    nn.init_dense(store, rng, "enc.fc", f_last * n_last * n_last, d)

    a = forward.action_dim
    if forward.variant == "linear":
        nn.init_dense(store, rng, "fwd.out", d + a, d)
    else:
        n_in = a if (forward.variant == "mlp_linear" and forward.condition == "action") else d + a
        for i, h in enumerate(forward.hidden):
            nn.init_dense(store, rng, f"fwd.h{i}", n_in, h)
            n_in = h
        n_out = d * d + d if forward.variant == "mlp_linear" else d
        nn.init_dense(store, rng, "fwd.out", n_in, n_out)
        if forward.variant == "mlp_linear":
            store["fwd.out.b"].data[: d * d] = np.eye(d).ravel()

    if objective == "autoencoder":
        nn.init_dense(store, rng, "dec.fc", d, f_last * n_last * n_last)
        for i, (ci, co) in enumerate(_decoder_plan(encoder)):
            nn.init_conv_transpose(store, rng, f"dec.deconv{i}", ci, co, 4)
    if objective == "joint":
        n_in = 2 * d
        for i, h in enumerate((32, 32)):
            nn.init_dense(store, rng, f"inv.h{i}", n_in, h)
            n_in = h
        nn.init_dense(store, rng, "inv.out", n_in, a)
    return ModelCheckpoint(encoder, forward, objective, store, similarity, include_positive, dict(config or {}),
                           lambda_forward, lambda_inverse)


# ---------------------------------------------------------------------------
# forward passes (Tensor level)
# ---------------------------------------------------------------------------
def encode_tensor(ckpt, x):
    spec = ckpt.encoder
    p = ckpt.params
    if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != spec.input_size or x.shape[3] != spec.input_size:
        raise ValueError(f"encoder expects (B, 3, {spec.input_size}, {spec.input_size}) input, got {x.shape}")
    h = x
    for i, (s, pad) in enumerate(zip(spec.strides, spec.pads)):
        h = nn.conv2d(h, p[f"enc.conv{i}.W"], p[f"enc.conv{i}.b"], stride=s, pad=pad)
        h = nn.leaky_relu(h, LEAKY_SLOPE)
    h = h.reshape(h.shape[0], -1)
    return nn.dense(h, p["enc.fc.W"], p["enc.fc.b"])


def _mlp(p, prefix, x, n_hidden):
    h = x
    for i in range(n_hidden):
        h = nn.leaky_relu(nn.dense(h, p[f"{prefix}.h{i}.W"], p[f"{prefix}.h{i}.b"]), LEAKY_SLOPE)
    return nn.dense(h, p[f"{prefix}.out.W"], p[f"{prefix}.out.b"])


def forward_tensor(ckpt, z, a):
    spec = ckpt.forward
    if z.ndim != 2 or z.shape[1] != spec.latent_dim:
        raise ValueError(f"forward model expects latents of size {spec.latent_dim}, got {z.shape}")
    if a.ndim != 2 or a.shape[1] != spec.action_dim or a.shape[0] != z.shape[0]:
        raise ValueError(f"forward model expects {z.shape[0]} actions of size {spec.action_dim}, got {a.shape}")
    p = ckpt.params
    if spec.variant == "linear":
        return nn.dense(nn.concat([z, a], axis=1), p["fwd.out.W"], p["fwd.out.b"])
    if spec.variant == "mlp":
        return _mlp(p, "fwd", nn.concat([z, a], axis=1), len(spec.hidden))
    d = spec.latent_dim
    inp = a if spec.condition == "action" else nn.concat([z, a], axis=1)
    out = _mlp(p, "fwd", inp, len(spec.hidden))
    B = z.shape[0]
    A = out[:, : d * d].reshape(B, d, d)
    c = out[:, d * d :]
    return (A * z.reshape(B, 1, d)).sum(axis=2) + c


def decode_tensor(ckpt, z):
    if not ckpt.has_decoder:
        raise ValueError("checkpoint has no decoder parameters (objective must be 'autoencoder')")
    spec = ckpt.encoder
    p = ckpt.params
    f_last, n_last = spec.feature_shapes()[-1]
    h = nn.dense(z, p["dec.fc.W"], p["dec.fc.b"]).reshape(z.shape[0], f_last, n_last, n_last)
    plan = _decoder_plan(spec)
    for i in range(len(plan)):
        h = nn.leaky_relu(h, LEAKY_SLOPE)
        h = nn.conv_transpose2d(h, p[f"dec.deconv{i}.W"], p[f"dec.deconv{i}.b"], stride=2, pad=1)
    if h.shape[2] != spec.input_size:
        raise ValueError(f"decoder produces {h.shape[2]}px images for a {spec.input_size}px encoder")
    return h


def inverse_tensor(ckpt, z, z_next):
    if not ckpt.has_inverse:
        raise ValueError("checkpoint has no inverse-model parameters (objective must be 'joint')")
    return _mlp(ckpt.params, "inv", nn.concat([z, z_next], axis=1), 2)


# ---------------------------------------------------------------------------
# public single-item API
# ---------------------------------------------------------------------------
def _as_action_array(a):
    if hasattr(a, "as_vector"):
        return a.as_vector()[None, :]
    arr = np.asarray(a, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


def encode(ckpt, obs):
    """Embed one uint8 (H, W, 3) image -> (d,), or a batch (B, H, W, 3) -> (B, d)."""
    obs = np.asarray(obs)
    single = obs.ndim == 3
    z = ckpt.encode_images(obs[None] if single else obs)
    return z[0] if single else z


def forward_latent(ckpt, z, a):
    """Predicted next latent for latent ``z`` and action ``a`` (single or batched)."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    acts = _as_action_array(a)
    out = ckpt.predict(z[None] if single else z, acts)
    return out[0] if single else out


def similarity_e2(z1, z2):
    z1, z2 = np.asarray(z1, np.float64), np.asarray(z2, np.float64)
    if z1.shape != z2.shape:
        raise ValueError("latents must have equal dimension")
    return float(np.exp(-np.sum((z1 - z2) ** 2)))


def similarity_logbilinear(z1, z2):
    z1, z2 = np.asarray(z1, np.float64), np.asarray(z2, np.float64)
    if z1.shape != z2.shape:
        raise ValueError("latents must have equal dimension")
    return float(np.exp(np.dot(z1, z2)))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------
def log_similarity_matrix(z_pred, z_next, similarity="e2"):
    """``L[i, j] = log h(z_pred[i], z_next[j])`` as a (B, B) tensor."""
    B, d = z_pred.shape
    if similarity == "e2":
        diff = z_pred.reshape(B, 1, d) - z_next.reshape(1, B, d)
        return -(diff * diff).sum(axis=2)
    if similarity == "logbilinear":
        return nn.matmul(z_pred, _transpose(z_next))
    raise ValueError(f"unknown similarity {similarity!r}")


def _transpose(t):
    def backward(g):
        return (g.T,)

    return nn.tensor._result(t.data.T.copy(), (t,), backward, "transpose")


def info_nce(z_pred, z_next, similarity="e2", include_positive=True):
    """InfoNCE with in-batch negatives, evaluated in log space.

    Row ``i`` scores its positive ``z_next[i]`` against the other rows'
    ``z_next``.  With ``include_positive`` the positive also appears in the
    normaliser (softmax cross-entropy); otherwise only the ``B - 1`` negatives
    do.  The mean over rows and the log-sum-exp are summed in sorted order, so
    permuting the batch leaves the result bit-identical.
    """
    B = z_pred.shape[0]
    if B < 2:
        raise ValueError("InfoNCE needs a batch of at least 2 rows")
    logits = log_similarity_matrix(z_pred, z_next, similarity)
    rows = np.arange(B)
    positive = logits[rows, rows]
    if include_positive:
        denom = nn.logsumexp(logits, axis=1)
    else:
        off = np.array([[j for j in range(B) if j != i] for i in range(B)])
        denom = nn.logsumexp(logits[rows[:, None], off], axis=1)
    return nn.sorted_mean(denom - positive)


def info_nce_rows(z_pred, z_pos, z_neg, similarity="e2", include_positive=True):
    """InfoNCE with explicit negatives ``z_neg`` of shape (B, K, d)."""
    B, K, d = z_neg.shape
    if similarity == "e2":
        pos = -((z_pred - z_pos) * (z_pred - z_pos)).sum(axis=1)
        diff = z_pred.reshape(B, 1, d) - z_neg
        neg = -(diff * diff).sum(axis=2)
    else:
        pos = (z_pred * z_pos).sum(axis=1)
        neg = (z_pred.reshape(B, 1, d) * z_neg).sum(axis=2)
    scores = nn.concat([pos.reshape(B, 1), neg], axis=1) if include_positive else neg
    return nn.sorted_mean(nn.logsumexp(scores, axis=1) - pos)


def _batch_tensors(ckpt, batch):
    dt = ckpt.params.dtype
    obs = Tensor(np.concatenate([batch.obs, batch.next_obs]).astype(dt, copy=False))
    z_all = encode_tensor(ckpt, obs)
    B = len(batch)
    return z_all[:B], z_all[B:], Tensor(normalize_actions(batch.actions).astype(dt))


def _sq_norm_mean(t):
    return (t * t).sum(axis=1).mean()


def infonce_loss(ckpt, batch, similarity=None):
    if len(batch) < 2:
        raise ValueError("InfoNCE needs a batch of at least 2 rows")
    z, z_next, a = _batch_tensors(ckpt, batch)
    z_pred = forward_tensor(ckpt, z, a)
    return info_nce(z_pred, z_next, similarity or ckpt.similarity, ckpt.include_positive)


def latent_mse_loss(ckpt, batch):
    """The naive objective ``mean ||f(g(o_t), a_t) - g(o_{t+1})||^2`` (collapses)."""
    z, z_next, a = _batch_tensors(ckpt, batch)
    return _sq_norm_mean(forward_tensor(ckpt, z, a) - z_next)


def autoencoder_loss(ckpt, batch):
    if not ckpt.has_decoder:
        raise ValueError("checkpoint has no decoder parameters (objective must be 'autoencoder')")
    z, z_next, a = _batch_tensors(ckpt, batch)
    recon = decode_tensor(ckpt, z)
    err = recon - Tensor(np.asarray(batch.obs, dtype=ckpt.params.dtype))
    return (err * err).mean() + ckpt.lambda_forward * _sq_norm_mean(forward_tensor(ckpt, z, a) - z_next)


def joint_loss(ckpt, batch):
    if not ckpt.has_inverse:
        raise ValueError("checkpoint has no inverse-model parameters (objective must be 'joint')")
    z, z_next, a = _batch_tensors(ckpt, batch)
    fwd = _sq_norm_mean(forward_tensor(ckpt, z, a) - z_next)
    inv = _sq_norm_mean(inverse_tensor(ckpt, z, z_next) - a)
    return fwd + ckpt.lambda_inverse * inv


LOSSES = {"cfm": infonce_loss, "autoencoder": autoencoder_loss, "joint": joint_loss}


def objective_loss(ckpt, batch):
    return LOSSES[ckpt.objective](ckpt, batch)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------
def build_for_data(config, data, dtype=np.float32):
    """Initialise a model sized for ``data`` according to ``config``."""
    size = data.image_size
    if config.encoder == "paper":
        enc = EncoderSpec.paper(config.latent_dim)
        if size != 64:
            raise ValueError("the paper-scale encoder expects 64px images")
    else:
        enc = EncoderSpec.desk(size, config.latent_dim)
    fwd = ForwardModelSpec(config.forward_variant, config.hidden, data.action_dim, config.latent_dim, config.condition)
    return init_model(config.objective, enc, fwd, config.seed, dtype, config.similarity, config.include_positive,
                      config.lambda_forward, config.lambda_inverse, config.to_dict())


def train(data, config=TrainConfig(), ckpt=None, on_epoch=None):
    """Adam training of ``config.objective``; returns ``(checkpoint, per-epoch mean losses)``.

    Deterministic for a given seed.  A NaN/Inf loss raises
    :class:`TrainingDivergedError`.
    """
    if isinstance(data, Dataset):
        data = data.transitions()
    if not isinstance(data, Transitions):
        raise TypeError("train() needs a Dataset or its transitions() view")
    if ckpt is None:
        ckpt = build_for_data(config, data)
    if ckpt.forward.action_dim != data.action_dim:
        raise ValueError(f"model expects {ckpt.forward.action_dim}-dim actions, data has {data.action_dim}")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    store = ckpt.params
    losses = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for batch in epoch_batches(data, config.batch_size, rng):
            store.clear_grad()
            try:
                loss = objective_loss(ckpt, batch)
                loss.backward()
            except nn.NonFiniteError as exc:
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch}: {exc}") from exc
            nn.adam_step(store, config.lr, config.beta1, config.beta2, config.eps)
            total += float(loss.data)
            count += 1
        losses.append(total / max(count, 1))
        log.info("epoch %d/%d loss %.5f (%.1fs)", epoch + 1, config.epochs, losses[-1], time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    ckpt.config = config.to_dict()
    return ckpt, losses


def embedding_std(ckpt, images, batch_size=256):
    """Per-dimension standard deviation of the embeddings of ``images``."""
    z = np.concatenate([ckpt.encode_images(images[i : i + batch_size]) for i in range(0, len(images), batch_size)])
    return z.std(axis=0)


# ---------------------------------------------------------------------------
# CFMC checkpoint format
# ---------------------------------------------------------------------------
CKPT_MAGIC = b"CFMC"
CKPT_VERSION = 1


def _descriptor(ckpt):
    return {
        "encoder": dataclasses.asdict(ckpt.encoder),
        "forward": dataclasses.asdict(ckpt.forward),
        "objective": ckpt.objective,
        "similarity": ckpt.similarity,
        "include_positive": ckpt.include_positive,
        "lambda_forward": ckpt.lambda_forward,
        "lambda_inverse": ckpt.lambda_inverse,
        "config": ckpt.config,
        "tensors": [[name, list(p.shape)] for name, p in ckpt.params.items()],
    }


def save_checkpoint(ckpt):
    """Serialise to CFMC bytes (parameters stored as little-endian float32)."""
    desc = json.dumps(_descriptor(ckpt), sort_keys=True).encode("utf-8")
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(desc)), desc, struct.pack("<I", len(ckpt.params))]
    for name, p in ckpt.params.items():
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", p.ndim))
        chunks.append(struct.pack(f"<{p.ndim}I", *p.shape))
        chunks.append(p.data.astype("<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def take(self, n):
        if self.off + n > len(self.buf):
            raise TruncatedFileError(f"checkpoint truncated at byte {self.off} (needed {n} more)")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_checkpoint(buf):
    buf = bytes(buf)
    if buf[:4] != CKPT_MAGIC:
        raise BadMagicError(f"not a CFMC checkpoint (magic {buf[:4]!r})")
    r = _Reader(buf)
    r.take(4)
    version, dlen = r.unpack("<II")
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"CFMC version {version}, expected {CKPT_VERSION}")
    try:
        desc = json.loads(r.take(dlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint descriptor: {exc}") from exc
    enc = EncoderSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in desc["encoder"].items()})
    fwd = ForwardModelSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in desc["forward"].items()})
    (n,) = r.unpack("<I")
    arrays = {}
    for _ in range(n):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(r.take(4 * count), "<f4").reshape(shape).astype(np.float32)
    if r.off != len(buf):
        raise FormatError(f"{len(buf) - r.off} trailing bytes after checkpoint payload")
    ckpt = init_model(desc["objective"], enc, fwd, 0, np.float32, desc["similarity"], desc["include_positive"],
                      desc["lambda_forward"], desc["lambda_inverse"], desc["config"])
    if [list(s) for s in (arrays[k].shape for k in arrays)] != [s for _, s in desc["tensors"]]:
        raise FormatError("tensor table does not match the descriptor")
    ckpt.params.load_state_dict(arrays)
    return ckpt


def save_checkpoint_file(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(save_checkpoint(ckpt))


def load_checkpoint_file(path):
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())


def checkpoint_digest(ckpt):
    return hashlib.sha256(save_checkpoint(ckpt)).hexdigest()[:12]
