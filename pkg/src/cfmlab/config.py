"""Run configuration shared by the command-line tools."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from . import sim
from .bench import GOALS, config_hash
from .models import FORWARD_VARIANTS, OBJECTIVES, SIMILARITIES, TrainConfig


@dataclass
class RunConfig:
    env_kind: str = "rope"
    image_size: int = 32
    data: str = ""
    randomize: bool = False
    n_traj: int = 400
    traj_len: int = 25
    objective: str = "cfm"
    encoder: str = "desk"
    latent_dim: int = 8
    forward_variant: str = "mlp_linear"
    hidden: list = field(default_factory=lambda: [32, 32])
    condition: str = "concat"
    similarity: str = "e2"
    include_positive: bool = True
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    lambda_forward: float = 1.0
    lambda_inverse: float = 1.0
    n_candidates: int = 100
    episodes: int = 50
    max_steps: int = 0  # 0 picks the per-environment default
    goals: list = field(default_factory=list)  # empty picks the per-environment default
    seed: int = 0

    def validate(self):
        if self.env_kind not in sim.ENV_KINDS:
            raise ValueError(f"env_kind must be one of {sim.ENV_KINDS}")
        if self.image_size not in sim.IMAGE_SIZES:
            raise ValueError(f"image_size must be one of {sim.IMAGE_SIZES}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.forward_variant not in FORWARD_VARIANTS:
            raise ValueError(f"forward_variant must be one of {FORWARD_VARIANTS}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.encoder not in ("desk", "paper"):
            raise ValueError("encoder must be 'desk' or 'paper'")
        for g in self.goals:
            if g not in GOALS[self.env_kind]:
                raise ValueError(f"goal {g!r} is not defined for {self.env_kind}")
        for name in ("n_traj", "traj_len", "epochs", "n_candidates", "episodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if not isinstance(d, dict):
            raise ValueError("config file must hold a JSON object")
        return cls.from_dict(d)

    def merged(self, overrides):
        """Copy with non-None ``overrides`` applied (flags win over the file)."""
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(d)

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        return config_hash(self.to_dict())

    def train_config(self):
        return TrainConfig(
            objective=self.objective, epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            seed=self.seed, latent_dim=self.latent_dim, forward_variant=self.forward_variant,
            hidden=tuple(self.hidden), condition=self.condition, similarity=self.similarity,
            include_positive=self.include_positive, encoder=self.encoder,
            lambda_forward=self.lambda_forward, lambda_inverse=self.lambda_inverse,
        )
