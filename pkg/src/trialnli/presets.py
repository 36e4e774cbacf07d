"""Model registry and hyperparameter presets.

``paper-*`` presets carry the published full-scale settings and exist
for bookkeeping and dry-run planning; ``toy-*`` presets are desk-scale
(small encoder, higher learning rate, handful of epochs) and drive the
synthetic-corpus workflows end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .objectives import LossConfig
from .training import TrainSettings


@dataclass(frozen=True)
class ModelSpec:
    name: str
    network: str  # multigrain | generative | pairwise
    task: str  # A | B | joint
    loss: str | None = None
    sentence_encoder: str | None = None
    token_encoder: str | None = None
    max_len: int | None = None


MODEL_SPECS: dict[str, ModelSpec] = {
    spec.name: spec
    for spec in (
        ModelSpec("M-512-Bi-Bi-mul", "multigrain", "A", "mul", "bilstm", "bilstm", 512),
        ModelSpec("M-512-Tf-Bi-cl", "multigrain", "A", "cl", "transformer", "bilstm", 512),
        ModelSpec("M-1024-Tf-Bi-mul", "multigrain", "A", "mul", "transformer", "bilstm", 1024),
        ModelSpec("generative", "generative", "A", "seq", None, None, 1024),
        ModelSpec("M-512-Tf-Bi", "multigrain", "B", "b", "transformer", "bilstm", 512),
        ModelSpec("M-512-Bi-Bi", "multigrain", "B", "b", "bilstm", "bilstm", 512),
        ModelSpec("M-512-Bi-Max", "multigrain", "B", "b", "bilstm", "maxpool", 512),
        ModelSpec("pairwise", "pairwise", "joint", "ce", None, None, 512),
    )
}

TASK_A_MODELS = ("M-512-Bi-Bi-mul", "M-512-Tf-Bi-cl", "M-1024-Tf-Bi-mul", "generative")
TASK_B_MODELS = ("M-512-Tf-Bi", "M-512-Bi-Bi", "M-512-Bi-Max")


@dataclass(frozen=True)
class EncoderPreset:
    L: int
    d: int
    n_heads: int
    d_ff: int
    max_positions: int


ENCODER_PRESETS = {
    # published scale: 24-layer, width 1024 encoder, positions 512 or 1024
    "paper-512": EncoderPreset(L=24, d=1024, n_heads=16, d_ff=4096, max_positions=512),
    "paper-1024": EncoderPreset(L=24, d=1024, n_heads=16, d_ff=4096, max_positions=1024),
    "toy": EncoderPreset(L=2, d=32, n_heads=4, d_ff=64, max_positions=160),
}


TRAIN_PRESETS: dict[str, TrainSettings] = {
    "paper-taskA": TrainSettings(
        loss="mul", optimizer="adam", lr_encoder=2e-5, lr_other=1e-4,
        batch_size=32, epochs=100, warmup_ratio=0.3,
        loss_config=LossConfig(lam=0.01, gamma=0.5, tau=0.3),
    ),
    "paper-taskB": TrainSettings(
        loss="b", optimizer="adam", lr_encoder=5e-6, lr_other=5e-6,
        batch_size=1, epochs=50, warmup_ratio=0.05,
        loss_config=LossConfig(),
    ),
    "paper-generative": TrainSettings(
        loss="seq", optimizer="adafactor", lr_encoder=3e-5, lr_other=3e-5,
        batch_size=32, epochs=100, warmup_ratio=None, warmup_steps=500,
        loss_config=LossConfig(),
    ),
    "paper-joint": TrainSettings(
        loss="ce", optimizer="adam", lr_encoder=2e-5, lr_other=1e-4,
        batch_size=32, epochs=100, warmup_ratio=0.3,
        loss_config=LossConfig(),
    ),
    # desk scale: small nets learn the synthetic templates in minutes;
    # lam raised so the retrieval head trains inside the multitask loss
    "toy-taskA": TrainSettings(
        loss="mul", optimizer="adam", lr_encoder=1.5e-3, lr_other=1.5e-3,
        batch_size=16, epochs=18, warmup_ratio=0.08,
        loss_config=LossConfig(lam=1.0, gamma=0.5, tau=0.3),
    ),
    "toy-taskB": TrainSettings(
        loss="b", optimizer="adam", lr_encoder=1.5e-3, lr_other=1.5e-3,
        batch_size=16, epochs=12, warmup_ratio=0.08,
        loss_config=LossConfig(),
    ),
    "toy-generative": TrainSettings(
        loss="seq", optimizer="adafactor", lr_encoder=2e-2, lr_other=2e-2,
        batch_size=16, epochs=8, warmup_ratio=0.05,
        loss_config=LossConfig(),
    ),
    "toy-joint": TrainSettings(
        loss="ce", optimizer="adam", lr_encoder=1.5e-3, lr_other=1.5e-3,
        batch_size=16, epochs=10, warmup_ratio=0.08,
        loss_config=LossConfig(),
    ),
}


def train_preset(name: str, **overrides) -> TrainSettings:
    if name not in TRAIN_PRESETS:
        raise KeyError(f"unknown training preset {name!r}; known: {sorted(TRAIN_PRESETS)}")
    return replace(TRAIN_PRESETS[name], **overrides)


def default_preset_for(spec: ModelSpec, scale: str = "toy") -> str:
    if spec.network == "generative":
        return f"{scale}-generative"
    if spec.network == "pairwise":
        return f"{scale}-joint"
    return f"{scale}-taskA" if spec.task == "A" else f"{scale}-taskB"
