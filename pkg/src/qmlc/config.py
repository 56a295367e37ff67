"""Run configuration: one flat, human-editable file covering every module.

All defaults live here so that choices the underlying method leaves open
are visible in one place.  The config hash (sha256 of the canonical JSON
serialization) ties checkpoints to the configuration that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    # device / dataset
    Q: int = 1
    T: int = 20
    shots: int = 2000
    noise_preset: str = "deviceA"
    germs: tuple[str, ...] = (
        "Q=1;x90@0",
        "Q=1;y90@0",
        "Q=1;x90@0;y90@0",
        "Q=1;x90@0;x90@0",
        "Q=1;y90@0;x90@0;y90@0",
    )
    powers: tuple[int, ...] = (1, 2, 3, 4, 6, 8, 10)
    # circuit embedding
    d_gate: int | None = None  # None: one-hot (d_gate = K)
    embed_seed: int = 7
    # set encoder
    d_model: int = 32
    L_vit: int = 2
    heads: int = 4
    k_seeds: int = 4
    m_inducing: int = 32
    # label pipeline
    transform: str = "logit"
    fourier_L: int = 4
    label_eps: float = 1e-6
    label_sigma: float = 0.02
    cov_floor: float = 1e-4
    label_depth: int = 5
    label_hidden: int | None = None  # None: 4 * d_model
    # diffusion
    gamma_min: float = -10.0
    gamma_max: float = 10.0
    lambda_ctd: float = 1.0
    kappa: float = 0.1
    sigma_delta: float = 0.02
    gcd_hidden: int = 128
    gcd_depth: int = 3
    ctd_hidden: int = 256
    ctd_depth: int = 3
    time_bands: int = 8
    n_steps_gcd: int = 250
    n_steps_ctd: int = 500
    # curriculum
    n_set: int = 3
    tau: int = 2
    max_use: int = 4
    stage_edges: tuple[int, ...] = (4, 10, 20)
    # training
    label_epochs1: int = 300
    label_epochs2: int = 300
    joint_steps: int = 3000  # per curriculum stage
    lr_label: float = 1e-3
    lr_joint: float = 1e-3
    # synthesis
    theta_tvd: float = 0.1
    max_attempts: int = 64
    # master seed
    seed: int = 0

    def __post_init__(self):
        if self.Q < 1 or self.Q > 3:
            raise ConfigError("Q must be 1..3 (desk scale)")
        if self.T < 1:
            raise ConfigError("T must be positive")
        if self.shots < 1:
            raise ConfigError("shots must be positive")
        if not self.germs:
            raise ConfigError("germ pool must not be empty")
        if self.transform not in ("logit", "wht", "fourier"):
            raise ConfigError(f"unknown transform {self.transform!r}")
        if list(self.stage_edges) != sorted(set(self.stage_edges)):
            raise ConfigError("stage edges must be strictly increasing")
        if self.n_set < 2:
            raise ConfigError("n_set must be at least 2")
        if self.kappa <= 0 or self.sigma_delta < 0:
            raise ConfigError("invalid vicinal parameters")
        if self.gamma_max <= self.gamma_min:
            raise ConfigError("gamma_max must exceed gamma_min")
        if not self.powers or min(self.powers) < 1:
            raise ConfigError("germ powers must be positive")
        for text in self.germs:
            from .circuits import Circuit

            germ = Circuit.from_text(text)
            if germ.num_qubits != self.Q:
                raise ConfigError(f"germ {text!r} does not match Q={self.Q}")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("germs", "powers", "stage_edges"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("germs", "powers", "stage_edges"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_yaml(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} is not a mapping")
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()
