"""Measurement-label pipeline.

Normalized count vectors pass through one of three pre-conditioning
transforms (clamped logit, unnormalized Walsh-Hadamard, or high-frequency
sinusoidal features) before entering the label networks:

  T1: flattened circuit embedding -> label latent
  T2: label latent -> predicted probability vector
  T3: transformed label -> label latent (the long embedding)

T1 and T2 train jointly; T3 then trains against the frozen T2 through a
noise-perturbed consistency loss.  The long embedding feeds the diagonal
covariance used by the anisotropic diffusion; a linear head on top of it
provides the short embedding consumed by the set encoder and the
conditional denoiser.

The Walsh transform is deliberately unnormalized (+/-1 entries) so that
ideal Clifford statistics land exactly on {-1, 0, +1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import (
    DimensionError,
    EmptyCountsError,
    NumericError,
    TrainingError,
)

TRANSFORMS = ("logit", "wht", "fourier")


@dataclass(frozen=True)
class TransformedLabel:
    values: np.ndarray
    transform_id: str


def normalize_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise EmptyCountsError("all-zero counts")
    return counts / total


def transform_logit(y: np.ndarray, eps: float = 1e-6) -> TransformedLabel:
    """Clamped element-wise logit; stretches the space near forbidden
    outcomes so small leakage terms dominate the embedding."""
    y = np.asarray(y, dtype=float)
    out = np.log((y + eps) / (1.0 - y + eps))
    return TransformedLabel(out, "logit")


def walsh_matrix(num_qubits: int) -> np.ndarray:
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    out = np.array([[1.0]])
    for _ in range(num_qubits):
        out = np.kron(out, h)
    return out


def transform_wht(y: np.ndarray) -> TransformedLabel:
    """Unnormalized Walsh-Hadamard transform into parity expectation values."""
    y = np.asarray(y, dtype=float)
    n = int(np.log2(len(y)))
    if 2**n != len(y):
        raise DimensionError("label length must be a power of two")
    return TransformedLabel(walsh_matrix(n) @ y, "wht")


def transform_fourier(y: np.ndarray, L: int) -> TransformedLabel:
    """Per-element sinusoidal features over L frequency bands.

    Layout: element-major, then bands ascending, sin before cos.
    """
    if L < 1:
        raise DimensionError("need at least one frequency band")
    y = np.asarray(y, dtype=float)
    feats = []
    for yi in y:
        for j in range(L):
            arg = (2**j) * np.pi * yi
            feats.extend([np.sin(arg), np.cos(arg)])
    return TransformedLabel(np.array(feats), "fourier")


def transform_label(y: np.ndarray, kind: str, eps: float = 1e-6, L: int = 4) -> TransformedLabel:
    if kind == "logit":
        return transform_logit(y, eps)
    if kind == "wht":
        return transform_wht(y)
    if kind == "fourier":
        return transform_fourier(y, L)
    raise DimensionError(f"unknown transform {kind!r}")


def transform_dim(kind: str, d_m: int, L: int = 4) -> int:
    return 2 * L * d_m if kind == "fourier" else d_m


def clip_to_simplex(y: np.ndarray) -> np.ndarray:
    """Clip negatives and renormalize; keeps perturbed labels inside the
    domain of the logit/WHT transforms."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, None)
    total = y.sum()
    if total <= 0:
        return np.full_like(y, 1.0 / len(y))
    return y / total


# ---------------------------------------------------------------------------
# label networks
# ---------------------------------------------------------------------------


def _mlp(d_in: int, d_out: int, hidden: int, depth: int) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Linear(d_in, hidden), nn.GELU()]
    for _ in range(depth - 1):
        layers += [nn.Linear(hidden, hidden), nn.GELU()]
    layers.append(nn.Linear(hidden, d_out))
    return nn.Sequential(*layers)


@dataclass(frozen=True)
class LabelConfig:
    d_m: int
    d_circuit: int
    d_model: int
    transform: str = "logit"
    eps: float = 1e-6
    fourier_L: int = 4
    hidden: int | None = None  # defaults to 4 * d_model
    depth: int = 5
    cov_floor: float = 1e-4
    sigma: float = 0.02  # consistency-noise scale

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise DimensionError(f"unknown transform {self.transform!r}")

    @property
    def width(self) -> int:
        return self.hidden if self.hidden is not None else 4 * self.d_model

    @property
    def d_emb(self) -> int:
        return transform_dim(self.transform, self.d_m, self.fourier_L)


class LabelPipeline(nn.Module):
    """T1/T2/T3 networks plus the short-embedding head and covariance map."""

    def __init__(self, cfg: LabelConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.width
        self.t1 = _mlp(cfg.d_circuit, cfg.d_circuit, w, cfg.depth)
        self.t2 = _mlp(cfg.d_circuit, cfg.d_m, w, cfg.depth)
        self.t3 = _mlp(cfg.d_emb, cfg.d_circuit, w, cfg.depth)
        self.short_head = nn.Linear(cfg.d_circuit, cfg.d_model)
        self.double()

    # -- transforms --------------------------------------------------------

    def transform(self, y: np.ndarray) -> torch.Tensor:
        t = transform_label(y, self.cfg.transform, self.cfg.eps, self.cfg.fourier_L)
        return torch.as_tensor(t.values, dtype=torch.float64)

    def transform_batch(self, ys: np.ndarray) -> torch.Tensor:
        return torch.stack([self.transform(y) for y in np.atleast_2d(ys)])

    # -- embeddings --------------------------------------------------------

    def embed_long(self, y_t: torch.Tensor) -> torch.Tensor:
        if y_t.shape[-1] != self.cfg.d_emb:
            raise DimensionError(
                f"transformed label has dim {y_t.shape[-1]}, expected {self.cfg.d_emb}"
            )
        return self.t3(y_t)

    def embed_short(self, y_t: torch.Tensor) -> torch.Tensor:
        return self.short_head(self.embed_long(y_t))

    def covariance_diag(self, h_long: torch.Tensor) -> torch.Tensor:
        """Diagonal of H_y: softplus + floor, mean-normalized to 1."""
        if not torch.isfinite(h_long).all():
            raise NumericError("non-finite long embedding")
        d = torch.nn.functional.softplus(h_long) + self.cfg.cov_floor
        d = d / d.mean(dim=-1, keepdim=True)
        return torch.clamp(d, min=self.cfg.cov_floor)

    def covariance_for_label(self, y: np.ndarray) -> torch.Tensor:
        return self.covariance_diag(self.embed_long(self.transform(y)))


def embed_label_short(pipeline: LabelPipeline, y: np.ndarray) -> torch.Tensor:
    return pipeline.embed_short(pipeline.transform(y))


def embed_label_long(pipeline: LabelPipeline, y: np.ndarray) -> torch.Tensor:
    return pipeline.embed_long(pipeline.transform(y))


@dataclass
class LabelTrainingReport:
    stage1_losses: list = field(default_factory=list)
    stage2_losses: list = field(default_factory=list)


def train_label_consistency(
    pipeline: LabelPipeline,
    xs: np.ndarray,
    ys: np.ndarray,
    epochs_stage1: int = 200,
    epochs_stage2: int = 200,
    lr: float = 1e-3,
    seed: int = 0,
) -> LabelTrainingReport:
    """Two-stage label-network training.

    Stage 1 fits T2(T1(x)) to y jointly; stage 2 freezes T1/T2 and fits T3
    with the Gaussian-perturbed consistency loss.  Perturbed labels are
    clipped back onto the simplex before the transform; the regression
    target keeps the raw perturbation.
    """
    cfg = pipeline.cfg
    x_t = torch.as_tensor(np.asarray(xs), dtype=torch.float64)
    y_t = torch.as_tensor(np.asarray(ys), dtype=torch.float64)
    report = LabelTrainingReport()

    opt1 = torch.optim.Adam(
        list(pipeline.t1.parameters()) + list(pipeline.t2.parameters()), lr=lr
    )
    for _ in range(epochs_stage1):
        opt1.zero_grad()
        loss = ((pipeline.t2(pipeline.t1(x_t)) - y_t) ** 2).sum(dim=-1).mean()
        if not torch.isfinite(loss):
            raise TrainingError("stage-1 label loss diverged")
        loss.backward()
        opt1.step()
        report.stage1_losses.append(loss.item())

    for p in pipeline.t1.parameters():
        p.requires_grad_(False)
    for p in pipeline.t2.parameters():
        p.requires_grad_(False)

    rng = np.random.default_rng(seed)
    opt2 = torch.optim.Adam(pipeline.t3.parameters(), lr=lr)
    ys_np = np.asarray(ys, dtype=float)
    for _ in range(epochs_stage2):
        gamma = rng.normal(0.0, cfg.sigma, size=ys_np.shape) if cfg.sigma > 0 else 0.0
        perturbed = ys_np + gamma
        inputs = pipeline.transform_batch(
            np.stack([clip_to_simplex(v) for v in perturbed])
        )
        target = torch.as_tensor(perturbed, dtype=torch.float64)
        opt2.zero_grad()
        loss = ((pipeline.t2(pipeline.t3(inputs)) - target) ** 2).sum(dim=-1).mean()
        if not torch.isfinite(loss):
            raise TrainingError("stage-2 consistency loss diverged")
        loss.backward()
        opt2.step()
        report.stage2_losses.append(loss.item())

    for p in pipeline.t1.parameters():
        p.requires_grad_(True)
    for p in pipeline.t2.parameters():
        p.requires_grad_(True)
    return report
