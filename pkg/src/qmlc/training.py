"""Model construction and the staged training pipeline.

Builds every learnable component from a RunConfig, trains the label
networks first (two stages), then runs the joint encoder+diffusion
objective stage by stage over the curriculum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .circuits import (
    GateEmbedding,
    GateVocab,
    default_vocab,
    embed_grid,
    make_orthonormal_embedding,
    tokenize_circuit,
)
from .config import RunConfig
from .curriculum import CurriculumPlan
from .device import GstRecord
from .diffusion import (
    ContextDenoiser,
    HvidlConfig,
    NoiseSchedule,
    TokenDenoiser,
    joint_train_step,
)
from .encoder import EncoderConfig, SetEncoder
from .errors import TrainingError
from .labels import LabelConfig, LabelPipeline, train_label_consistency
from .synthesis import TokenDecoder


@dataclass
class ModelBundle:
    """Everything needed for inference, plus the config that built it."""

    cfg: RunConfig
    vocab: GateVocab
    embedding: GateEmbedding
    encoder: SetEncoder
    pipeline: LabelPipeline
    gcd: ContextDenoiser
    ctd: TokenDenoiser
    sched: NoiseSchedule
    decoder: TokenDecoder
    step: int = 0

    @property
    def Q(self) -> int:
        return self.cfg.Q

    @property
    def T(self) -> int:
        return self.cfg.T

    @property
    def n_steps_gcd(self) -> int:
        return self.cfg.n_steps_gcd

    @property
    def n_steps_ctd(self) -> int:
        return self.cfg.n_steps_ctd


def build_bundle(cfg: RunConfig) -> ModelBundle:
    torch.manual_seed(cfg.seed)
    vocab = default_vocab(cfg.Q)
    d_gate = cfg.d_gate if cfg.d_gate is not None else vocab.K
    embedding = make_orthonormal_embedding(vocab.K, d_gate, cfg.embed_seed)
    enc_cfg = EncoderConfig(
        Q=cfg.Q,
        T=cfg.T,
        d_gate=d_gate,
        d_model=cfg.d_model,
        L_vit=cfg.L_vit,
        heads=cfg.heads,
        k_seeds=cfg.k_seeds,
        m_inducing=cfg.m_inducing,
    )
    pad_vec = embedding.table[vocab.pad_id - 1]
    encoder = SetEncoder(enc_cfg, pad_vec)
    d_circuit = cfg.Q * cfg.T * d_gate
    label_cfg = LabelConfig(
        d_m=2**cfg.Q,
        d_circuit=d_circuit,
        d_model=cfg.d_model,
        transform=cfg.transform,
        eps=cfg.label_eps,
        fourier_L=cfg.fourier_L,
        hidden=cfg.label_hidden,
        depth=cfg.label_depth,
        cov_floor=cfg.cov_floor,
        sigma=cfg.label_sigma,
    )
    pipeline = LabelPipeline(label_cfg)
    sched = NoiseSchedule(cfg.gamma_min, cfg.gamma_max)
    gcd = ContextDenoiser(
        enc_cfg.d_ctx, hidden=cfg.gcd_hidden, depth=cfg.gcd_depth, time_bands=cfg.time_bands
    )
    ctd = TokenDenoiser(
        d_circuit,
        cfg.d_model,
        enc_cfg.d_ctx,
        hidden=cfg.ctd_hidden,
        depth=cfg.ctd_depth,
        time_bands=cfg.time_bands,
    )
    decoder = TokenDecoder.from_embedding(embedding.table)
    return ModelBundle(
        cfg=cfg,
        vocab=vocab,
        embedding=embedding,
        encoder=encoder,
        pipeline=pipeline,
        gcd=gcd,
        ctd=ctd,
        sched=sched,
        decoder=decoder,
    )


def record_grid_embedding(bundle: ModelBundle, record: GstRecord) -> torch.Tensor:
    grid = tokenize_circuit(record.circuit, bundle.vocab, bundle.T)
    return torch.as_tensor(embed_grid(grid, bundle.embedding), dtype=torch.float64)


def miniset_tensors(
    bundle: ModelBundle, records: list[GstRecord]
) -> tuple[torch.Tensor, np.ndarray]:
    grids = torch.stack([record_grid_embedding(bundle, r) for r in records])
    ys = np.stack([r.y for r in records])
    return grids, ys


@dataclass
class TrainingReport:
    label_stage1: list = field(default_factory=list)
    label_stage2: list = field(default_factory=list)
    joint: list = field(default_factory=list)  # one dict per step
    stage_starts: list = field(default_factory=list)


def train(
    bundle: ModelBundle,
    records: list[GstRecord],
    plan: CurriculumPlan,
    log=None,
) -> TrainingReport:
    """Full training: label networks, then staged joint diffusion."""
    cfg = bundle.cfg
    report = TrainingReport()

    xs = np.stack(
        [record_grid_embedding(bundle, r).reshape(-1).numpy() for r in records]
    )
    ys = np.stack([r.y for r in records])
    label_report = train_label_consistency(
        bundle.pipeline,
        xs,
        ys,
        epochs_stage1=cfg.label_epochs1,
        epochs_stage2=cfg.label_epochs2,
        lr=cfg.lr_label,
        seed=cfg.seed + 1,
    )
    report.label_stage1 = label_report.stage1_losses
    report.label_stage2 = label_report.stage2_losses
    if log:
        log(f"label training done (final consistency loss "
            f"{report.label_stage2[-1]:.4g})" if report.label_stage2 else "label training done")

    params = (
        list(bundle.encoder.parameters())
        + list(bundle.gcd.parameters())
        + list(bundle.ctd.parameters())
        + list(bundle.pipeline.short_head.parameters())
    )
    optimizer = torch.optim.Adam(params, lr=cfg.lr_joint)
    hvidl_cfg = HvidlConfig(kappa=cfg.kappa, sigma_delta=cfg.sigma_delta)
    rng = np.random.default_rng(cfg.seed + 2)

    for stage_idx, stage_sets in enumerate(plan.stages):
        report.stage_starts.append(bundle.step)
        if log:
            log(f"stage {stage_idx}: {len(stage_sets)} mini-sets")
        if not stage_sets:
            continue
        for _ in range(cfg.joint_steps):
            s = stage_sets[rng.integers(len(stage_sets))]
            grids, ys_set = miniset_tensors(bundle, s.records(records))
            try:
                losses = joint_train_step(
                    grids,
                    ys_set,
                    bundle.encoder,
                    bundle.pipeline,
                    bundle.gcd,
                    bundle.ctd,
                    bundle.sched,
                    hvidl_cfg,
                    cfg.lambda_ctd,
                    optimizer,
                    rng,
                )
            except Exception as exc:
                raise TrainingError(f"joint step {bundle.step} failed: {exc}") from exc
            losses["step"] = bundle.step
            losses["stage"] = stage_idx
            report.joint.append(losses)
            bundle.step += 1
    return report
