"""Set Vision Transformer encoder.

Per record: the (Q, T, d_gate) circuit tensor is cut into 2x2 patches,
projected to d_model, prefixed with a learnable summary token and the
short label embedding, given learnable positional embeddings, and run
through post-norm transformer blocks; the summary token's final state
represents the record.  Per mini-set: the stacked summary states pass
through two induced-set attention blocks (m inducing points, linear cost
in set size) and multi-head attention pooling with k seeds, which is
exactly permutation invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DimensionError, EmptySetError, SetError


@dataclass(frozen=True)
class EncoderConfig:
    Q: int
    T: int
    d_gate: int
    d_model: int = 128
    L_vit: int = 4
    heads: int = 4
    k_seeds: int = 4
    m_inducing: int = 32
    rff_mult: int = 4

    def __post_init__(self):
        if self.k_seeds < 1 or self.m_inducing < 1:
            raise DimensionError("k_seeds and m_inducing must be positive")
        if self.d_model % self.heads != 0:
            raise DimensionError("d_model must divide evenly into heads")

    @property
    def patch_rows(self) -> int:
        return math.ceil(self.Q / 2)

    @property
    def patch_cols(self) -> int:
        return math.ceil(self.T / 2)

    @property
    def n_patch(self) -> int:
        return self.patch_rows * self.patch_cols

    @property
    def d_ctx(self) -> int:
        return self.k_seeds * self.d_model


def _rff(d_model: int, mult: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(d_model, mult * d_model),
        nn.GELU(),
        nn.Linear(mult * d_model, d_model),
    )


class ViTBlock(nn.Module):
    """Post-norm transformer block: X' = LN(X + MHA(X)), X'' = LN(X' + rFF(X'))."""

    def __init__(self, d_model: int, heads: int, rff_mult: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, heads, batch_first=True)
        self.ff = _rff(d_model, rff_mult)
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, _ = self.attn(x, x, x, need_weights=False)
        x = self.ln1(x + h)
        return self.ln2(x + self.ff(x))


class MAB(nn.Module):
    """Multi-head attention block of the Set Transformer."""

    def __init__(self, d_model: int, heads: int, rff_mult: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, heads, batch_first=True)
        self.ff = _rff(d_model, rff_mult)
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        h, _ = self.attn(x, y, y, need_weights=False)
        h = self.ln1(x + h)
        return self.ln2(h + self.ff(h))


class ISAB(nn.Module):
    def __init__(self, d_model: int, heads: int, m: int, rff_mult: int):
        super().__init__()
        self.inducing = nn.Parameter(torch.randn(1, m, d_model) / math.sqrt(d_model))
        self.mab1 = MAB(d_model, heads, rff_mult)
        self.mab2 = MAB(d_model, heads, rff_mult)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.mab1(self.inducing.expand(x.shape[0], -1, -1), x)
        return self.mab2(x, h)


class PMA(nn.Module):
    def __init__(self, d_model: int, heads: int, k: int, rff_mult: int):
        super().__init__()
        self.seeds = nn.Parameter(torch.randn(1, k, d_model) / math.sqrt(d_model))
        self.ff = _rff(d_model, rff_mult)
        self.mab = MAB(d_model, heads, rff_mult)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mab(self.seeds.expand(x.shape[0], -1, -1), self.ff(x))


class SetEncoder(nn.Module):
    """Record-level ViT plus permutation-invariant set pooling."""

    def __init__(self, cfg: EncoderConfig, pad_vector: np.ndarray):
        super().__init__()
        self.cfg = cfg
        self.patch_proj = nn.Linear(4 * cfg.d_gate, cfg.d_model)
        self.lrn = nn.Parameter(torch.zeros(1, 1, cfg.d_model))
        self.pos = nn.Parameter(0.02 * torch.randn(1, cfg.n_patch + 2, cfg.d_model))
        self.blocks = nn.ModuleList(
            ViTBlock(cfg.d_model, cfg.heads, cfg.rff_mult) for _ in range(cfg.L_vit)
        )
        self.isab1 = ISAB(cfg.d_model, cfg.heads, cfg.m_inducing, cfg.rff_mult)
        self.isab2 = ISAB(cfg.d_model, cfg.heads, cfg.m_inducing, cfg.rff_mult)
        self.pma = PMA(cfg.d_model, cfg.heads, cfg.k_seeds, cfg.rff_mult)
        self.register_buffer(
            "pad_vector", torch.as_tensor(pad_vector, dtype=torch.float64)
        )
        self.double()

    # -- record level ------------------------------------------------------

    def patch_embed(self, grid_emb: torch.Tensor) -> torch.Tensor:
        """(B, Q, T, d_gate) -> (B, n_patch, d_model).

        Odd Q or T is padded with the padding-token embedding.  Each patch
        is flattened qubit-major (qubit outer, time inner) before the
        linear projection.
        """
        cfg = self.cfg
        if grid_emb.ndim == 3:
            grid_emb = grid_emb.unsqueeze(0)
        b, q, t, d = grid_emb.shape
        if (q, t, d) != (cfg.Q, cfg.T, cfg.d_gate):
            raise DimensionError(
                f"grid embedding shape {(q, t, d)} != {(cfg.Q, cfg.T, cfg.d_gate)}"
            )
        qp, tp = 2 * cfg.patch_rows, 2 * cfg.patch_cols
        if (qp, tp) != (q, t):
            padded = self.pad_vector.expand(b, qp, tp, d).clone()
            padded[:, :q, :t] = grid_emb
            grid_emb = padded
        x = grid_emb.reshape(b, cfg.patch_rows, 2, cfg.patch_cols, 2, d)
        x = x.permute(0, 1, 3, 2, 4, 5)  # (B, pr, pc, 2q, 2t, d): qubit-major
        x = x.reshape(b, cfg.n_patch, 4 * d)
        return self.patch_proj(x)

    def encode_pair(
        self, grid_emb: torch.Tensor, h_short: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns the final summary-token and label-token states, (B, d_model) each."""
        patches = self.patch_embed(grid_emb)
        b = patches.shape[0]
        if h_short.ndim == 1:
            h_short = h_short.unsqueeze(0).expand(b, -1)
        if h_short.shape[-1] != self.cfg.d_model:
            raise DimensionError("short label embedding must have dim d_model")
        seq = torch.cat(
            [self.lrn.expand(b, -1, -1), h_short.unsqueeze(1), patches], dim=1
        )
        seq = seq + self.pos
        for block in self.blocks:
            seq = block(seq)
        return seq[:, 0], seq[:, 1]

    # -- set level ---------------------------------------------------------

    def pool_set(self, h_records: torch.Tensor) -> torch.Tensor:
        """(n, d_model) -> (k, d_model) context matrix, permutation invariant."""
        if h_records.ndim != 2:
            raise DimensionError("pool_set expects an (n, d_model) matrix")
        if h_records.shape[0] == 0:
            raise EmptySetError("cannot pool an empty set")
        x = h_records.unsqueeze(0)
        x = self.isab2(self.isab1(x))
        return self.pma(x)[0]

    def encode_miniset(
        self, grid_embs: torch.Tensor, h_shorts: torch.Tensor
    ) -> torch.Tensor:
        """(n, Q, T, d_gate) + (n, d_model) -> flattened context, (k * d_model,)."""
        if grid_embs.shape[0] == 0:
            raise EmptySetError("empty mini-set")
        if grid_embs.shape[0] != h_shorts.shape[0]:
            raise SetError("record/label count mismatch")
        h_lrn, _ = self.encode_pair(grid_embs, h_shorts)
        return self.pool_set(h_lrn).reshape(-1)


def permutation_defect(
    encoder: SetEncoder,
    grid_embs: torch.Tensor,
    h_shorts: torch.Tensor,
    trials: int = 8,
    seed: int = 0,
) -> float:
    """Max-abs change of the set context under random record reorderings."""
    rng = np.random.default_rng(seed)
    encoder.eval()
    with torch.no_grad():
        base = encoder.encode_miniset(grid_embs, h_shorts)
        worst = 0.0
        for _ in range(trials):
            perm = rng.permutation(grid_embs.shape[0])
            out = encoder.encode_miniset(grid_embs[perm], h_shorts[perm])
            worst = max(worst, float((out - base).abs().max()))
    return worst
