"""Continuous-time variational diffusion for contexts and circuit tokens.

A shared linear log-SNR schedule drives both models: sigma_t^2 =
sigmoid(gamma(t)), alpha_t^2 = 1 - sigma_t^2.  gamma increases from
gamma_min to gamma_max so that t=0 is (almost) clean data and t=1 is
(almost) pure noise; the loss weight is gamma'(t)/2.

The context model (GCD) is isotropic.  The circuit-token model (CTD)
scales its noise per coordinate by the label covariance diagonal H_y and
whitens the training residual by H_y^{-1/2}; the hard-vicinal variant
perturbs the conditioning label and gates samples whose perturbation
leaves an l2 ball of radius kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import CovarianceError, DomainError, NumericError
from .labels import LabelPipeline, clip_to_simplex


@dataclass(frozen=True)
class NoiseSchedule:
    gamma_min: float = -10.0
    gamma_max: float = 10.0

    def __post_init__(self):
        if self.gamma_max <= self.gamma_min:
            raise DomainError("gamma_max must exceed gamma_min")


def schedule_eval(t, sched: NoiseSchedule):
    """Evaluate (gamma, gamma', alpha, sigma) at t in [0, 1]."""
    t_t = torch.as_tensor(t, dtype=torch.float64)
    if (t_t < 0).any() or (t_t > 1).any():
        raise DomainError("schedule time must lie in [0, 1]")
    gamma = sched.gamma_min + (sched.gamma_max - sched.gamma_min) * t_t
    gamma_prime = torch.full_like(t_t, sched.gamma_max - sched.gamma_min)
    sigma2 = torch.sigmoid(gamma)
    sigma = torch.sqrt(sigma2)
    alpha = torch.sqrt(1.0 - sigma2)
    return gamma, gamma_prime, alpha, sigma


def gcd_forward(z0: torch.Tensor, t, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """z_t = alpha_t z_0 + sigma_t eps (isotropic)."""
    _, _, alpha, sigma = schedule_eval(t, sched)
    while alpha.ndim < z0.ndim:
        alpha = alpha.unsqueeze(-1)
        sigma = sigma.unsqueeze(-1)
    return alpha * z0 + sigma * eps


def ctd_forward(
    x0: torch.Tensor, t, eps: torch.Tensor, h_diag: torch.Tensor, sched: NoiseSchedule
) -> torch.Tensor:
    """x_t = alpha_t x_0 + sigma_t sqrt(H_y) eps (anisotropic, diagonal)."""
    if (h_diag <= 0).any():
        raise CovarianceError("covariance diagonal must be strictly positive")
    _, _, alpha, sigma = schedule_eval(t, sched)
    while alpha.ndim < x0.ndim:
        alpha = alpha.unsqueeze(-1)
        sigma = sigma.unsqueeze(-1)
    return alpha * x0 + sigma * torch.sqrt(h_diag) * eps


# ---------------------------------------------------------------------------
# epsilon-prediction networks
# ---------------------------------------------------------------------------


def time_features(t: torch.Tensor, bands: int = 8) -> torch.Tensor:
    """Sinusoidal features of the diffusion time, bands ascending."""
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1, 1)
    freqs = (2.0 ** torch.arange(bands, dtype=torch.float64)) * math.pi
    args = t * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def _mlp(d_in: int, d_out: int, hidden: int, depth: int) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Linear(d_in, hidden), nn.SiLU()]
    for _ in range(depth - 1):
        layers += [nn.Linear(hidden, hidden), nn.SiLU()]
    layers.append(nn.Linear(hidden, d_out))
    return nn.Sequential(*layers)


class ContextDenoiser(nn.Module):
    """eps-predictor for the isotropic context diffusion."""

    def __init__(self, d_ctx: int, hidden: int = 256, depth: int = 3, time_bands: int = 8):
        super().__init__()
        self.d_ctx = d_ctx
        self.time_bands = time_bands
        self.net = _mlp(d_ctx + 2 * time_bands, d_ctx, hidden, depth)
        self.double()

    def forward(self, z_t: torch.Tensor, t) -> torch.Tensor:
        if z_t.ndim == 1:
            z_t = z_t.unsqueeze(0)
        tf = time_features(t, self.time_bands)
        if tf.shape[0] == 1 and z_t.shape[0] > 1:
            tf = tf.expand(z_t.shape[0], -1)
        return self.net(torch.cat([z_t, tf], dim=-1))


class TokenDenoiser(nn.Module):
    """Conditional eps-predictor over flattened circuit-token embeddings."""

    def __init__(
        self,
        d_circuit: int,
        d_model: int,
        d_ctx: int,
        hidden: int = 512,
        depth: int = 3,
        time_bands: int = 8,
    ):
        super().__init__()
        self.d_circuit = d_circuit
        self.time_bands = time_bands
        d_in = d_circuit + d_model + d_ctx + 2 * time_bands
        self.net = _mlp(d_in, d_circuit, hidden, depth)
        self.double()

    def forward(self, x_t: torch.Tensor, t, h_short: torch.Tensor, z_ctx: torch.Tensor):
        if x_t.ndim == 1:
            x_t = x_t.unsqueeze(0)
        b = x_t.shape[0]
        if h_short.ndim == 1:
            h_short = h_short.unsqueeze(0).expand(b, -1)
        if z_ctx.ndim == 1:
            z_ctx = z_ctx.unsqueeze(0).expand(b, -1)
        tf = time_features(t, self.time_bands)
        if tf.shape[0] == 1 and b > 1:
            tf = tf.expand(b, -1)
        return self.net(torch.cat([x_t, tf, h_short, z_ctx], dim=-1))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def gcd_loss(
    z0: torch.Tensor,
    model: ContextDenoiser,
    sched: NoiseSchedule,
    t: torch.Tensor,
    eps: torch.Tensor,
) -> torch.Tensor:
    """Weighted denoising MSE: mean over the batch of gamma'(t)/2 * ||eps_hat - eps||^2."""
    if z0.ndim == 1:
        z0, t, eps = z0.unsqueeze(0), torch.as_tensor(t).reshape(1), eps.unsqueeze(0)
    _, gamma_prime, _, _ = schedule_eval(t, sched)
    z_t = gcd_forward(z0, t, eps, sched)
    eps_hat = model(z_t, t)
    if not torch.isfinite(eps_hat).all():
        raise NumericError("denoiser produced non-finite output")
    mse = ((eps_hat - eps) ** 2).sum(dim=-1)
    return (0.5 * gamma_prime * mse).mean()


def ctd_loss_whitened(
    x0: torch.Tensor,
    h_diag: torch.Tensor,
    h_short: torch.Tensor,
    z_ctx: torch.Tensor,
    model: TokenDenoiser,
    sched: NoiseSchedule,
    t: torch.Tensor,
    eps: torch.Tensor,
    weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """Whitened anisotropic loss; H_y = I reduces it to the isotropic MSE.

    weights optionally gates samples (hard-vicinal indicator); gated-out
    samples contribute exactly zero.
    """
    if x0.ndim == 1:
        x0 = x0.unsqueeze(0)
        eps = eps.unsqueeze(0)
        h_diag = h_diag.unsqueeze(0) if h_diag.ndim == 1 else h_diag
        t = torch.as_tensor(t).reshape(1)
    _, gamma_prime, _, _ = schedule_eval(t, sched)
    x_t = ctd_forward(x0, t, eps, h_diag, sched)
    eps_hat = model(x_t, t, h_short, z_ctx)
    if not torch.isfinite(eps_hat).all():
        raise NumericError("denoiser produced non-finite output")
    mse_white = (((eps_hat - eps) / torch.sqrt(h_diag)) ** 2).sum(dim=-1)
    per_sample = 0.5 * gamma_prime * mse_white
    if weights is not None:
        per_sample = torch.where(
            weights > 0, per_sample * weights, torch.zeros_like(per_sample)
        )
    return per_sample.mean()


@dataclass(frozen=True)
class HvidlConfig:
    kappa: float = 0.1
    sigma_delta: float = 0.02

    def __post_init__(self):
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")
        if self.sigma_delta < 0:
            raise DomainError("sigma_delta must be nonnegative")


def hvidl_loss(
    x0: torch.Tensor,
    ys: np.ndarray,
    z_ctx: torch.Tensor,
    pipeline: LabelPipeline,
    model: TokenDenoiser,
    cfg: HvidlConfig,
    sched: NoiseSchedule,
    t: torch.Tensor,
    eps: torch.Tensor,
    rng: np.random.Generator | None = None,
    deltas: np.ndarray | None = None,
) -> torch.Tensor:
    """Hard-vicinal whitened loss.

    Labels are perturbed by delta ~ N(0, sigma_delta^2 I); samples whose
    perturbation exceeds kappa in l2 are masked out entirely.  The
    conditioning embedding and covariance are recomputed from the
    perturbed label through the (frozen) label pipeline.  sigma_delta = 0
    reduces bit-exactly to the plain whitened loss.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    n = ys.shape[0]
    if deltas is None:
        if cfg.sigma_delta == 0:
            deltas = np.zeros_like(ys)
        else:
            if rng is None:
                rng = np.random.default_rng()
            deltas = rng.normal(0.0, cfg.sigma_delta, size=ys.shape)
    norms = np.linalg.norm(deltas, axis=-1)
    weights = torch.as_tensor((norms <= cfg.kappa).astype(float))
    perturbed = np.stack([clip_to_simplex(y + d) for y, d in zip(ys, deltas)])
    y_t = pipeline.transform_batch(perturbed)
    h_long = pipeline.embed_long(y_t)
    h_diag = pipeline.covariance_diag(h_long)
    h_short = pipeline.short_head(h_long)
    if z_ctx.ndim == 1:
        z_ctx = z_ctx.unsqueeze(0).expand(n, -1)
    return ctd_loss_whitened(
        x0, h_diag, h_short, z_ctx, model, sched, t, eps, weights=weights
    )


# ---------------------------------------------------------------------------
# joint training step
# ---------------------------------------------------------------------------


def joint_train_step(
    grid_embs: torch.Tensor,
    ys: np.ndarray,
    encoder,
    pipeline: LabelPipeline,
    gcd_model: ContextDenoiser,
    ctd_model: TokenDenoiser,
    sched: NoiseSchedule,
    hvidl_cfg: HvidlConfig,
    lam: float,
    optimizer: torch.optim.Optimizer,
    rng: np.random.Generator,
) -> dict:
    """One teacher-forced step on a single mini-set.

    The encoder output conditions both objectives, so its gradient flows
    from the context loss and (scaled by lam) from the token loss.
    """
    n = grid_embs.shape[0]
    y_t = pipeline.transform_batch(ys)
    # T-nets are frozen after consistency training; only the short head
    # keeps learning through the joint objective
    h_short = pipeline.short_head(pipeline.embed_long(y_t).detach())
    z_gt = encoder.encode_miniset(grid_embs, h_short)

    t_ctx = torch.as_tensor(rng.uniform(1e-5, 1 - 1e-5, size=1))
    eps_ctx = torch.as_tensor(rng.standard_normal(z_gt.shape[0]))
    loss_gcd = gcd_loss(z_gt, gcd_model, sched, t_ctx, eps_ctx)

    x0 = grid_embs.reshape(n, -1)
    t_tok = torch.as_tensor(rng.uniform(1e-5, 1 - 1e-5, size=n))
    eps_tok = torch.as_tensor(rng.standard_normal(x0.shape))
    loss_ctd = hvidl_loss(
        x0, ys, z_gt, pipeline, ctd_model, hvidl_cfg, sched, t_tok, eps_tok, rng=rng
    )

    total = loss_gcd + lam * loss_ctd
    if not torch.isfinite(total):
        raise NumericError("non-finite joint loss")
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return {
        "total": total.item(),
        "gcd": loss_gcd.item(),
        "ctd": loss_ctd.item(),
    }


# ---------------------------------------------------------------------------
# ancestral sampling
# ---------------------------------------------------------------------------


def ancestral_sample(
    eps_fn,
    dim: int,
    sched: NoiseSchedule,
    n_steps: int,
    generator: torch.Generator,
    h_diag: torch.Tensor | None = None,
) -> torch.Tensor:
    """DDPM-style reverse walk over n_steps uniform times from t=1 to 0.

    Every noise injection is scaled by sqrt(H_y); h_diag=None is the
    isotropic case and follows the identical code path with H = I, so the
    two collapse bitwise for equal seeds.
    """
    scale = (
        torch.ones(dim, dtype=torch.float64)
        if h_diag is None
        else torch.sqrt(h_diag.reshape(-1))
    )
    z = scale * torch.randn(dim, dtype=torch.float64, generator=generator)
    for i in range(n_steps, 0, -1):
        t = i / n_steps
        s = (i - 1) / n_steps
        _, _, alpha_t, sigma_t = schedule_eval(torch.tensor(t), sched)
        _, _, alpha_s, sigma_s = schedule_eval(torch.tensor(s), sched)
        with torch.no_grad():
            eps_hat = eps_fn(z.unsqueeze(0), torch.tensor([t]))[0]
        x0_hat = (z - sigma_t * scale * eps_hat) / alpha_t
        if s == 0:
            return x0_hat
        alpha_ts = alpha_t / alpha_s
        sigma2_ts = sigma_t**2 - alpha_ts**2 * sigma_s**2
        mean = (alpha_ts * sigma_s**2 / sigma_t**2) * z + (
            alpha_s * sigma2_ts / sigma_t**2
        ) * x0_hat
        std = torch.sqrt(sigma2_ts * sigma_s**2 / sigma_t**2)
        noise = torch.randn(dim, dtype=torch.float64, generator=generator)
        z = mean + std * scale * noise
    return z


def sample_context(
    model: ContextDenoiser,
    sched: NoiseSchedule,
    n_steps: int,
    seed: int,
) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return ancestral_sample(model, model.d_ctx, sched, n_steps, gen)


def sample_tokens(
    y_target: np.ndarray,
    z_ctx: torch.Tensor,
    pipeline: LabelPipeline,
    model: TokenDenoiser,
    sched: NoiseSchedule,
    n_steps: int,
    seed: int,
) -> torch.Tensor:
    """Reverse anisotropic diffusion conditioned on a target label."""
    with torch.no_grad():
        y_t = pipeline.transform(y_target)
        h_long = pipeline.embed_long(y_t)
        h_diag = pipeline.covariance_diag(h_long)
        h_short = pipeline.short_head(h_long)
    gen = torch.Generator().manual_seed(seed)

    def eps_fn(x_t, t):
        return model(x_t, t, h_short, z_ctx)

    return ancestral_sample(eps_fn, model.d_circuit, sched, n_steps, gen, h_diag=h_diag)
