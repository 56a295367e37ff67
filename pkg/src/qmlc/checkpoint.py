"""Checkpoint save/load for the full model bundle.

A checkpoint stores every network state dict together with the config
dict and its hash.  Loading against a different config is refused unless
forced, so results stay tied to the configuration that produced them.
"""

from __future__ import annotations

import torch

from .config import RunConfig
from .errors import CheckpointError
from .training import ModelBundle, build_bundle

FORMAT = "qmlc-checkpoint/1"


def save_bundle(bundle: ModelBundle, path) -> None:
    payload = {
        "format": FORMAT,
        "config": bundle.cfg.to_dict(),
        "config_hash": bundle.cfg.config_hash,
        "step": bundle.step,
        "encoder": bundle.encoder.state_dict(),
        "pipeline": bundle.pipeline.state_dict(),
        "gcd": bundle.gcd.state_dict(),
        "ctd": bundle.ctd.state_dict(),
        "decoder_w": bundle.decoder.w_dec,
        "decoder_b": bundle.decoder.b_dec,
    }
    torch.save(payload, path)


def load_bundle(path, cfg: RunConfig | None = None, force: bool = False) -> ModelBundle:
    """Rebuild a bundle from disk.

    cfg, when given, must hash-match the stored config; otherwise the
    stored config is used as-is.  force=True downgrades a mismatch to a
    warning-free override using the *stored* architecture.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a recognized checkpoint")
    stored_cfg = RunConfig.from_dict(payload["config"])
    if cfg is not None and cfg.config_hash != payload["config_hash"]:
        if not force:
            raise CheckpointError(
                "config hash mismatch: checkpoint was produced by a different "
                "configuration (use force to load anyway)"
            )
    bundle = build_bundle(stored_cfg)
    bundle.encoder.load_state_dict(payload["encoder"])
    bundle.pipeline.load_state_dict(payload["pipeline"])
    bundle.gcd.load_state_dict(payload["gcd"])
    bundle.ctd.load_state_dict(payload["ctd"])
    bundle.decoder.w_dec = payload["decoder_w"]
    bundle.decoder.b_dec = payload["decoder_b"]
    bundle.step = int(payload.get("step", 0))
    return bundle
