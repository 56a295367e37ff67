"""Shared fixtures: the reference 1-qubit corpus and a fully trained bundle.

The trained bundle is session-scoped because reference training takes a
couple of minutes; every test that needs trained networks shares it.
"""

from __future__ import annotations

import warnings

import pytest

from qmlc.circuits import Circuit
from qmlc.config import RunConfig
from qmlc.curriculum import build_curriculum, group_records
from qmlc.device import DatasetConfig, NOISE_PRESETS, generate_germ_dataset


def make_records(cfg: RunConfig):
    germs = tuple(Circuit.from_text(t) for t in cfg.germs)
    ds_cfg = DatasetConfig(
        Q=cfg.Q,
        germs=germs,
        powers=cfg.powers,
        T_max=cfg.T,
        shots=cfg.shots,
        noise=NOISE_PRESETS[cfg.noise_preset](),
        seed=cfg.seed,
        preset=cfg.noise_preset,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_germ_dataset(ds_cfg)


@pytest.fixture(scope="session")
def reference_config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def reference_records(reference_config):
    return make_records(reference_config)


@pytest.fixture(scope="session")
def reference_plan(reference_config, reference_records):
    cfg = reference_config
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sets = group_records(
            reference_records, cfg.n_set, cfg.tau, cfg.seed, max_use=cfg.max_use
        )
        return build_curriculum(sets, cfg.stage_edges)


@pytest.fixture(scope="session")
def trained_bundle(reference_config, reference_records, reference_plan):
    from qmlc.training import build_bundle, train

    bundle = build_bundle(reference_config)
    report = train(bundle, reference_records, reference_plan)
    return bundle, report


@pytest.fixture()
def tiny_config() -> RunConfig:
    """Fast config for plumbing tests; networks stay untrained or near-untrained."""
    return RunConfig(
        label_epochs1=10,
        label_epochs2=10,
        joint_steps=5,
        n_steps_gcd=8,
        n_steps_ctd=8,
        max_attempts=4,
    )
