"""Label transforms, embedding pipeline, and consistency training tests."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from qmlc.circuits import default_vocab, random_circuit
from qmlc.errors import DimensionError, EmptyCountsError
from qmlc.labels import (
    LabelConfig,
    LabelPipeline,
    clip_to_simplex,
    normalize_counts,
    train_label_consistency,
    transform_dim,
    transform_fourier,
    transform_label,
    transform_logit,
    transform_wht,
    walsh_matrix,
)
from qmlc.stabilizer import ideal_clifford_distribution


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def test_normalize_counts():
    y = normalize_counts([30, 70])
    assert np.abs(y - [0.3, 0.7]).max() < 1e-15
    with pytest.raises(EmptyCountsError):
        normalize_counts([0, 0])


def test_logit_values():
    eps = 1e-6
    y = np.array([0.5, 0.0, 1.0])
    out = transform_logit(y, eps).values
    assert abs(out[0]) < 1e-12  # logit(0.5) = 0
    assert np.isclose(out[1], np.log(eps / (1 + eps)))
    assert np.isclose(out[2], np.log((1 + eps) / eps))
    assert out[1] == -out[2]


def test_logit_monotone():
    ys = np.linspace(0.0, 1.0, 50)
    out = transform_logit(ys).values
    assert np.all(np.diff(out) > 0)


def test_walsh_matrix_unnormalized():
    w = walsh_matrix(2)
    assert np.array_equal(np.abs(w), np.ones((4, 4)))
    assert np.array_equal(w @ w, 4 * np.eye(4))


def test_wht_uniform_and_basis():
    out = transform_wht(np.array([0.25] * 4)).values
    assert np.abs(out - [1, 0, 0, 0]).max() < 1e-12
    out = transform_wht(np.array([1.0, 0, 0, 0])).values
    assert np.abs(out - np.ones(4)).max() < 1e-12


def test_wht_double_application_scales():
    y = np.array([0.1, 0.2, 0.3, 0.4])
    twice = transform_wht(transform_wht(y).values).values
    assert np.abs(twice - 4 * y).max() < 1e-9


def test_wht_rejects_non_power_of_two():
    with pytest.raises(DimensionError):
        transform_wht(np.array([0.5, 0.25, 0.25]))


def test_wht_of_clifford_records_is_ternary():
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = random_circuit(2, 10, default_vocab(2), rng)
        vals = transform_wht(ideal_clifford_distribution(c)).values
        assert np.abs(vals - np.round(vals)).max() < 1e-9
        assert set(np.round(vals).astype(int)) <= {-1, 0, 1}


def test_fourier_layout():
    y = np.array([0.25, 0.75])
    out = transform_fourier(y, L=2).values
    expect = []
    for yi in y:
        for j in range(2):
            a = (2**j) * np.pi * yi
            expect += [np.sin(a), np.cos(a)]
    assert np.abs(out - expect).max() < 1e-12
    assert len(out) == transform_dim("fourier", 2, 2)


def test_transform_dispatch():
    y = np.array([0.5, 0.5])
    assert transform_label(y, "logit").transform_id == "logit"
    assert transform_label(y, "wht").transform_id == "wht"
    assert transform_label(y, "fourier").transform_id == "fourier"
    with pytest.raises(DimensionError):
        transform_label(y, "mel")


@given(st.lists(st.floats(-1, 2), min_size=2, max_size=8))
@settings(max_examples=100, deadline=None)
def test_clip_to_simplex_properties(vals):
    out = clip_to_simplex(np.array(vals))
    assert out.min() >= 0
    assert abs(out.sum() - 1.0) < 1e-9


def test_clip_to_simplex_identity_on_simplex():
    y = np.array([0.2, 0.3, 0.5])
    assert np.abs(clip_to_simplex(y) - y).max() < 1e-15


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def _small_cfg(transform="logit"):
    return LabelConfig(d_m=2, d_circuit=12, d_model=8, transform=transform, depth=2, hidden=16)


def test_pipeline_shapes():
    p = LabelPipeline(_small_cfg())
    y = np.array([0.4, 0.6])
    long = p.embed_long(p.transform(y))
    short = p.embed_short(p.transform(y))
    assert long.shape == (12,)
    assert short.shape == (8,)
    assert long.dtype == torch.float64


def test_pipeline_rejects_wrong_transform_dim():
    p = LabelPipeline(_small_cfg())
    with pytest.raises(DimensionError):
        p.embed_long(torch.zeros(5, dtype=torch.float64))


def test_covariance_diag_positive_and_normalized():
    p = LabelPipeline(_small_cfg())
    d = p.covariance_for_label(np.array([0.9, 0.1]))
    assert (d > 0).all()
    assert abs(d.mean().item() - 1.0) < 1e-9 or d.min().item() >= p.cfg.cov_floor


def test_consistency_training_reduces_losses():
    torch.manual_seed(0)
    p = LabelPipeline(_small_cfg())
    rng = np.random.default_rng(1)
    xs = rng.standard_normal((16, 12))
    raw = rng.uniform(0.05, 1.0, size=(16, 2))
    ys = raw / raw.sum(axis=1, keepdims=True)
    report = train_label_consistency(p, xs, ys, epochs_stage1=150, epochs_stage2=150, seed=2)
    assert report.stage1_losses[-1] < report.stage1_losses[0]
    assert np.mean(report.stage2_losses[-10:]) < np.mean(report.stage2_losses[:10])
    # T-nets end up trainable again
    assert all(q.requires_grad for q in p.t1.parameters())


def test_short_head_gradient_isolated_from_t3():
    # embedding the label through the short head should not need t3 grads
    p = LabelPipeline(_small_cfg())
    y = np.array([0.5, 0.5])
    h = p.short_head(p.embed_long(p.transform(y)).detach())
    h.sum().backward()
    assert p.short_head.weight.grad is not None
    assert all(q.grad is None for q in p.t3.parameters())
