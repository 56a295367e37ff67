"""End-to-end acceptance suite.

Each test implements one numbered acceptance criterion at its stated
tolerance and prints a single pass line when it holds; assertion failures
are honest reds.
"""

import time
import warnings
from itertools import permutations

import numpy as np
import pytest
import torch

from qmlc.circuits import (
    default_vocab,
    embed_grid,
    make_orthonormal_embedding,
    random_circuit,
    tokenize_circuit,
    TokenGrid,
)
from qmlc.curriculum import (
    count_affine_subspaces,
    count_clifford_distributions,
    distribution_key,
    enumerate_affine_subspaces,
    enumerate_clifford_distributions,
    gaussian_binomial,
)
from qmlc.device import NOISE_PRESETS, NoiseModel, apply_circuit
from qmlc.diffusion import (
    ContextDenoiser,
    HvidlConfig,
    NoiseSchedule,
    TokenDenoiser,
    ancestral_sample,
    ctd_forward,
    ctd_loss_whitened,
    gcd_loss,
    hvidl_loss,
    schedule_eval,
)
from qmlc.encoder import EncoderConfig, SetEncoder
from qmlc.labels import LabelConfig, LabelPipeline, transform_wht
from qmlc.stabilizer import ideal_clifford_distribution
from qmlc.synthesis import SynthesisPrompt, TokenDecoder, decode_tokens, synthesize, tvd
from qmlc.errors import SynthesisExhausted


def _ok(n: int, detail: str = "") -> None:
    print(f"\nCRITERION {n}: PASS {detail}".rstrip())


# ---------------------------------------------------------------------------


def test_criterion_1_counting_oracles():
    """Closed-form subspace/distribution counts match brute force, < 1 s."""
    start = time.time()
    for n in range(4):
        enum = enumerate_affine_subspaces(n)
        for k in range(n + 1):
            brute = sum(1 for s in enum if len(s) == 2**k)
            assert count_affine_subspaces(n, k) == brute
            assert count_affine_subspaces(n, k) == 2 ** (n - k) * gaussian_binomial(n, k)
        assert count_clifford_distributions(n) == len(enum)
    assert count_clifford_distributions(1) == 3
    assert count_clifford_distributions(2) == 11
    elapsed = time.time() - start
    assert elapsed < 1.0
    _ok(1, f"({elapsed:.2f}s)")


def test_criterion_2_stabilizer_agreement():
    """Zero-noise density matrix vs tableau, 500 circuits, TVD < 1e-9."""
    start = time.time()
    rng = np.random.default_rng(2024)
    nm = NoiseModel()
    worst = 0.0
    for _ in range(500):
        q = int(rng.integers(1, 3))
        depth = int(rng.integers(0, 21))
        c = random_circuit(q, depth, default_vocab(q), rng)
        worst = max(worst, tvd(apply_circuit(c, nm), ideal_clifford_distribution(c)))
    assert worst < 1e-9
    elapsed = time.time() - start
    assert elapsed < 30.0
    _ok(2, f"(max TVD {worst:.2e}, {elapsed:.1f}s)")


def test_criterion_3_distribution_saturation():
    """10^4 random deep circuits reach exactly T(n) distinct distributions."""
    start = time.time()
    for n in (1, 2):
        rng = np.random.default_rng(n)
        vocab = default_vocab(n)
        seen = set()
        for _ in range(10_000):
            c = random_circuit(n, 30, vocab, rng)
            seen.add(distribution_key(ideal_clifford_distribution(c), n))
        assert len(seen) == count_clifford_distributions(n)
    elapsed = time.time() - start
    assert elapsed < 60.0
    _ok(3, f"({elapsed:.1f}s)")


def test_criterion_4_wht_parity():
    """Clifford records transform to {-1,0,+1}; double Walsh scales by 2^Q."""
    rng = np.random.default_rng(4)
    for q in (1, 2):
        for _ in range(200):
            c = random_circuit(q, 12, default_vocab(q), rng)
            p = ideal_clifford_distribution(c)
            vals = transform_wht(p).values
            assert np.abs(vals - np.round(vals)).max() < 1e-9
            assert set(np.round(vals).astype(int)) <= {-1, 0, 1}
            twice = transform_wht(vals).values
            assert np.abs(twice - (2**q) * p).max() < 1e-9
    _ok(4)


def test_criterion_5_permutation_invariance():
    """encode_miniset order-invariant: exhaustive n<=5, random n=64, 1e-5."""
    torch.manual_seed(5)
    enc = SetEncoder(
        EncoderConfig(Q=2, T=8, d_gate=5, d_model=16, L_vit=2, heads=4,
                      k_seeds=4, m_inducing=8),
        np.eye(5)[-1],
    )
    enc.eval()
    gen = torch.Generator().manual_seed(5)
    worst = 0.0
    with torch.no_grad():
        for n in (1, 2, 3, 4, 5):
            grids = torch.randn(n, 2, 8, 5, dtype=torch.float64, generator=gen)
            h = torch.randn(n, 16, dtype=torch.float64, generator=gen)
            base = enc.encode_miniset(grids, h)
            for perm in permutations(range(n)):
                idx = torch.tensor(perm)
                out = enc.encode_miniset(grids[idx], h[idx])
                worst = max(worst, float((out - base).abs().max()))
        rng = np.random.default_rng(5)
        grids = torch.randn(64, 2, 8, 5, dtype=torch.float64, generator=gen)
        h = torch.randn(64, 16, dtype=torch.float64, generator=gen)
        base = enc.encode_miniset(grids, h)
        for _ in range(10):
            idx = torch.tensor(rng.permutation(64))
            out = enc.encode_miniset(grids[idx], h[idx])
            worst = max(worst, float((out - base).abs().max()))
    assert worst < 1e-5
    _ok(5, f"(max defect {worst:.2e})")


def test_criterion_6_diffusion_invariants():
    """alpha^2+sigma^2=1; forward MC variance within 5%; bitwise collapse."""
    sched = NoiseSchedule()
    ts = torch.linspace(0, 1, 1001)
    _, _, alpha, sigma = schedule_eval(ts, sched)
    assert (alpha**2 + sigma**2 - 1.0).abs().max() < 1e-12

    rng = np.random.default_rng(6)
    n, d = 10_000, 4
    x0 = torch.as_tensor(rng.normal(0.0, 1.3, size=(n, d)))
    h = torch.tensor([0.5, 1.0, 2.0, 3.0], dtype=torch.float64)
    for t in (0.25, 0.5, 0.9):
        eps = torch.as_tensor(rng.standard_normal((n, d)))
        _, _, a_t, s_t = schedule_eval(torch.tensor(t), sched)
        xt = ctd_forward(x0, torch.full((n,), t), eps, h, sched)
        expect = a_t**2 * x0.var(dim=0) + s_t**2 * h
        rel = ((xt.var(dim=0) - expect).abs() / expect).max()
        assert rel < 0.05

    torch.manual_seed(6)
    model = ContextDenoiser(6, hidden=16, depth=2, time_bands=2)
    iso = ancestral_sample(
        model, 6, sched, 30, torch.Generator().manual_seed(66)
    )
    aniso = ancestral_sample(
        model, 6, sched, 30, torch.Generator().manual_seed(66),
        h_diag=torch.ones(6, dtype=torch.float64),
    )
    assert torch.equal(iso, aniso)
    _ok(6)


def _finite_difference_check(loss_fn, params, n_probe, seed) -> float:
    """Max relative error between backprop and central differences."""
    rng = np.random.default_rng(seed)
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    flat_params = [p for p in params if p.grad is not None]
    for _ in range(n_probe):
        p = flat_params[rng.integers(len(flat_params))]
        idx = tuple(rng.integers(s) for s in p.shape)
        h = 1e-6 * max(1.0, abs(p.data[idx].item()))
        orig = p.data[idx].item()
        with torch.no_grad():
            p.data[idx] = orig + h
            up = loss_fn().item()
            p.data[idx] = orig - h
            down = loss_fn().item()
            p.data[idx] = orig
        fd = (up - down) / (2 * h)
        bp = p.grad[idx].item()
        scale = max(abs(fd), abs(bp), 1e-8)
        worst = max(worst, abs(fd - bp) / scale)
    return worst


def test_criterion_7_gradient_checks():
    """Backprop vs finite differences, rel err <= 1e-3, 10 params each."""
    start = time.time()
    sched = NoiseSchedule()
    torch.manual_seed(7)
    pipeline = LabelPipeline(LabelConfig(d_m=2, d_circuit=6, d_model=4, depth=2, hidden=8))
    gcd_model = ContextDenoiser(5, hidden=16, depth=2, time_bands=2)
    ctd_model = TokenDenoiser(6, 4, 8, hidden=16, depth=2, time_bands=2)
    enc = SetEncoder(
        EncoderConfig(Q=1, T=4, d_gate=3, d_model=4, L_vit=1, heads=2,
                      k_seeds=2, m_inducing=4),
        np.zeros(3),
    )

    g = torch.Generator().manual_seed(70)
    z0 = torch.randn(2, 5, dtype=torch.float64, generator=g)
    t_g = torch.tensor([0.3, 0.7], dtype=torch.float64)
    eps_g = torch.randn(2, 5, dtype=torch.float64, generator=g)
    worst = _finite_difference_check(
        lambda: gcd_loss(z0, gcd_model, sched, t_g, eps_g),
        list(gcd_model.parameters()), 10, 0,
    )
    assert worst <= 1e-3, f"gcd_loss gradient rel err {worst}"

    x0 = torch.randn(2, 6, dtype=torch.float64, generator=g)
    eps_c = torch.randn(2, 6, dtype=torch.float64, generator=g)
    h_diag = torch.rand(2, 6, dtype=torch.float64, generator=g) + 0.5
    h_short = torch.randn(2, 4, dtype=torch.float64, generator=g)
    z_ctx = torch.randn(2, 8, dtype=torch.float64, generator=g)
    worst = _finite_difference_check(
        lambda: ctd_loss_whitened(x0, h_diag, h_short, z_ctx, ctd_model, sched, t_g, eps_c),
        list(ctd_model.parameters()), 10, 1,
    )
    assert worst <= 1e-3, f"ctd_loss_whitened gradient rel err {worst}"

    ys = np.array([[0.4, 0.6], [0.85, 0.15]])
    deltas = np.array([[0.01, -0.01], [0.0, 0.02]])
    cfg_h = HvidlConfig(kappa=0.1, sigma_delta=0.02)
    zc = torch.randn(8, dtype=torch.float64, generator=g)
    worst = _finite_difference_check(
        lambda: hvidl_loss(x0, ys, zc, pipeline, ctd_model, cfg_h, sched, t_g, eps_c,
                           deltas=deltas),
        list(ctd_model.parameters()) + list(pipeline.t3.parameters()), 10, 2,
    )
    assert worst <= 1e-3, f"hvidl_loss gradient rel err {worst}"

    grids = torch.randn(3, 1, 4, 3, dtype=torch.float64, generator=g)
    h_s = torch.randn(3, 4, dtype=torch.float64, generator=g)
    probe = torch.randn(8, dtype=torch.float64, generator=g)
    worst = _finite_difference_check(
        lambda: (enc.encode_miniset(grids, h_s) * probe).sum(),
        list(enc.parameters()), 10, 3,
    )
    assert worst <= 1e-3, f"encode_miniset gradient rel err {worst}"
    elapsed = time.time() - start
    assert elapsed < 120.0
    _ok(7, f"({elapsed:.1f}s)")


def test_criterion_8_hvidl_gating_and_reduction():
    """Gated-out samples give exactly zero gradient; sigma_delta=0 bit-exact."""
    sched = NoiseSchedule()
    torch.manual_seed(8)
    pipeline = LabelPipeline(LabelConfig(d_m=2, d_circuit=6, d_model=4, depth=2, hidden=8))
    model = TokenDenoiser(6, 4, 8, hidden=16, depth=2, time_bands=2)
    g = torch.Generator().manual_seed(80)
    x0 = torch.randn(2, 6, dtype=torch.float64, generator=g)
    eps = torch.randn(2, 6, dtype=torch.float64, generator=g)
    t = torch.tensor([0.3, 0.6], dtype=torch.float64)
    ys = np.array([[0.4, 0.6], [0.9, 0.1]])
    z_ctx = torch.randn(8, dtype=torch.float64, generator=g)

    # gating: sample 1's delta exceeds kappa -> its data never influences grads
    cfg = HvidlConfig(kappa=0.05, sigma_delta=0.02)
    deltas = np.array([[0.0, 0.0], [5.0, -5.0]])

    def grads(x):
        model.zero_grad()
        hvidl_loss(x, ys, z_ctx, pipeline, model, cfg, sched, t, eps,
                   deltas=deltas).backward()
        return [p.grad.clone() for p in model.parameters()]

    base = grads(x0)
    moved = x0.clone()
    moved[1] += 7.0
    for a, b in zip(base, grads(moved)):
        assert torch.equal(a, b)

    # sigma_delta = 0 reduces to the plain whitened loss bit-exactly
    with torch.no_grad():
        y_t = pipeline.transform_batch(ys)
        h_long = pipeline.embed_long(y_t)
        h_diag = pipeline.covariance_diag(h_long)
        h_short = pipeline.short_head(h_long)
    plain = ctd_loss_whitened(
        x0, h_diag, h_short, z_ctx.unsqueeze(0).expand(2, -1), model, sched, t, eps,
        weights=torch.ones(2, dtype=torch.float64),
    )
    vicinal = hvidl_loss(
        x0, ys, z_ctx, pipeline, model, HvidlConfig(kappa=0.1, sigma_delta=0.0),
        sched, t, eps,
    )
    assert plain.item() == vicinal.item()
    _ok(8)


@pytest.mark.filterwarnings("ignore")
def test_criterion_9_label_consistency(trained_bundle, reference_config):
    """Median l2 consistency error < 0.05 on held-out labels."""
    start = time.time()
    bundle, _ = trained_bundle
    pipeline = bundle.pipeline
    # held-out labels: fresh shot noise from a different seed over the corpus
    from conftest import make_records
    from qmlc.config import RunConfig

    held_cfg = RunConfig.from_dict({**reference_config.to_dict(), "seed": 1234})
    held = make_records(held_cfg)
    errs = []
    with torch.no_grad():
        for r in held:
            y = r.y
            pred = pipeline.t2(pipeline.embed_long(pipeline.transform(y)))
            errs.append(float(torch.linalg.vector_norm(
                pred - torch.as_tensor(y, dtype=torch.float64)
            )))
    med = float(np.median(errs))
    assert med < 0.05, f"median consistency error {med}"
    _ok(9, f"(median {med:.4f}, {time.time() - start:.0f}s incl. shared training)")


@pytest.mark.filterwarnings("ignore")
def test_criterion_10_end_to_end_toy_synthesis(trained_bundle, reference_config):
    """Reference config accepts >= 2/3 reachable 1-qubit targets, theta=0.15."""
    start = time.time()
    bundle, _ = trained_bundle
    noise = NOISE_PRESETS[reference_config.noise_preset]()
    gates = tuple(bundle.vocab.gate_names()) + ("idle",)
    accepted = 0
    details = []
    for tgt in enumerate_clifford_distributions(1):
        prompt = SynthesisPrompt(
            target=tgt, gate_subset=gates, L_max=reference_config.T,
            theta_tvd=0.15, max_attempts=64,
        )
        try:
            res = synthesize(prompt, bundle, noise, seed=123)
        except SynthesisExhausted as exc:
            res = exc.best
        accepted += int(res.accepted)
        details.append(f"{np.round(tgt, 2).tolist()}:{'+' if res.accepted else '-'}")
    assert accepted >= 2, f"only {accepted}/3 targets accepted ({details})"
    elapsed = time.time() - start
    assert elapsed < 1800.0
    _ok(10, f"({accepted}/3 accepted, {elapsed:.0f}s)")


def test_criterion_11_decode_embed_inversion():
    """decode_tokens after embed_grid is the exact identity, 500 grids."""
    rng = np.random.default_rng(11)
    for q in (1, 2):
        vocab = default_vocab(q)
        emb = make_orthonormal_embedding(vocab.K, vocab.K)
        dec = TokenDecoder.from_embedding(emb.table)
        for _ in range(250):
            grid = TokenGrid(rng.integers(1, vocab.K + 1, size=(q, 10)))
            x0 = embed_grid(grid, emb).reshape(-1)
            back = decode_tokens(x0, dec, q, 10)
            assert np.array_equal(back.grid, grid.grid)
    _ok(11)
