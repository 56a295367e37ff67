"""Discrete decoding of generated token embeddings and the closed synthesis
loop: prompt -> sample context -> sample tokens -> decode -> simulate ->
accept/reject on total variation distance."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import torch

from .circuits import Circuit, GateVocab, TokenGrid, detokenize
from .device import NoiseModel, apply_circuit
from .errors import (
    DimensionError,
    ProbabilityError,
    StructureError,
    SynthesisExhausted,
    VocabError,
)


def tvd(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance, 0.5 * sum |p_i - q_i|."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionError("distributions must have equal length")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass
class TokenDecoder:
    """Linear projection + softmax over the vocabulary, per grid cell.

    w_dec is (K, d_gate); initialized to the embedding table so that exact
    embeddings decode back to their tokens (orthonormal rows make the true
    token the unique argmax).
    """

    w_dec: np.ndarray
    b_dec: np.ndarray

    @classmethod
    def from_embedding(cls, table: np.ndarray) -> "TokenDecoder":
        return cls(w_dec=np.array(table, dtype=float), b_dec=np.zeros(len(table)))

    def cell_probs(self, x0: np.ndarray, Q: int, T: int) -> np.ndarray:
        """(Q*T*d_gate,) -> (Q, T, K) softmax probabilities."""
        k, d_gate = self.w_dec.shape
        cells = np.asarray(x0, dtype=float).reshape(Q, T, d_gate)
        logits = cells @ self.w_dec.T + self.b_dec
        logits -= logits.max(axis=-1, keepdims=True)
        probs = np.exp(logits)
        return probs / probs.sum(axis=-1, keepdims=True)


def decode_tokens(
    x0,
    decoder: TokenDecoder,
    Q: int,
    T: int,
    mode: str = "argmax",
    seed: int = 0,
) -> TokenGrid:
    """Project each grid cell onto the vocabulary and pick a token.

    argmax ties break toward the lowest token id; sample mode draws
    categorically with a fixed seed.
    """
    if isinstance(x0, torch.Tensor):
        x0 = x0.detach().cpu().numpy()
    probs = decoder.cell_probs(x0, Q, T)
    if mode == "argmax":
        tokens = probs.argmax(axis=-1) + 1
    elif mode == "sample":
        rng = np.random.default_rng(seed)
        k = probs.shape[-1]
        flat = probs.reshape(-1, k)
        tokens = np.array(
            [rng.choice(k, p=row / row.sum()) for row in flat]
        ).reshape(Q, T) + 1
    else:
        raise VocabError(f"unknown decode mode {mode!r}")
    return TokenGrid(tokens.astype(np.int64))


# ---------------------------------------------------------------------------
# synthesis loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisPrompt:
    target: np.ndarray
    gate_subset: tuple[str, ...]
    L_max: int
    theta_tvd: float = 0.1
    max_attempts: int = 64

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float)
        if t.min() < 0 or abs(t.sum() - 1.0) > 1e-9:
            raise ProbabilityError("prompt target must be a normalized distribution")


@dataclass
class SynthesisResult:
    circuit: Circuit | None
    p: np.ndarray | None
    tvd: float
    attempts: int
    accepted: bool
    rejected_structural: int = 0
    rejected_filter: int = 0


def _structurally_valid(
    grid: TokenGrid, vocab: GateVocab, prompt: SynthesisPrompt
) -> Circuit | None:
    try:
        circuit = detokenize(grid, vocab)
    except StructureError:
        return None
    return circuit


def synthesize(
    prompt: SynthesisPrompt,
    bundle,
    noise: NoiseModel,
    seed: int,
    decode_mode: str = "argmax",
) -> SynthesisResult:
    """Sample candidate circuits until one matches the target within
    theta_tvd, or the attempt budget runs out (best attempt returned,
    flagged unaccepted).  Raises SynthesisExhausted when no attempt even
    decodes to a structurally valid circuit."""
    from .diffusion import sample_context, sample_tokens

    children = np.random.SeedSequence(seed).spawn(prompt.max_attempts)
    target = np.asarray(prompt.target, dtype=float)
    allowed = set(prompt.gate_subset)
    best: SynthesisResult | None = None
    structural_rejects = 0
    filter_rejects = 0
    for attempt, child in enumerate(children, start=1):
        s = int(child.generate_state(1)[0]) % (2**63)
        z_ctx = sample_context(bundle.gcd, bundle.sched, bundle.n_steps_gcd, s)
        x0 = sample_tokens(
            target,
            z_ctx,
            bundle.pipeline,
            bundle.ctd,
            bundle.sched,
            bundle.n_steps_ctd,
            s + 1,
        )
        grid = decode_tokens(
            x0, bundle.decoder, bundle.Q, bundle.T, mode=decode_mode, seed=s + 2
        )
        circuit = _structurally_valid(grid, bundle.vocab, prompt)
        if circuit is None:
            structural_rejects += 1
            continue
        used = {op.name for m in circuit.moments for op in m}
        if circuit.length > prompt.L_max or not used <= allowed:
            filter_rejects += 1
            continue
        p = apply_circuit(circuit, noise)
        d = tvd(p, target)
        result = SynthesisResult(
            circuit=circuit,
            p=p,
            tvd=d,
            attempts=attempt,
            accepted=d <= prompt.theta_tvd,
            rejected_structural=structural_rejects,
            rejected_filter=filter_rejects,
        )
        if best is None or d < best.tvd:
            best = result
        if result.accepted:
            return result
    if best is None:
        empty = SynthesisResult(
            circuit=None,
            p=None,
            tvd=1.0,
            attempts=prompt.max_attempts,
            accepted=False,
            rejected_structural=structural_rejects,
            rejected_filter=filter_rejects,
        )
        if structural_rejects == prompt.max_attempts:
            raise SynthesisExhausted(
                f"no structurally valid candidate in {prompt.max_attempts} attempts",
                best=empty,
            )
        # structurally valid candidates existed but all failed the
        # gate-subset/length filters: report a best-effort miss instead
        return empty
    return replace(
        best,
        attempts=prompt.max_attempts,
        rejected_structural=structural_rejects,
        rejected_filter=filter_rejects,
    )


@dataclass
class SuiteReport:
    rows: list = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        if not self.rows:
            return 0.0
        return sum(1 for r in self.rows if r["accepted"]) / len(self.rows)

    @property
    def mean_length(self) -> float:
        lengths = [r["length"] for r in self.rows if r["length"] is not None]
        return float(np.mean(lengths)) if lengths else 0.0


def evaluate_suite(
    prompts: Sequence[SynthesisPrompt],
    bundle,
    noise: NoiseModel,
    seed: int = 0,
) -> SuiteReport:
    """Run synthesize over a prompt list and collect per-prompt metrics."""
    report = SuiteReport()
    children = np.random.SeedSequence(seed).spawn(max(len(prompts), 1))
    for prompt, child in zip(prompts, children):
        s = int(child.generate_state(1)[0]) % (2**63)
        try:
            res = synthesize(prompt, bundle, noise, s)
        except SynthesisExhausted as exc:
            res = exc.best
        report.rows.append(
            {
                "target": [float(v) for v in prompt.target],
                "tvd": res.tvd,
                "accepted": res.accepted,
                "attempts": res.attempts,
                "length": res.circuit.length if res.circuit is not None else None,
                "circuit": res.circuit.to_text() if res.circuit is not None else None,
                "rejected_structural": res.rejected_structural,
                "rejected_filter": res.rejected_filter,
            }
        )
    return report


# ---------------------------------------------------------------------------
# prompt file: target distribution, gate subset, L_max, theta_tvd (TSV)
# ---------------------------------------------------------------------------


def read_prompts(path, max_attempts: int = 64) -> list[SynthesisPrompt]:
    prompts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise StructureError(f"prompt line {lineno}: expected 4 fields")
            target = np.array([float(v) for v in parts[0].split(",")])
            gates = tuple(g for g in parts[1].split(",") if g)
            prompts.append(
                SynthesisPrompt(
                    target=target,
                    gate_subset=gates,
                    L_max=int(parts[2]),
                    theta_tvd=float(parts[3]),
                    max_attempts=max_attempts,
                )
            )
    return prompts


def write_report(report: SuiteReport, path) -> None:
    import json

    with open(path, "w") as fh:
        for row in report.rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        fh.write(
            json.dumps(
                {
                    "summary": True,
                    "acceptance_rate": report.acceptance_rate,
                    "mean_length": report.mean_length,
                },
                sort_keys=True,
            )
            + "\n"
        )
