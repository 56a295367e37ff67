"""Discrete circuit representation, Q x T token grids, and gate embeddings.

A circuit is an ordered list of moments; each moment holds gate applications
on disjoint qubits.  Circuits tokenize to an integer grid of shape (Q, T)
with one token per qubit per time step, and the grid embeds into a real
tensor via an orthonormal per-token embedding table.

Two-qubit gate convention: the token is written on BOTH participating rows
in the same column; the row with the lower qubit index is the control.
Only adjacent-qubit two-qubit gates are representable (target = control + 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionError,
    LengthError,
    StructureError,
    VocabError,
)

ROLE_GATE = "gate"
ROLE_IDLE = "idle"
ROLE_PAD = "padding"


@dataclass(frozen=True)
class GateDef:
    token_id: int
    name: str
    arity: int
    role: str = ROLE_GATE


@dataclass(frozen=True)
class GateVocab:
    """Ordered token vocabulary with exactly one idle and one padding entry."""

    entries: tuple[GateDef, ...]

    def __post_init__(self):
        ids = [e.token_id for e in self.entries]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise VocabError(f"token ids must be exactly 1..K, got {ids}")
        roles = [e.role for e in self.entries]
        if roles.count(ROLE_IDLE) != 1 or roles.count(ROLE_PAD) != 1:
            raise VocabError("vocabulary needs exactly one idle and one padding entry")
        for e in self.entries:
            if e.arity not in (1, 2):
                raise VocabError(f"gate {e.name}: arity must be 1 or 2")

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def idle_id(self) -> int:
        return next(e.token_id for e in self.entries if e.role == ROLE_IDLE)

    @property
    def pad_id(self) -> int:
        return next(e.token_id for e in self.entries if e.role == ROLE_PAD)

    def by_name(self, name: str) -> GateDef:
        for e in self.entries:
            if e.name == name:
                return e
        raise VocabError(f"unknown gate {name!r}")

    def by_id(self, token_id: int) -> GateDef:
        if not 1 <= token_id <= self.K:
            raise VocabError(f"token id {token_id} outside 1..{self.K}")
        return self.entries[token_id - 1]

    def gate_names(self) -> list[str]:
        return [e.name for e in self.entries if e.role == ROLE_GATE]


def default_vocab(num_qubits: int = 2) -> GateVocab:
    """Clifford generating set {X_pi/2, Y_pi/2, CX} plus idle and padding.

    For a single qubit the two-qubit gate is dropped.
    """
    entries = [GateDef(1, "x90", 1), GateDef(2, "y90", 1)]
    if num_qubits >= 2:
        entries.append(GateDef(3, "cx", 2))
    n = len(entries)
    entries.append(GateDef(n + 1, "idle", 1, role=ROLE_IDLE))
    entries.append(GateDef(n + 2, "pad", 1, role=ROLE_PAD))
    return GateVocab(tuple(entries))


@dataclass(frozen=True)
class Op:
    """One gate application: name plus the qubits it acts on (control first)."""

    name: str
    qubits: tuple[int, ...]


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    moments: tuple[tuple[Op, ...], ...] = field(default=())

    def __post_init__(self):
        if self.num_qubits < 1:
            raise StructureError("num_qubits must be positive")
        for j, moment in enumerate(self.moments):
            seen: set[int] = set()
            for op in moment:
                for q in op.qubits:
                    if not 0 <= q < self.num_qubits:
                        raise StructureError(f"moment {j}: qubit {q} out of range")
                    if q in seen:
                        raise StructureError(f"moment {j}: qubit {q} used twice")
                    seen.add(q)
                if len(op.qubits) == 2 and op.qubits[1] != op.qubits[0] + 1:
                    raise StructureError(
                        f"moment {j}: {op.name} needs target = control + 1 "
                        "(adjacent-qubit convention)"
                    )

    @property
    def length(self) -> int:
        return len(self.moments)

    def concat(self, other: "Circuit") -> "Circuit":
        if other.num_qubits != self.num_qubits:
            raise StructureError("qubit count mismatch in concat")
        return Circuit(self.num_qubits, self.moments + other.moments)

    def power(self, m: int) -> "Circuit":
        return Circuit(self.num_qubits, self.moments * m)

    # -- text format -------------------------------------------------------
    # One circuit per line:  Q=<q>;moment;moment;...
    # moment = comma-separated "gate@qubit" or "cx@ctrl>tgt"; empty moment
    # is an empty field.  "Q=<q>" alone denotes the empty circuit.

    def to_text(self) -> str:
        parts = [f"Q={self.num_qubits}"]
        for moment in self.moments:
            ops = sorted(moment, key=lambda op: op.qubits[0])
            frags = []
            for op in ops:
                if len(op.qubits) == 2:
                    frags.append(f"{op.name}@{op.qubits[0]}>{op.qubits[1]}")
                else:
                    frags.append(f"{op.name}@{op.qubits[0]}")
            parts.append(",".join(frags))
        return ";".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        fields = text.strip().split(";")
        head = fields[0]
        if not head.startswith("Q="):
            raise StructureError(f"circuit line must start with 'Q=': {text!r}")
        try:
            q = int(head[2:])
        except ValueError as exc:
            raise StructureError(f"bad qubit count in {head!r}") from exc
        moments = []
        for frag in fields[1:]:
            frag = frag.strip()
            if not frag:
                moments.append(())
                continue
            ops = []
            for item in frag.split(","):
                if "@" not in item:
                    raise StructureError(f"bad op {item!r}")
                name, _, where = item.partition("@")
                if ">" in where:
                    c, _, t = where.partition(">")
                    ops.append(Op(name, (int(c), int(t))))
                else:
                    ops.append(Op(name, (int(where),)))
            moments.append(tuple(ops))
        return cls(q, tuple(moments))


def pack_gates(num_qubits: int, ops: Iterable[Op]) -> Circuit:
    """Greedily left-pack a flat gate sequence into the earliest free moment."""
    moments: list[dict[int, Op]] = []
    for op in ops:
        placed = False
        # scan from the back: an op cannot jump before a moment that uses
        # one of its qubits, so find the last blocking moment first
        start = 0
        for j in range(len(moments) - 1, -1, -1):
            if any(q in moments[j] for q in op.qubits):
                start = j + 1
                break
        for j in range(start, len(moments)):
            if all(q not in moments[j] for q in op.qubits):
                for q in op.qubits:
                    moments[j][q] = op
                placed = True
                break
        if not placed:
            moments.append({q: op for q in op.qubits})
    packed = tuple(
        tuple(sorted({id(op): op for op in m.values()}.values(), key=lambda o: o.qubits[0]))
        for m in moments
    )
    return Circuit(num_qubits, packed)


def random_circuit(
    num_qubits: int,
    length: int,
    vocab: GateVocab,
    rng: np.random.Generator,
    p_gate: float = 0.7,
) -> Circuit:
    """Random gates-only circuit; used for tests and curriculum saturation."""
    one_q = [e.name for e in vocab.entries if e.role == ROLE_GATE and e.arity == 1]
    has_cx = any(e.role == ROLE_GATE and e.arity == 2 for e in vocab.entries)
    cx_name = next(
        (e.name for e in vocab.entries if e.role == ROLE_GATE and e.arity == 2), None
    )
    moments = []
    for _ in range(length):
        ops: list[Op] = []
        q = 0
        while q < num_qubits:
            if rng.random() >= p_gate:
                q += 1
                continue
            if has_cx and q + 1 < num_qubits and rng.random() < 0.3:
                ops.append(Op(cx_name, (q, q + 1)))
                q += 2
            else:
                ops.append(Op(one_q[rng.integers(len(one_q))], (q,)))
                q += 1
        moments.append(tuple(ops))
    return Circuit(num_qubits, tuple(moments))


# ---------------------------------------------------------------------------
# token grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenGrid:
    grid: np.ndarray  # (Q, T) integer matrix, entries in 1..K

    def __post_init__(self):
        if self.grid.ndim != 2:
            raise DimensionError("token grid must be 2-D")

    @property
    def Q(self) -> int:
        return self.grid.shape[0]

    @property
    def T(self) -> int:
        return self.grid.shape[1]


def tokenize_circuit(c: Circuit, vocab: GateVocab, T: int) -> TokenGrid:
    """Map a circuit onto a (Q, T) token grid.

    Moments map left-to-right to columns; qubits without a gate in an
    executed column get the idle token; trailing columns are padding.
    Explicit ``idle`` placements tokenize identically to implicit idling.
    """
    if c.length > T:
        raise LengthError(f"circuit length {c.length} exceeds grid depth {T}")
    grid = np.full((c.num_qubits, T), vocab.pad_id, dtype=np.int64)
    for j, moment in enumerate(c.moments):
        grid[:, j] = vocab.idle_id
        for op in moment:
            gate = vocab.by_name(op.name)
            if gate.role == ROLE_PAD:
                raise VocabError("padding token cannot be placed explicitly")
            if gate.arity != len(op.qubits):
                raise VocabError(f"gate {op.name}: arity mismatch")
            for q in op.qubits:
                grid[q, j] = gate.token_id
    return TokenGrid(grid)


def detokenize(g: TokenGrid, vocab: GateVocab) -> Circuit:
    """Inverse of tokenization: strip padding suffix and idle tokens.

    Raises StructureError when padding is not a clean column suffix or a
    two-qubit token is not paired on adjacent rows of the same column.
    """
    grid = g.grid
    if grid.min() < 1 or grid.max() > vocab.K:
        raise VocabError(f"grid entries must lie in 1..{vocab.K}")
    pad = vocab.pad_id
    is_pad = grid == pad
    col_pad = is_pad.any(axis=0)
    col_full_pad = is_pad.all(axis=0)
    if not np.array_equal(col_pad, col_full_pad):
        raise StructureError("padding must fill whole columns")
    length = int(np.argmax(col_pad)) if col_pad.any() else g.T
    if col_pad.any() and not col_pad[length:].all():
        raise StructureError("padding columns must form a contiguous suffix")
    moments = []
    for j in range(length):
        ops: list[Op] = []
        rows = grid[:, j]
        q = 0
        while q < g.Q:
            gate = vocab.by_id(int(rows[q]))
            if gate.role == ROLE_IDLE:
                q += 1
            elif gate.arity == 1:
                ops.append(Op(gate.name, (q,)))
                q += 1
            else:
                if q + 1 >= g.Q or int(rows[q + 1]) != gate.token_id:
                    raise StructureError(
                        f"unpaired two-qubit token {gate.name} at column {j}, row {q}"
                    )
                ops.append(Op(gate.name, (q, q + 1)))
                q += 2
        moments.append(tuple(ops))
    return Circuit(g.Q, tuple(moments))


# ---------------------------------------------------------------------------
# orthonormal gate embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateEmbedding:
    table: np.ndarray  # (K, d_gate), orthonormal rows

    @property
    def K(self) -> int:
        return self.table.shape[0]

    @property
    def d_gate(self) -> int:
        return self.table.shape[1]

    def gram_deviation(self) -> float:
        gram = self.table @ self.table.T
        return float(np.abs(gram - np.eye(self.K)).max())


def make_orthonormal_embedding(K: int, d_gate: int, seed: int = 0) -> GateEmbedding:
    """Orthonormal K x d_gate token embedding table.

    d_gate == K yields the one-hot basis; larger widths use the Q factor of
    a seeded Gaussian matrix (signs fixed for determinism).
    """
    if d_gate < K:
        raise DimensionError(f"d_gate={d_gate} must be >= K={K}")
    if d_gate == K:
        return GateEmbedding(np.eye(K))
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d_gate, d_gate))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return GateEmbedding(q[:K].copy())


def embed_grid(g: TokenGrid, e: GateEmbedding) -> np.ndarray:
    """Elementwise token lookup; returns a (Q, T, d_gate) tensor."""
    if g.grid.min() < 1 or g.grid.max() > e.K:
        raise VocabError(f"grid entries must lie in 1..{e.K}")
    return e.table[g.grid - 1]
