"""Stabilizer-tableau oracle for ideal (noise-free) Clifford circuits.

Generators are stored as explicit Pauli strings with a +/-1 sign.  Gate
conjugation tables are derived numerically from the 2x2 / 4x4 unitaries at
import time, which keeps the sign bookkeeping honest.  The computational-
basis distribution is extracted by measuring qubits one at a time and
branching on random outcomes; probabilities are dyadic and therefore exact
in floating point.
"""

from __future__ import annotations

import numpy as np

from .circuits import Circuit
from .errors import GateError, ScaleError

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_NAMES = ("I", "X", "Y", "Z")

X90 = np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2)
Y90 = np.array([[1, -1], [1, 1]], dtype=complex) / np.sqrt(2)
CX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def _match_pauli(mat: np.ndarray, basis: list[tuple[str, np.ndarray]]):
    """Identify mat as phase * P for a Pauli P in the given basis."""
    for name, p in basis:
        # phase = tr(P† mat) / dim, exact up to float error
        phase = np.trace(p.conj().T @ mat) / mat.shape[0]
        if np.allclose(mat, phase * p, atol=1e-10) and abs(abs(phase) - 1) < 1e-10:
            return name, complex(phase)
    raise AssertionError("matrix is not proportional to a Pauli")


def _single_qubit_table(u: np.ndarray) -> dict[str, tuple[str, int]]:
    basis = [(n, _PAULI[n]) for n in _NAMES]
    table = {}
    for name, p in basis:
        out = u @ p @ u.conj().T
        out_name, phase = _match_pauli(out, basis)
        sign = int(round(phase.real))
        assert abs(phase.imag) < 1e-10 and sign in (1, -1)
        table[name] = (out_name, sign)
    return table


def _two_qubit_table(u: np.ndarray) -> dict[tuple[str, str], tuple[str, str, int]]:
    basis = [
        (a + b, np.kron(_PAULI[a], _PAULI[b])) for a in _NAMES for b in _NAMES
    ]
    table = {}
    for name, p in basis:
        out = u @ p @ u.conj().T
        out_name, phase = _match_pauli(out, basis)
        sign = int(round(phase.real))
        assert abs(phase.imag) < 1e-10 and sign in (1, -1)
        table[(name[0], name[1])] = (out_name[0], out_name[1], sign)
    return table


_GATE_1Q = {"x90": _single_qubit_table(X90), "y90": _single_qubit_table(Y90)}
_GATE_2Q = {"cx": _two_qubit_table(CX)}

# sigma_a sigma_b = i^e sigma_c
_MUL: dict[tuple[str, str], tuple[str, int]] = {}
for _a in _NAMES:
    for _b in _NAMES:
        prod = _PAULI[_a] @ _PAULI[_b]
        for _c in _NAMES:
            for _e in range(4):
                if np.allclose(prod, (1j) ** _e * _PAULI[_c], atol=1e-10):
                    _MUL[(_a, _b)] = (_c, _e)


def _mul(g1: tuple[tuple[str, ...], int], g2: tuple[tuple[str, ...], int]):
    """Product of two stabilizer-group elements; result sign must be real."""
    p1, s1 = g1
    p2, s2 = g2
    exp = 0
    out = []
    for a, b in zip(p1, p2):
        c, e = _MUL[(a, b)]
        out.append(c)
        exp += e
    exp %= 4
    assert exp in (0, 2), "product of commuting stabilizers must be Hermitian"
    sign = s1 * s2 * (1 if exp == 0 else -1)
    return tuple(out), sign


class Tableau:
    """Stabilizer generators of an n-qubit state, initialized to |0...0>."""

    def __init__(self, n: int):
        if n > 3:
            raise ScaleError("tableau oracle is desk-scale (n <= 3)")
        self.n = n
        self.gens: list[tuple[tuple[str, ...], int]] = []
        for q in range(n):
            paulis = tuple("Z" if i == q else "I" for i in range(n))
            self.gens.append((paulis, 1))

    def copy(self) -> "Tableau":
        t = Tableau.__new__(Tableau)
        t.n = self.n
        t.gens = list(self.gens)
        return t

    def apply_gate(self, name: str, qubits: tuple[int, ...]) -> None:
        if name == "idle":
            return
        if name in _GATE_1Q:
            table = _GATE_1Q[name]
            (q,) = qubits
            new = []
            for paulis, sign in self.gens:
                out, s = table[paulis[q]]
                p = list(paulis)
                p[q] = out
                new.append((tuple(p), sign * s))
            self.gens = new
        elif name in _GATE_2Q:
            table = _GATE_2Q[name]
            c, t = qubits
            new = []
            for paulis, sign in self.gens:
                oc, ot, s = table[(paulis[c], paulis[t])]
                p = list(paulis)
                p[c], p[t] = oc, ot
                new.append((tuple(p), sign * s))
            self.gens = new
        else:
            raise GateError(f"gate {name!r} is not Clifford-simulable here")

    def apply_circuit(self, c: Circuit) -> None:
        for moment in c.moments:
            for op in moment:
                self.apply_gate(op.name, op.qubits)

    # -- measurement -------------------------------------------------------

    def _deterministic_sign(self, q: int) -> int:
        """Sign of Z_q in the stabilizer group (must be a member)."""
        target = tuple("Z" if i == q else "I" for i in range(self.n))
        for mask in range(1, 2 ** len(self.gens)):
            acc = (tuple("I" for _ in range(self.n)), 1)
            for i in range(len(self.gens)):
                if mask >> i & 1:
                    acc = _mul(acc, self.gens[i])
            if acc[0] == target:
                return acc[1]
        raise AssertionError("Z_q neither anticommutes nor lies in the group")

    def _measure_branches(self, q: int):
        """Yield (outcome_bit, probability, post-measurement tableau)."""
        anti = [i for i, (p, _) in enumerate(self.gens) if p[q] in ("X", "Y")]
        if not anti:
            sign = self._deterministic_sign(q)
            yield (0 if sign == 1 else 1, 1.0, self)
            return
        pivot = anti[0]
        base = self.copy()
        pg = base.gens[pivot]
        for i in anti[1:]:
            base.gens[i] = _mul(base.gens[i], pg)
        for bit, sign in ((0, 1), (1, -1)):
            t = base.copy()
            paulis = tuple("Z" if i == q else "I" for i in range(self.n))
            t.gens[pivot] = (paulis, sign)
            yield (bit, 0.5, t)

    def distribution(self) -> np.ndarray:
        """Exact Z-basis outcome distribution (qubit 0 is the MSB)."""
        probs = np.zeros(2**self.n)

        def recurse(t: "Tableau", q: int, idx: int, prob: float):
            if q == t.n:
                probs[idx] += prob
                return
            for bit, pr, post in t._measure_branches(q):
                recurse(post, q + 1, (idx << 1) | bit, prob * pr)

        recurse(self, 0, 0, 1.0)
        return probs


def ideal_clifford_distribution(c: Circuit) -> np.ndarray:
    """Probability vector of the noise-free circuit via the tableau oracle."""
    t = Tableau(c.num_qubits)
    t.apply_circuit(c)
    return t.distribution()
