"""Simulated noisy quantum device and synthetic GST-style dataset generation.

Full density-matrix evolution at desk scale (Q <= 3): per moment the gate
unitaries act first, then single-qubit noise channels on the qubits the
moment touches, then a two-qubit depolarizing channel on touched pairs.
Qubits left idle by a moment decohere with dephasing only; an explicit
``idle`` placement counts as a touched qubit and receives the full
single-qubit channel suite.  Readout error is a per-qubit confusion matrix
applied to the final diagonal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuits import Circuit
from .errors import (
    GateError,
    ProbabilityError,
    ScaleError,
    StructureError,
)
from .labels import normalize_counts
from .stabilizer import CX, X90, Y90

MAX_QUBITS = 3

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_GATES = {"x90": X90, "y90": Y90, "cx": CX, "idle": np.eye(2, dtype=complex)}


def _per_qubit(value, q: int) -> float:
    if np.isscalar(value):
        return float(value)
    return float(value[q])


@dataclass(frozen=True)
class NoiseModel:
    """Per-qubit channel rates plus readout confusion.

    Rates may be scalars (uniform across qubits/pairs) or sequences indexed
    by qubit (pairs indexed by the lower qubit).  ``readout`` is a single
    row-stochastic 2x2 confusion matrix or a (Q, 2, 2) stack.
    """

    lam_dep: float | Sequence[float] = 0.0
    gam_ad: float | Sequence[float] = 0.0
    lam_z: float | Sequence[float] = 0.0
    lam_2q: float | Sequence[float] = 0.0
    readout: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        for name in ("lam_dep", "gam_ad", "lam_z", "lam_2q"):
            vals = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(vals < 0) or np.any(vals > 1):
                raise ProbabilityError(f"{name} must lie in [0, 1]")
        ro = np.asarray(self.readout, dtype=float)
        if ro.shape[-2:] != (2, 2):
            raise ProbabilityError("readout confusion must be 2x2 per qubit")
        if np.abs(ro.sum(axis=-1) - 1.0).max() > 1e-12:
            raise ProbabilityError("confusion rows must sum to 1")

    def confusion_for(self, q: int) -> np.ndarray:
        ro = np.asarray(self.readout, dtype=float)
        return ro if ro.ndim == 2 else ro[q]

    @property
    def is_noiseless(self) -> bool:
        flat = [
            float(np.max(np.atleast_1d(np.asarray(getattr(self, n), dtype=float))))
            for n in ("lam_dep", "gam_ad", "lam_z", "lam_2q")
        ]
        ro = np.asarray(self.readout, dtype=float)
        ident = (
            np.abs(ro - np.eye(2)).max() < 1e-15
            if ro.ndim == 2
            else all(np.abs(m - np.eye(2)).max() < 1e-15 for m in ro)
        )
        return max(flat) == 0.0 and ident


def device_a() -> NoiseModel:
    """Default noise preset; configuration values, not measured ones."""
    flip = 0.01
    ro = np.array([[1 - flip, flip], [flip, 1 - flip]])
    return NoiseModel(lam_dep=0.005, gam_ad=0.002, lam_z=0.003, lam_2q=0.02, readout=ro)


NOISE_PRESETS = {
    "ideal": NoiseModel,
    "deviceA": device_a,
}


# ---------------------------------------------------------------------------
# Kraus channels
# ---------------------------------------------------------------------------


def depolarizing_kraus(lam: float) -> list[np.ndarray]:
    i, x, y, z = (_PAULI_1Q[n] for n in "IXYZ")
    return [
        np.sqrt(1 - 3 * lam / 4) * i,
        np.sqrt(lam / 4) * x,
        np.sqrt(lam / 4) * y,
        np.sqrt(lam / 4) * z,
    ]


def amplitude_damping_kraus(gam: float) -> list[np.ndarray]:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gam)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gam)], [0, 0]], dtype=complex)
    return [k0, k1]


def dephasing_kraus(lam: float) -> list[np.ndarray]:
    return [
        np.sqrt(1 - lam) * _PAULI_1Q["I"],
        np.sqrt(lam) * _PAULI_1Q["Z"],
    ]


def two_qubit_depolarizing_kraus(lam: float) -> list[np.ndarray]:
    ops = [np.sqrt(1 - 15 * lam / 16) * np.eye(4, dtype=complex)]
    for a in "IXYZ":
        for b in "IXYZ":
            if a == b == "I":
                continue
            ops.append(np.sqrt(lam / 16) * np.kron(_PAULI_1Q[a], _PAULI_1Q[b]))
    return ops


def kraus_completeness_defect(kraus: Sequence[np.ndarray]) -> float:
    dim = kraus[0].shape[0]
    acc = sum(k.conj().T @ k for k in kraus)
    return float(np.abs(acc - np.eye(dim)).max())


def _lift(op: np.ndarray, qubits: tuple[int, ...], num_qubits: int) -> np.ndarray:
    """Embed a 1- or 2-qubit operator into the full Hilbert space.

    Two-qubit operators only on adjacent qubits (matching the circuit
    encoding convention), so a plain kron suffices.
    """
    mats = []
    q = 0
    while q < num_qubits:
        if q in qubits:
            if len(qubits) == 2:
                if qubits != (q, q + 1):
                    raise StructureError("two-qubit ops must sit on adjacent qubits")
                mats.append(op)
                q += 2
            else:
                mats.append(op)
                q += 1
        else:
            mats.append(np.eye(2, dtype=complex))
            q += 1
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _apply_kraus(rho, kraus, qubits, num_qubits):
    lifted = [_lift(k, qubits, num_qubits) for k in kraus]
    return sum(k @ rho @ k.conj().T for k in lifted)


def apply_circuit(c: Circuit, nm: NoiseModel, validate: bool = False) -> np.ndarray:
    """Density-matrix simulation of c under nm; returns the outcome vector.

    With validate=True, trace preservation and Hermiticity are asserted
    after every moment (used by the test suite).
    """
    q = c.num_qubits
    if q > MAX_QUBITS:
        raise ScaleError(f"density-matrix sim capped at {MAX_QUBITS} qubits")
    dim = 2**q
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for moment in c.moments:
        touched: set[int] = set()
        pairs: list[tuple[int, int]] = []
        for op in moment:
            if op.name not in _GATES:
                raise GateError(f"gate {op.name!r} not simulable")
            u = _GATES[op.name]
            rho = _lift(u, op.qubits, q) @ rho @ _lift(u, op.qubits, q).conj().T
            touched.update(op.qubits)
            if len(op.qubits) == 2:
                pairs.append(op.qubits)
        for i in range(q):
            if i in touched:
                lam = _per_qubit(nm.lam_dep, i)
                if lam > 0:
                    rho = _apply_kraus(rho, depolarizing_kraus(lam), (i,), q)
                gam = _per_qubit(nm.gam_ad, i)
                if gam > 0:
                    rho = _apply_kraus(rho, amplitude_damping_kraus(gam), (i,), q)
            lz = _per_qubit(nm.lam_z, i)
            if lz > 0:
                rho = _apply_kraus(rho, dephasing_kraus(lz), (i,), q)
        for pair in pairs:
            lam2 = _per_qubit(nm.lam_2q, pair[0])
            if lam2 > 0:
                rho = _apply_kraus(
                    rho, two_qubit_depolarizing_kraus(lam2), pair, q
                )
        if validate:
            if abs(np.trace(rho).real - 1.0) > 1e-9:
                raise ProbabilityError("trace not preserved")
            if np.abs(rho - rho.conj().T).max() > 1e-9:
                raise ProbabilityError("density matrix not Hermitian")
            if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -1e-8:
                raise ProbabilityError("density matrix not positive")
    p = np.real(np.diag(rho)).copy()
    conf = np.ones((1, 1))
    for i in range(q):
        conf = np.kron(conf, nm.confusion_for(i))
    p = p @ conf
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ProbabilityError(f"output distribution sums to {total}")
    return p / total


def sample_counts(p: np.ndarray, shots: int, seed: int) -> np.ndarray:
    """Multinomial shot sampling, deterministic for a fixed seed."""
    p = np.asarray(p, dtype=float)
    if shots <= 0:
        raise ProbabilityError("shots must be positive")
    if p.min() < -1e-12:
        raise ProbabilityError("negative probability entry")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    return rng.multinomial(shots, p)


# ---------------------------------------------------------------------------
# GST records and dataset generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GstRecord:
    circuit: Circuit
    p: np.ndarray
    counts: np.ndarray
    shots: int
    rho0_id: str = "zeros"
    meas_id: str = "z"
    preset: str = "custom"
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise ProbabilityError("record p must be normalized and nonnegative")
        if len(p) != 2**self.circuit.num_qubits:
            raise ProbabilityError("record p has wrong dimension")
        if int(np.sum(self.counts)) != self.shots:
            raise ProbabilityError("counts must sum to shots")

    @property
    def length(self) -> int:
        return self.circuit.length

    @property
    def y(self) -> np.ndarray:
        return normalize_counts(self.counts)


@dataclass(frozen=True)
class DatasetConfig:
    Q: int
    germs: tuple[Circuit, ...]
    powers: tuple[int, ...]
    T_max: int
    shots: int
    noise: NoiseModel
    seed: int
    preset: str = "custom"

    def __post_init__(self):
        if self.shots <= 0:
            raise ProbabilityError("shots must be positive")
        for g in self.germs:
            if g.num_qubits != self.Q:
                raise StructureError("germ qubit count must match Q")


def generate_germ_dataset(cfg: DatasetConfig) -> list[GstRecord]:
    """Simulate germ^power circuits and sample shot counts.

    Deterministic for a fixed seed; the random stream is split per record
    so the result does not depend on evaluation order.  Repetitions that
    exceed T_max are skipped with a warning.
    """
    combos = [(g, m) for g in cfg.germs for m in cfg.powers]
    children = np.random.SeedSequence(cfg.seed).spawn(len(combos))
    records = []
    for (germ, m), child in zip(combos, children):
        circuit = germ.power(m)
        if circuit.length > cfg.T_max:
            warnings.warn(
                f"germ^{m} of length {circuit.length} exceeds T_max={cfg.T_max}; skipped"
            )
            continue
        p = apply_circuit(circuit, cfg.noise)
        rec_seed = int(child.generate_state(1)[0])
        counts = sample_counts(p, cfg.shots, rec_seed)
        records.append(
            GstRecord(
                circuit=circuit,
                p=p,
                counts=counts,
                shots=cfg.shots,
                preset=cfg.preset,
                seed=rec_seed,
            )
        )
    return records


# ---------------------------------------------------------------------------
# dataset file format: "qmlc-gst/1", one tab-separated record per line
# ---------------------------------------------------------------------------

DATASET_FORMAT = "qmlc-gst/1"


def write_dataset(records: Sequence[GstRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(DATASET_FORMAT + "\n")
        for r in records:
            p_str = ",".join(f"{v:.12g}" for v in r.p)
            c_str = ",".join(str(int(v)) for v in r.counts)
            fh.write(
                "\t".join(
                    [
                        r.circuit.to_text(),
                        str(r.shots),
                        c_str,
                        p_str,
                        str(r.length),
                        r.preset,
                        str(r.seed),
                    ]
                )
                + "\n"
            )


def read_dataset(path) -> list[GstRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != DATASET_FORMAT:
            raise StructureError(f"unexpected dataset header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise StructureError(f"line {lineno}: expected 7 fields, got {len(parts)}")
            try:
                circuit = Circuit.from_text(parts[0])
                shots = int(parts[1])
                counts = np.array([int(v) for v in parts[2].split(",")])
                p = np.array([float(v) for v in parts[3].split(",")])
                length = int(parts[4])
            except (ValueError, StructureError) as exc:
                raise StructureError(f"line {lineno}: {exc}") from exc
            if length != circuit.length:
                raise StructureError(f"line {lineno}: length field mismatch")
            records.append(
                GstRecord(
                    circuit=circuit,
                    p=p,
                    counts=counts,
                    shots=shots,
                    preset=parts[5],
                    seed=int(parts[6]),
                )
            )
    return records
