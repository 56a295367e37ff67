"""Counting oracles for Clifford output distributions, mini-set grouping,
and staged curriculum construction.

Distinctness of records follows the ideal-distribution grid: two records
count as distinct when their probability vectors differ after rounding to
the nearest multiple of 2^-Q.  Raw float inequality would make every noisy
record distinct and defeat the grouping rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .device import GstRecord
from .errors import DomainError, SetError, StructureError


def gaussian_binomial(n: int, k: int) -> int:
    """Number of k-dimensional linear subspaces of F_2^n, exact."""
    if n < 0 or k < 0:
        raise DomainError("n and k must be nonnegative")
    if k > n:
        return 0
    num = 1
    den = 1
    for i in range(k):
        num *= 2 ** (n - i) - 1
        den *= 2 ** (i + 1) - 1
    assert num % den == 0
    return num // den


def count_affine_subspaces(n: int, k: int) -> int:
    """N(n, k) = 2^(n-k) * [n choose k]_2."""
    if k > n:
        return 0
    return 2 ** (n - k) * gaussian_binomial(n, k)


def count_clifford_distributions(n: int) -> int:
    """Total number of distinct Z-basis distributions of n-qubit Clifford
    circuits (deep-circuit limit): T(n) = sum_k N(n, k)."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    return sum(count_affine_subspaces(n, k) for k in range(n + 1))


def enumerate_affine_subspaces(n: int) -> list[tuple[int, ...]]:
    """All affine subspaces of F_2^n by brute force (desk scale, n <= 3).

    A nonempty point set is affine iff it is closed under x ^ y ^ z.
    """
    if n > 3:
        raise DomainError("enumeration is desk-scale (n <= 3)")
    points = list(range(2**n))
    out = []
    for mask in range(1, 2 ** len(points)):
        subset = [p for p in points if mask >> p & 1]
        closed = all(
            (x ^ y ^ z) in subset for x in subset for y in subset for z in subset
        )
        if closed:
            out.append(tuple(subset))
    return out


def enumerate_clifford_distributions(n: int) -> list[np.ndarray]:
    """Every distribution reachable by deep n-qubit Clifford circuits:
    uniform on each affine subspace of the outcome space."""
    dists = []
    for subset in enumerate_affine_subspaces(n):
        p = np.zeros(2**n)
        p[list(subset)] = 1.0 / len(subset)
        dists.append(p)
    return dists


def distribution_key(p: np.ndarray, num_qubits: int) -> tuple[int, ...]:
    """Round p onto the ideal Clifford support grid (multiples of 2^-Q)."""
    scale = 2**num_qubits
    return tuple(int(round(v * scale)) for v in np.asarray(p, dtype=float))


@dataclass(frozen=True)
class MiniSet:
    record_ids: tuple[int, ...]
    l_min: int
    l_max: int
    stage: int = -1

    @property
    def size(self) -> int:
        return len(self.record_ids)

    def records(self, pool: Sequence[GstRecord]) -> list[GstRecord]:
        return [pool[i] for i in self.record_ids]


@dataclass(frozen=True)
class CurriculumPlan:
    stages: tuple[tuple[MiniSet, ...], ...]
    edges: tuple[int, ...]


def group_records(
    records: Sequence[GstRecord],
    n_set: int,
    tau: int,
    seed: int,
    max_use: int = 4,
) -> list[MiniSet]:
    """Greedy randomized mini-set construction.

    Within each length band of width tau, sets of n_set records with
    pairwise-distinct rounded distributions are sampled; records may appear
    in up to max_use sets, and every record lands in at least one set when
    the band permits it.  Bands too poor in distinct distributions emit
    reduced-size sets with a warning.
    """
    if not records:
        raise SetError("empty record pool")
    if n_set < 2:
        raise SetError("n_set must be at least 2")
    rng = np.random.default_rng(seed)
    q = records[0].circuit.num_qubits
    keys = [distribution_key(r.p, q) for r in records]

    lengths = sorted({r.length for r in records})
    bands: list[tuple[int, int]] = []
    lo = lengths[0]
    while True:
        hi = lo + tau
        bands.append((lo, hi))
        rest = [l for l in lengths if l > hi]
        if not rest:
            break
        lo = rest[0]

    sets: list[MiniSet] = []
    usage = {i: 0 for i in range(len(records))}
    for lo, hi in bands:
        members = [i for i, r in enumerate(records) if lo <= r.length <= hi]
        distinct = len({keys[i] for i in members})
        if distinct < n_set:
            warnings.warn(
                f"length band [{lo}, {hi}] has only {distinct} distinct "
                f"distributions (< n_set={n_set}); emitting reduced-size sets"
            )

        def build_set(anchor: int | None) -> tuple[int, ...]:
            chosen: list[int] = []
            chosen_keys: set = set()
            if anchor is not None:
                chosen.append(anchor)
                chosen_keys.add(keys[anchor])
            candidates = [i for i in members if i not in chosen]
            # low-usage records first, random tie-break
            order = sorted(
                candidates, key=lambda i: (usage[i], rng.random())
            )
            for i in order:
                if len(chosen) == n_set:
                    break
                if keys[i] in chosen_keys or usage[i] >= max_use:
                    continue
                chosen.append(i)
                chosen_keys.add(keys[i])
            return tuple(sorted(chosen))

        target = max(1, int(np.ceil(2 * len(members) / n_set)))
        for _ in range(target):
            ids = build_set(None)
            if not ids:
                continue
            sets.append(_make_set(ids, records))
            for i in ids:
                usage[i] += 1
        # coverage fix-up: anchor a set on every still-unused record
        for i in members:
            if usage[i] == 0:
                ids = build_set(i)
                sets.append(_make_set(ids, records))
                for j in ids:
                    usage[j] += 1
    return sets


def _make_set(ids: tuple[int, ...], records: Sequence[GstRecord]) -> MiniSet:
    lens = [records[i].length for i in ids]
    return MiniSet(record_ids=ids, l_min=min(lens), l_max=max(lens))


def build_curriculum(sets: Sequence[MiniSet], stage_edges: Sequence[int]) -> CurriculumPlan:
    """Assign each set to the first stage whose length edge covers l_max."""
    edges = tuple(stage_edges)
    if list(edges) != sorted(set(edges)):
        raise DomainError("stage edges must be strictly increasing")
    staged: list[list[MiniSet]] = [[] for _ in edges]
    for s in sets:
        idx = next((i for i, e in enumerate(edges) if s.l_max <= e), None)
        if idx is None:
            warnings.warn(
                f"set with l_max={s.l_max} exceeds final edge {edges[-1]}; "
                "assigned to final stage"
            )
            idx = len(edges) - 1
        staged[idx].append(MiniSet(s.record_ids, s.l_min, s.l_max, stage=idx))
    return CurriculumPlan(tuple(tuple(st) for st in staged), edges)


# ---------------------------------------------------------------------------
# mini-set manifest file: set id, stage, record ids, l_min, l_max (TSV)
# ---------------------------------------------------------------------------


def write_manifest(plan: CurriculumPlan, path) -> None:
    with open(path, "w") as fh:
        set_id = 0
        for stage_sets in plan.stages:
            for s in stage_sets:
                ids = ",".join(str(i) for i in s.record_ids)
                fh.write(f"{set_id}\t{s.stage}\t{ids}\t{s.l_min}\t{s.l_max}\n")
                set_id += 1


def read_manifest(path) -> CurriculumPlan:
    by_stage: dict[int, list[MiniSet]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise StructureError(f"manifest line {lineno}: expected 5 fields")
            stage = int(parts[1])
            ids = tuple(int(v) for v in parts[2].split(","))
            s = MiniSet(ids, int(parts[3]), int(parts[4]), stage=stage)
            by_stage.setdefault(stage, []).append(s)
    n_stages = max(by_stage) + 1 if by_stage else 0
    stages = tuple(tuple(by_stage.get(i, ())) for i in range(n_stages))
    edges = tuple(
        max((s.l_max for s in st), default=0) for st in stages
    )
    return CurriculumPlan(stages, edges)
