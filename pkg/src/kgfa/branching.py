"""Branching interference-cancellation model with work counters.

Where the oracle decoder answers "who is recoverable", this module
models *how* a receiver without ground-truth placement knowledge gets
there: iteration state is a set of candidate residual matrices, and each
cancellation hypothesis (MAI signal) applied to each matrix spawns one
candidate branch.  The three IC modes differ only in where a signal is
subtracted and what that costs:

* precise: the true cell of every constituent is known, subtraction
  happens exactly there;
* context-aware: every cell is tested for the constituent, subtraction
  happens where the test passes;
* blind: the constituent is subtracted from every cell; a cell that did
  not contain it becomes corrupted and its CRC can never pass again.

All three recover the same device set (the decode gate is the same
exclusive-cell rule, and corrupted cells are rejected); they trade
detection reads against subtraction work, which is what the counters
record.  One cancellation hypothesis per branch also means a single
branch never cancels more than beta devices from a cell in one round,
matching the oracle's per-cell bound at alpha = 2.  With deeper
iteration budgets the branch history accumulates across rounds and this
model can outrun the oracle's per-cell rule; equivalence is therefore
asserted at alpha = 2, the regime the closed-form analysis covers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .core import (
    AccessMap,
    DecodeOutcome,
    IC_BLIND,
    IC_CONTEXT,
    IC_NONE,
    IC_PRECISE,
    OperationCounters,
    PacketReplica,
    SCHEME_RS,
    SystemConfig,
    sibling_indices,
)
from .errors import ResourceBudgetError

DEFAULT_MATRIX_BUDGET = 10 ** 6


@dataclass(frozen=True)
class MaiSignal:
    """One cancellation hypothesis: replicas of at most beta distinct devices."""

    constituents: frozenset

    @property
    def is_empty(self) -> bool:
        return not self.constituents

    def mtcds(self) -> frozenset:
        return frozenset(rep.mtcd for rep in self.constituents)


EMPTY_SIGNAL = MaiSignal(frozenset())


class ResidualMatrix:
    """One candidate residual grid.

    cells is a flat tuple of length Q*R (index f*R + b) of
    (occupants frozenset, corrupted bool) pairs.  Identity and hashing
    go through the cells only, so branches that converged to the same
    residual merge regardless of which signal produced them.
    """

    __slots__ = ("cells", "provenance")

    def __init__(self, cells: tuple, provenance=None):
        self.cells = cells
        self.provenance = provenance

    def __eq__(self, other):
        return isinstance(other, ResidualMatrix) and self.cells == other.cells

    def __hash__(self):
        return hash(self.cells)


@dataclass
class MatrixSet:
    """Iteration state: the live residual candidates plus ground truth
    for precise-mode cell lookup."""

    config: SystemConfig
    matrices: list
    truth: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.matrices)


def initial_matrix_set(amap: AccessMap) -> MatrixSet:
    cells = []
    for f in range(amap.config.q):
        for b in range(amap.config.r):
            cells.append((amap.cells[f][b], False))
    matrix = ResidualMatrix(tuple(cells))
    return MatrixSet(config=amap.config, matrices=[matrix],
                     truth=amap.replica_positions())


def _subtract(matrix: ResidualMatrix, signal: MaiSignal, mode: str,
              config: SystemConfig, truth: dict,
              counters: OperationCounters) -> ResidualMatrix:
    r = config.r
    cells = list(matrix.cells)
    if mode == IC_PRECISE:
        for rep in signal.constituents:
            f, b = truth[rep]
            counters.memory_reads += 1
            idx = f * r + b
            occ, corrupted = cells[idx]
            counters.ic_subtractions += 1
            counters.memory_writes += 1
            # retrieved signals are truly placed, so the subtraction
            # always finds its target here
            cells[idx] = (occ - {rep}, corrupted)
    elif mode == IC_CONTEXT:
        for rep in signal.constituents:
            for idx in range(len(cells)):
                occ, corrupted = cells[idx]
                counters.memory_reads += 1
                if rep in occ:
                    counters.ic_subtractions += 1
                    counters.memory_writes += 1
                    cells[idx] = (occ - {rep}, corrupted)
    elif mode == IC_BLIND:
        for rep in signal.constituents:
            for idx in range(len(cells)):
                occ, corrupted = cells[idx]
                counters.memory_reads += 1
                counters.ic_subtractions += 1
                counters.memory_writes += 1
                if rep in occ:
                    cells[idx] = (occ - {rep}, corrupted)
                else:
                    # subtracting an absent signal injects garbage: the
                    # cell survives only as a corrupted candidate
                    cells[idx] = (occ, True)
    else:
        raise ValueError(f"ic mode {mode!r} cannot branch")
    return ResidualMatrix(tuple(cells), provenance=signal)


def ic_apply(matrix_set: MatrixSet, mai: list, mode: str,
             counters: OperationCounters = None,
             budget: int = DEFAULT_MATRIX_BUDGET) -> MatrixSet:
    """Spawn one branch per (matrix, signal) pair and merge duplicates.

    The empty signal contributes the input matrix itself (aliased, not
    counted as materialized).  matrices_materialized counts branches
    before deduplication so the growth bound stays checkable.
    """
    if counters is None:
        counters = OperationCounters()
    out = {}
    for matrix in matrix_set.matrices:
        for signal in mai:
            if signal.is_empty:
                branch = matrix
            else:
                if counters.matrices_materialized + 1 > budget:
                    raise ResourceBudgetError(
                        "materialized-matrix budget exceeded during branching",
                        estimated=len(matrix_set.matrices) * len(mai),
                        allowed=budget)
                counters.matrices_materialized += 1
                branch = _subtract(matrix, signal, mode, matrix_set.config,
                                   matrix_set.truth, counters)
            out.setdefault(branch.cells, branch)
    return MatrixSet(config=matrix_set.config,
                     matrices=list(out.values()),
                     truth=matrix_set.truth)


def dec_crc(matrix_set: MatrixSet, counters: OperationCounters = None) -> set:
    """Union of exclusive-cell replicas over all candidates, CRC-gated:
    corrupted cells never pass."""
    if counters is None:
        counters = OperationCounters()
    decoded = set()
    for matrix in matrix_set.matrices:
        for occ, corrupted in matrix.cells:
            counters.decode_attempts += 1
            counters.memory_reads += len(occ)
            if corrupted or len(occ) != 1:
                continue
            (rep,) = occ
            decoded.add(rep)
    return decoded


def rs_recover(decoded: set, config: SystemConfig) -> set:
    """Code-retrieval step: devices with >= Q distinct decoded packets
    yield their remaining packet indices.  Output is disjoint from input."""
    per_device = {}
    for rep in decoded:
        per_device.setdefault(rep.mtcd, set()).add(rep.packet_index)
    retrieved = set()
    for mtcd, indices in per_device.items():
        if len(indices) >= config.q:
            for idx in range(1, config.qk + 1):
                if idx not in indices:
                    retrieved.add(PacketReplica(mtcd, idx))
    return retrieved


def sibling_recover(decoded: set, config: SystemConfig) -> set:
    """Copy-scheme retrieval: every decoded packet reveals its other
    K-1 verbatim copies."""
    retrieved = set()
    for rep in decoded:
        for s in sibling_indices(rep.packet_index, config.q, config.k):
            sib = PacketReplica(rep.mtcd, s)
            if sib not in decoded:
                retrieved.add(sib)
    return retrieved


def mai_generate(retrieved: set, beta: int,
                 counters: OperationCounters = None) -> list:
    """All cancellation hypotheses over the retrieved packets: the empty
    signal first, then every combination of one packet each from t
    distinct devices, 1 <= t <= beta."""
    if beta < 1:
        raise ValueError("beta must be at least 1")
    if counters is None:
        counters = OperationCounters()
    per_device = {}
    for rep in sorted(retrieved):
        per_device.setdefault(rep.mtcd, []).append(rep)
    devices = sorted(per_device)
    signals = [EMPTY_SIGNAL]
    for t in range(1, beta + 1):
        for combo in itertools.combinations(devices, t):
            for picks in itertools.product(*(per_device[d] for d in combo)):
                signals.append(MaiSignal(frozenset(picks)))
    counters.mai_signals_generated += len(signals) - 1
    counters.memory_writes += len(signals) - 1
    return signals


def _recovered_now(decoded_indices: set, config: SystemConfig) -> bool:
    if config.scheme == SCHEME_RS:
        return len(decoded_indices) >= config.q
    return len({(i - 1) % config.q for i in decoded_indices}) == config.q


def run_generic_iic(amap: AccessMap,
                    budget: int = DEFAULT_MATRIX_BUDGET) -> DecodeOutcome:
    """Full pipeline: branch, decode, retrieve, hypothesize, repeat.

    Signals for iteration i are built from packets retrieved in
    iteration i-1 only, at the start of iteration i, so a final
    iteration does not fabricate hypotheses nobody will test.
    """
    cfg = amap.config
    if cfg.ic == IC_NONE:
        raise ValueError("branching decode requires an ic mode")
    counters = OperationCounters(matrices_materialized=1)
    state = initial_matrix_set(amap)
    recover = rs_recover if cfg.scheme == SCHEME_RS else sibling_recover

    n = cfg.n
    decoded_by_device = {m: set() for m in range(1, n + 1)}
    recovered = {m: False for m in range(1, n + 1)}
    recovery_iteration = {m: None for m in range(1, n + 1)}
    decoded_all = set()
    retrieved_all = set()
    pending = set()
    exclusive_iter1 = {m: 0 for m in range(1, n + 1)}

    for iteration in range(1, cfg.alpha + 1):
        if iteration > 1:
            signals = mai_generate(pending, cfg.beta, counters)
            counters.peak_buffered_signals = max(
                counters.peak_buffered_signals, len(signals) + len(state))
            state = ic_apply(state, signals, cfg.ic, counters, budget)
            counters.peak_buffered_signals = max(
                counters.peak_buffered_signals, len(signals) + len(state))

        decoded = dec_crc(state, counters)
        if iteration == 1:
            for rep in decoded:
                exclusive_iter1[rep.mtcd] += 1
        new = decoded - decoded_all
        decoded_all |= new
        for rep in new:
            decoded_by_device[rep.mtcd].add(rep.packet_index)

        newly_recovered = 0
        for m in range(1, n + 1):
            if not recovered[m] and _recovered_now(decoded_by_device[m], cfg):
                recovered[m] = True
                recovery_iteration[m] = iteration
                newly_recovered += 1

        pending = recover(decoded_all, cfg) - retrieved_all - decoded_all
        retrieved_all |= pending

        if all(recovered.values()) or newly_recovered == 0:
            break

    return DecodeOutcome(
        recovered=tuple(recovered[m] for m in range(1, n + 1)),
        recovery_iteration=tuple(recovery_iteration[m] for m in range(1, n + 1)),
        exclusive_rb_count_iter1=tuple(exclusive_iter1[m] for m in range(1, n + 1)),
        counters=counters,
    )


def build_near_exclusive_map(r: int, n: int, k: int, q: int,
                             ic: str = IC_PRECISE) -> AccessMap:
    """Deterministic worst-case-free benchmark map: devices 2..N are
    immediately recoverable from exactly Q singleton blocks each, and
    device 1 needs exactly one cancellation (of device 2's first spare
    replica) to reach its Q-th packet.  All remaining replicas are piled
    into shared dead blocks that stay undecodable, so the retrieval
    volume is exactly Q(K-1)(N-1) packets.
    """
    if k < 2:
        raise ValueError("the benchmark construction needs K >= 2")
    if n < 3:
        raise ValueError("need at least 3 devices to keep the dead blocks dead")
    if r < n + k - 1:
        raise ValueError(f"R={r} too small; need R >= N+K-1 = {n + k - 1}")
    qk = q * k
    cfg = SystemConfig(r=r, n=n, k=k, q=q, alpha=2, beta=1,
                       scheme=SCHEME_RS, ic=ic)
    cursor = 0

    def take():
        nonlocal cursor
        f, b = divmod(cursor, r)
        cursor += 1
        return f, b

    placements = {m: [None] * qk for m in range(1, n + 1)}
    for d in range(2, n + 1):
        for idx in range(1, q + 1):
            placements[d][idx - 1] = take()
    for idx in range(1, q):
        placements[1][idx - 1] = take()
    shared = take()
    placements[1][q - 1] = shared
    placements[2][q] = shared  # device 2's packet Q+1 rides the shared block
    junk = [take() for _ in range(qk - q)]
    for j in range(qk - q):
        placements[1][q + j] = junk[j]
        for d in range(2, n + 1):
            if d == 2 and j == 0:
                continue
            placements[d][q + j] = junk[j]
    from .core import build_access_map
    return build_access_map(cfg, placements)
