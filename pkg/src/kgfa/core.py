"""Domain model: system configuration and random access-map generation.

A super time frame (STF) is a Q x R grid of resource blocks.  Each of N
devices encodes a Q-packet data unit into QK packets, either as a
(QK, Q) erasure code or as K verbatim copies of each source packet, and
scatters the QK replicas over the grid.  Everything downstream (the
oracle decoder, the branching interference-cancellation model, the
Monte Carlo harness) consumes the immutable ``AccessMap`` built here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

SCHEME_RS = "rs"
SCHEME_NO_RS = "nors"
SCHEMES = (SCHEME_RS, SCHEME_NO_RS)

IC_NONE = "none"
IC_PRECISE = "precise"
IC_CONTEXT = "context-aware"
IC_BLIND = "blind"
IC_MODES = (IC_NONE, IC_PRECISE, IC_CONTEXT, IC_BLIND)

SELECTION_UNIFORM_STF = "uniform-stf"
SELECTION_PER_FRAME = "per-frame"
SELECTIONS = (SELECTION_UNIFORM_STF, SELECTION_PER_FRAME)


class PacketReplica(NamedTuple):
    """One transmitted packet copy, identified by owner and replica slot.

    ``packet_index`` runs 1..QK.  Under the copy scheme the c-th copy of
    source packet p occupies index (c-1)*Q + p, so siblings of a replica
    are the indices congruent to it mod Q.  Under the coded scheme all
    QK indices are distinct codeword packets and have no siblings.
    """

    mtcd: int
    packet_index: int


def packet_id(packet_index: int, q: int) -> int:
    """Source-packet id in 1..Q behind a replica index."""
    return (packet_index - 1) % q + 1


def copy_id(packet_index: int, q: int) -> int:
    """Copy number in 1..K behind a replica index."""
    return (packet_index - 1) // q + 1


def sibling_indices(packet_index: int, q: int, k: int) -> tuple:
    """All replica indices (including the given one) carrying the same source packet."""
    p = packet_id(packet_index, q)
    return tuple(p + c * q for c in range(k))


@dataclass(frozen=True)
class SystemConfig:
    """Static parameters of one contention scenario.

    gamma = N/R is always derived, never stored, so the two can not
    drift apart.  alpha bounds cancellation iterations, beta bounds the
    number of distinct devices cancelled from a single block.
    """

    r: int
    n: int
    k: int = 1
    q: int = 1
    alpha: int = 2
    beta: int = 1
    m: int | None = None
    scheme: str = SCHEME_RS
    ic: str = IC_NONE
    selection: str = SELECTION_UNIFORM_STF

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("R must be a positive number of blocks per frame")
        if self.n < 0:
            raise ValueError("N must be non-negative")
        if self.k < 1 or self.q < 1:
            raise ValueError("K and Q must be positive")
        # K <= R makes QK distinct cells selectable grid-wide and K distinct
        # cells selectable per frame, so it covers both selection modes.
        if self.k > self.r:
            raise ValueError(f"K={self.k} exceeds R={self.r}: not enough blocks to host the replicas")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if self.m is not None and (self.m < 1 or self.m % self.q != 0):
            raise ValueError("message size M must be a positive multiple of Q")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.ic not in IC_MODES:
            raise ValueError(f"unknown ic mode {self.ic!r}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"unknown selection mode {self.selection!r}")

    @property
    def qk(self) -> int:
        return self.q * self.k

    @property
    def cell_count(self) -> int:
        return self.q * self.r

    @property
    def gamma(self) -> float:
        return self.n / self.r

    def with_(self, **kw) -> "SystemConfig":
        return replace(self, **kw)


def derive_gamma(config: SystemConfig) -> float:
    return config.gamma


@dataclass
class OperationCounters:
    """Work accounting shared by the decoders.

    The branching model fills every field; the oracle decoder fills the
    scan/bookkeeping fields and reports a single materialized matrix.
    """

    memory_writes: int = 0
    memory_reads: int = 0
    ic_subtractions: int = 0
    decode_attempts: int = 0
    matrices_materialized: int = 0
    mai_signals_generated: int = 0
    peak_buffered_signals: int = 0

    def merge(self, other: "OperationCounters") -> None:
        self.memory_writes += other.memory_writes
        self.memory_reads += other.memory_reads
        self.ic_subtractions += other.ic_subtractions
        self.decode_attempts += other.decode_attempts
        self.matrices_materialized += other.matrices_materialized
        self.mai_signals_generated += other.mai_signals_generated
        self.peak_buffered_signals = max(self.peak_buffered_signals, other.peak_buffered_signals)

    def to_json_dict(self) -> dict:
        return {
            "memory_writes": self.memory_writes,
            "memory_reads": self.memory_reads,
            "ic_subtractions": self.ic_subtractions,
            "decode_attempts": self.decode_attempts,
            "matrices_materialized": self.matrices_materialized,
            "mai_signals_generated": self.mai_signals_generated,
            "peak_buffered_signals": self.peak_buffered_signals,
        }


@dataclass(frozen=True)
class DecodeOutcome:
    """Per-device recovery verdicts for one decoded STF.

    Sequences are indexed by mtcd-1.  ``recovery_iteration`` holds the
    first iteration at which the device's data unit became recoverable,
    or None.  ``exclusive_rb_count_iter1`` is the device's count of
    singleton cells in the raw map, before any cancellation.
    """

    recovered: tuple
    recovery_iteration: tuple
    exclusive_rb_count_iter1: tuple
    counters: OperationCounters

    def __post_init__(self):
        if not (len(self.recovered) == len(self.recovery_iteration) == len(self.exclusive_rb_count_iter1)):
            raise ValueError("per-device sequences must have equal length")
        for rec, it in zip(self.recovered, self.recovery_iteration):
            if rec != (it is not None):
                raise ValueError("recovered flags must mirror recovery iterations")

    @property
    def recovered_set(self) -> frozenset:
        return frozenset(i + 1 for i, rec in enumerate(self.recovered) if rec)

    def to_json_dict(self) -> dict:
        return {
            "recovered": list(self.recovered),
            "recovery_iteration": list(self.recovery_iteration),
            "exclusive_rb_count_iter1": list(self.exclusive_rb_count_iter1),
            "counters": self.counters.to_json_dict(),
        }


@dataclass(frozen=True)
class AccessMap:
    """Immutable Q x R occupancy grid of one STF.

    ``cells[frame][rb]`` is a frozenset of PacketReplica; frames and
    blocks are 0-based internally, 1-based in the text serialization.
    """

    config: SystemConfig
    cells: tuple
    seed: "int | None" = None

    def occupants(self, frame: int, rb: int) -> frozenset:
        return self.cells[frame][rb]

    def iter_cells(self) -> Iterator:
        for f in range(self.config.q):
            for b in range(self.config.r):
                yield f, b, self.cells[f][b]

    def replica_positions(self) -> dict:
        """Map every placed replica to its (frame, rb) cell."""
        pos = {}
        for f, b, occ in self.iter_cells():
            for rep in occ:
                pos[rep] = (f, b)
        return pos

    def validate(self) -> None:
        cfg = self.config
        if len(self.cells) != cfg.q or any(len(row) != cfg.r for row in self.cells):
            raise ValueError("grid shape does not match config")
        per_mtcd = {}
        per_mtcd_frame = {}
        for f, b, occ in self.iter_cells():
            seen = set()
            for rep in occ:
                if rep.mtcd in seen:
                    raise ValueError(f"cell ({f},{b}) holds two replicas of device {rep.mtcd}")
                seen.add(rep.mtcd)
                if not (1 <= rep.mtcd <= cfg.n):
                    raise ValueError(f"device id {rep.mtcd} out of range")
                if not (1 <= rep.packet_index <= cfg.qk):
                    raise ValueError(f"packet index {rep.packet_index} out of range")
                if rep in per_mtcd.setdefault(rep.mtcd, set()):
                    raise ValueError(f"replica {rep} placed twice")
                per_mtcd[rep.mtcd].add(rep)
                per_mtcd_frame[(rep.mtcd, f)] = per_mtcd_frame.get((rep.mtcd, f), 0) + 1
        for mtcd in range(1, cfg.n + 1):
            placed = per_mtcd.get(mtcd, set())
            if len(placed) != cfg.qk:
                raise ValueError(f"device {mtcd} placed {len(placed)} replicas, expected {cfg.qk}")
            if {rep.packet_index for rep in placed} != set(range(1, cfg.qk + 1)):
                raise ValueError(f"device {mtcd} packet indices are not 1..QK")
        if cfg.selection == SELECTION_PER_FRAME:
            for mtcd in range(1, cfg.n + 1):
                for f in range(cfg.q):
                    if per_mtcd_frame.get((mtcd, f), 0) != cfg.k:
                        raise ValueError(f"device {mtcd} does not place K replicas in frame {f}")

    # Line-oriented text form used by the golden-file tests.  Header
    # fields: Q R N K Q scheme selection seed (Q is written twice; the
    # parser cross-checks the pair), then one line per non-empty cell.
    def to_text(self) -> str:
        cfg = self.config
        seed = "-" if self.seed is None else str(self.seed)
        lines = [f"{cfg.q} {cfg.r} {cfg.n} {cfg.k} {cfg.q} {cfg.scheme} {cfg.selection} {seed}"]
        for f, b, occ in self.iter_cells():
            if not occ:
                continue
            body = ",".join(f"{rep.mtcd}:{rep.packet_index}" for rep in sorted(occ))
            lines.append(f"{f + 1} {b + 1} {body}")
        return "\n".join(lines) + "\n"


def parse_access_map(text: str, alpha: int = 2, beta: int = 1,
                     ic: str = IC_NONE) -> AccessMap:
    """Inverse of AccessMap.to_text.  Decode parameters are not part of
    the serialized form, so they are supplied (or defaulted) here."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty access map text")
    head = lines[0].split()
    if len(head) != 8:
        raise ValueError("header must have 8 fields")
    q, r, n, k, q2 = (int(x) for x in head[:5])
    if q != q2:
        raise ValueError("header Q fields disagree")
    scheme, selection, seed_text = head[5], head[6], head[7]
    seed = None if seed_text == "-" else int(seed_text)
    cfg = SystemConfig(r=r, n=n, k=k, q=q, alpha=alpha, beta=beta,
                       scheme=scheme, ic=ic, selection=selection)
    grid = [[set() for _ in range(r)] for _ in range(q)]
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"bad cell line: {ln!r}")
        f, b = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= f < q and 0 <= b < r):
            raise ValueError(f"cell ({f + 1},{b + 1}) outside the grid")
        for item in parts[2].split(","):
            mtcd_text, _, idx_text = item.partition(":")
            grid[f][b].add(PacketReplica(int(mtcd_text), int(idx_text)))
    amap = AccessMap(config=cfg,
                     cells=tuple(tuple(frozenset(c) for c in row) for row in grid),
                     seed=seed)
    amap.validate()
    return amap


def build_access_map(config: SystemConfig, placements: dict,
                     seed: "int | None" = None) -> AccessMap:
    """Assemble a map from explicit placements {mtcd: [(frame, rb), ...]},
    the j-th listed cell receiving packet index j+1.  Used by fixtures
    and enumeration oracles."""
    grid = [[set() for _ in range(config.r)] for _ in range(config.q)]
    for mtcd, cells in placements.items():
        for j, (f, b) in enumerate(cells, start=1):
            grid[f][b].add(PacketReplica(mtcd, j))
    amap = AccessMap(config=config,
                     cells=tuple(tuple(frozenset(c) for c in row) for row in grid),
                     seed=seed)
    amap.validate()
    return amap


def _mtcd_stream(seed: int, mtcd: int) -> np.random.Generator:
    # Counter-based substream per device: reproducible regardless of the
    # order devices are processed in, and disjoint from the Monte Carlo
    # batch streams which set the high bit of the second key word.
    return np.random.Generator(np.random.Philox(key=np.array([seed, mtcd], dtype=np.uint64)))


def generate_access_map(config: SystemConfig, seed: int) -> AccessMap:
    """Draw one random access map.

    Grid-wide mode: each device picks QK distinct cells uniformly from
    the QR grid, packet indices assigned in draw order (a uniform random
    injective assignment).  Per-frame mode: K distinct blocks per frame,
    with a random Q-way split of the QK packet indices across frames.
    """
    q, r, qk = config.q, config.r, config.qk
    grid = [[set() for _ in range(r)] for _ in range(q)]
    for mtcd in range(1, config.n + 1):
        rng = _mtcd_stream(seed, mtcd)
        if config.selection == SELECTION_UNIFORM_STF:
            chosen = rng.permutation(q * r)[:qk]
            for j, cell in enumerate(chosen, start=1):
                f, b = divmod(int(cell), r)
                grid[f][b].add(PacketReplica(mtcd, j))
        else:
            indices = rng.permutation(qk) + 1
            for f in range(q):
                blocks = rng.permutation(r)[:config.k]
                for j, b in zip(indices[f * config.k:(f + 1) * config.k], blocks):
                    grid[f][int(b)].add(PacketReplica(mtcd, int(j)))
    return AccessMap(config=config,
                     cells=tuple(tuple(frozenset(c) for c in row) for row in grid),
                     seed=seed)
