"""Oracle decoder: set-level ground truth for STF decoding.

Works directly on the occupancy sets of an AccessMap.  A block is
decodable for a target replica when every other replica in it is
already known to the receiver and those others span at most beta
devices.  Known content is scheme-dependent: the coded scheme re-encodes
a recovered device and cancels all its QK packets; the copy scheme
cancels the sibling copies of every decoded packet.  Iterations are
synchronous: knowledge acquired in iteration i is usable from i+1 on,
which makes the outcome independent of cell processing order.
"""

from __future__ import annotations

from .core import (
    AccessMap,
    DecodeOutcome,
    OperationCounters,
    PacketReplica,
    SCHEME_RS,
    SystemConfig,
    sibling_indices,
)


def rs_recoverable(decoded_count: int, config: SystemConfig) -> bool:
    """Coded-scheme recovery test: at least Q of the QK packets decoded."""
    if not (0 <= decoded_count <= config.qk):
        raise ValueError(f"decoded_count {decoded_count} outside 0..QK")
    return decoded_count >= config.q


def _is_recovered(decoded: set, config: SystemConfig) -> bool:
    if config.scheme == SCHEME_RS:
        return len(decoded) >= config.q
    covered = {(idx - 1) % config.q for idx in decoded}
    return len(covered) == config.q


def _known_closure(mtcd: int, decoded: set, recovered: bool,
                   config: SystemConfig) -> set:
    """Replicas of one device the receiver can reconstruct and cancel."""
    if config.scheme == SCHEME_RS:
        if recovered:
            return {PacketReplica(mtcd, i) for i in range(1, config.qk + 1)}
        return set()
    known = set()
    for idx in decoded:
        for s in sibling_indices(idx, config.q, config.k):
            known.add(PacketReplica(mtcd, s))
    return known


def decode_stf(amap: AccessMap, cell_order=None) -> DecodeOutcome:
    """Decode one STF, honoring alpha, beta and the scheme of the map's config.

    cell_order optionally permutes the (frame, rb) visit order; the
    outcome must not depend on it (property-tested), it exists so tests
    can prove that.
    """
    cfg = amap.config
    n = cfg.n
    counters = OperationCounters(matrices_materialized=1)
    decoded = {m: set() for m in range(1, n + 1)}
    recovered = {m: False for m in range(1, n + 1)}
    recovery_iteration = {m: None for m in range(1, n + 1)}
    exclusive_iter1 = {m: 0 for m in range(1, n + 1)}
    known = set()

    cells = list(amap.iter_cells())
    if cell_order is not None:
        index = {(f, b): occ for f, b, occ in cells}
        cells = [(f, b, index[(f, b)]) for f, b in cell_order]

    for iteration in range(1, cfg.alpha + 1):
        new_decodes = []
        for f, b, occ in cells:
            counters.decode_attempts += 1
            counters.memory_reads += len(occ)
            if not occ:
                continue
            unknown = [rep for rep in occ if rep not in known]
            if iteration == 1 and len(occ) == 1:
                (rep,) = occ
                exclusive_iter1[rep.mtcd] += 1
            if len(unknown) != 1:
                continue
            cancelled = len(occ) - 1
            if cancelled > cfg.beta:
                # the removable aggregate would span too many devices
                continue
            rep = unknown[0]
            if rep.packet_index in decoded[rep.mtcd]:
                continue
            counters.ic_subtractions += cancelled
            new_decodes.append(rep)

        newly_recovered = 0
        for rep in new_decodes:
            decoded[rep.mtcd].add(rep.packet_index)
            counters.memory_writes += 1
        for m in range(1, n + 1):
            if not recovered[m] and _is_recovered(decoded[m], cfg):
                recovered[m] = True
                recovery_iteration[m] = iteration
                newly_recovered += 1
        known = set()
        for m in range(1, n + 1):
            closure = _known_closure(m, decoded[m], recovered[m], cfg)
            known |= closure
        counters.memory_writes += len(known)

        if all(recovered.values()) or newly_recovered == 0:
            break

    return DecodeOutcome(
        recovered=tuple(recovered[m] for m in range(1, n + 1)),
        recovery_iteration=tuple(recovery_iteration[m] for m in range(1, n + 1)),
        exclusive_rb_count_iter1=tuple(exclusive_iter1[m] for m in range(1, n + 1)),
        counters=counters,
    )


def du_success(outcome: DecodeOutcome, mtcd: int) -> bool:
    if not (1 <= mtcd <= len(outcome.recovered)):
        raise ValueError(f"device id {mtcd} out of range")
    return outcome.recovered[mtcd - 1]
