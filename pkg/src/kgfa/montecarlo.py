"""Vectorized Monte Carlo estimation of access probability and delay.

The sampler and decoder here process whole batches of independent STFs
as numpy arrays; semantics are pinned to the set-level oracle by an
exact per-map equivalence property in the test suite, so this module is
allowed to be fast and boring instead of readable-first.

Reproducibility contract: every batch of trials draws from its own
counter-based substream keyed by (seed, 2^63 + batch_index), batch
sizes are a fixed function of the configuration, and per-batch success
counts are merged in batch order as exact integers.  Results therefore
depend only on (config, trials, seed), not on scheduling or memory.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    AccessMap,
    SCHEME_RS,
    SELECTION_PER_FRAME,
    SELECTION_UNIFORM_STF,
    SystemConfig,
)

# Deterministic sizing constants: change them and every seeded result
# changes, so they are part of the reproducibility contract.
_BATCH_ELEMS = 1 << 23
_BATCH_CELLS = 1 << 24
_BATCH_STREAM_BASE = 1 << 63

CSV_COLUMNS = ("R", "N", "K", "Q", "alpha", "beta", "scheme", "ic",
               "selection", "gamma", "trials", "p_hat", "ci95",
               "mean_delay", "seed")


def derive_seed(seed: int, *labels) -> int:
    """Stable 64-bit child seed for independent sub-experiments."""
    text = repr((int(seed),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big")


def batch_size(config: SystemConfig) -> int:
    per_trial = max(1, config.n * config.qk)
    b = min(_BATCH_ELEMS // per_trial, _BATCH_CELLS // config.cell_count)
    return max(1, b)


def _batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    key = np.array([seed, _BATCH_STREAM_BASE + batch_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _dedup_rows(rng: np.random.Generator, draws: np.ndarray, high: int) -> np.ndarray:
    """Rejection-resample rows (last axis) until all entries are distinct.

    Whole offending rows are redrawn, which keeps the accepted rows
    exactly uniform over ordered distinct tuples.
    """
    if draws.shape[-1] <= 1:
        return draws
    flat = draws.reshape(-1, draws.shape[-1])
    pending = np.arange(flat.shape[0])
    while pending.size:
        srt = np.sort(flat[pending], axis=-1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=-1)
        pending = pending[bad]
        if pending.size:
            flat[pending] = rng.integers(0, high,
                                         size=(pending.size, flat.shape[-1]),
                                         dtype=flat.dtype)
    return flat.reshape(draws.shape)


def sample_positions(rng: np.random.Generator, batch: int,
                     config: SystemConfig) -> np.ndarray:
    """Cell index per replica, shape (batch, N, QK), values in [0, QR).

    Grid-wide mode: QK distinct cells per device, packet j at draw j.
    Per-frame mode: K distinct blocks per frame plus a random split of
    the packet indices across frames.
    """
    n, qk, qr = config.n, config.qk, config.cell_count
    if config.selection == SELECTION_UNIFORM_STF:
        draws = rng.integers(0, qr, size=(batch, n, qk), dtype=np.int32)
        return _dedup_rows(rng, draws, qr)
    q, k, r = config.q, config.k, config.r
    blocks = rng.integers(0, r, size=(batch, n, q, k), dtype=np.int32)
    blocks = _dedup_rows(rng, blocks, r)
    cells = blocks + np.arange(q, dtype=np.int32).reshape(1, 1, q, 1) * r
    cells = cells.reshape(batch, n, qk)
    order = np.argsort(rng.random(size=(batch, n, qk)), axis=-1)
    pos = np.empty_like(cells)
    np.put_along_axis(pos, order, cells, axis=-1)
    return pos


def decode_batch(positions: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Decode a batch of STFs; returns a (batch, N) recovery mask.

    Mirrors the oracle decoder exactly (synchronous iterations, per-cell
    beta bound, scheme-specific cancellable closures, stop on an
    iteration without a new recovery).
    """
    b, n, qk = positions.shape
    q, k, qr, beta = config.q, config.k, config.cell_count, config.beta
    rs = config.scheme == SCHEME_RS
    flat = (positions.astype(np.intp, copy=False)
            + (np.arange(b, dtype=np.intp) * qr).reshape(b, 1, 1)).ravel()
    total = np.bincount(flat, minlength=b * qr)
    # a cell is forever dead for a replica when cancelling everyone else
    # would still exceed beta
    cell_ok = (total[flat] <= beta + 1).reshape(b, n, qk)

    decoded = np.zeros((b, n, qk), dtype=bool)
    recovered = np.zeros((b, n), dtype=bool)
    unknown = np.ones((b, n, qk), dtype=bool)
    active = np.ones(b, dtype=bool)

    for _ in range(config.alpha):
        residual = np.bincount(flat[unknown.ravel()], minlength=b * qr)
        decodable = unknown & cell_ok & (residual[flat].reshape(b, n, qk) == 1)
        new = decodable & ~decoded & active[:, None, None]
        decoded |= new

        if rs:
            rec_now = decoded.sum(axis=2, dtype=np.int32) >= q
        else:
            covered = decoded.reshape(b, n, k, q).any(axis=2)
            rec_now = covered.all(axis=2)
        newly = rec_now & ~recovered
        recovered |= newly

        active &= newly.any(axis=1) & ~recovered.all(axis=1)
        if not active.any():
            break

        if rs:
            unknown = ~np.broadcast_to(recovered[:, :, None], (b, n, qk))
        else:
            unknown = ~np.broadcast_to(covered[:, :, None, :],
                                       (b, n, k, q)).reshape(b, n, qk)
    return recovered


def positions_from_map(amap: AccessMap) -> np.ndarray:
    """Single-trial positions array for an explicit AccessMap."""
    cfg = amap.config
    pos = np.zeros((1, cfg.n, cfg.qk), dtype=np.int64)
    for rep, (f, bb) in amap.replica_positions().items():
        pos[0, rep.mtcd - 1, rep.packet_index - 1] = f * cfg.r + bb
    return pos


@dataclass(frozen=True)
class TrialReport:
    config: SystemConfig
    trials: int
    successes: int
    p_hat: float
    ci95: float
    mean_delay: "float | None"
    seed: int
    estimator: str = "pooled"

    def to_csv_row(self) -> list:
        c = self.config
        return [c.r, c.n, c.k, c.q, c.alpha, c.beta, c.scheme, c.ic,
                c.selection, f"{c.gamma:.10g}", self.trials,
                f"{self.p_hat:.10g}", f"{self.ci95:.10g}",
                "" if self.mean_delay is None else f"{self.mean_delay:.10g}",
                self.seed]


def _ci95(p: float, trials: int) -> float:
    # deliberately conservative for the pooled estimator: the N devices
    # of one trial share a map, so the trial count is the sample count
    return 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def estimate_access_probability(config: SystemConfig, trials: int, seed: int,
                                estimator: str = "pooled") -> TrialReport:
    """Simulate `trials` fresh STFs and report the recovery frequency.

    pooled counts every device of every trial (exchangeability makes
    them identically distributed); tagged counts device 1 only.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if config.n < 1:
        raise ValueError("need at least one device to estimate")
    if estimator not in ("pooled", "tagged"):
        raise ValueError(f"unknown estimator {estimator!r}")
    bsize = batch_size(config)
    successes = 0
    done = 0
    batch_index = 0
    while done < trials:
        take = min(bsize, trials - done)
        rng = _batch_rng(seed, batch_index)
        pos = sample_positions(rng, take, config)
        rec = decode_batch(pos, config)
        if estimator == "pooled":
            successes += int(rec.sum())
        else:
            successes += int(rec[:, 0].sum())
        done += take
        batch_index += 1
    samples = trials * (config.n if estimator == "pooled" else 1)
    p = successes / samples
    return TrialReport(config=config, trials=trials, successes=successes,
                       p_hat=p, ci95=_ci95(p, trials), mean_delay=None,
                       seed=seed, estimator=estimator)


def estimate_message_delay(config: SystemConfig, trials: int, seed: int,
                           max_attempts: int = 100000) -> TrialReport:
    """Retransmission simulator for an M-packet message.

    Each trial sends M/Q data units one after another; a unit is retried
    on fresh independent STFs until its tagged device is recovered, and
    every STF costs Q frames.  The report's mean_delay is in frames.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if config.m is None:
        raise ValueError("config.m must be set for delay estimation")
    units = trials * (config.m // config.q)
    bsize = batch_size(config)
    pending = units
    attempts = 0
    successes = 0
    batch_index = 0
    rounds = 0
    while pending > 0:
        rounds += 1
        if rounds > max_attempts:
            raise RuntimeError("delay simulation did not converge; "
                               "access probability may be (near) zero")
        remaining = pending
        failures = 0
        while remaining > 0:
            take = min(bsize, remaining)
            rng = _batch_rng(seed, batch_index)
            batch_index += 1
            pos = sample_positions(rng, take, config)
            rec = decode_batch(pos, config)
            ok = int(rec[:, 0].sum())
            successes += ok
            failures += take - ok
            remaining -= take
        attempts += pending
        pending = failures
    mean_delay = config.q * attempts / trials
    p = successes / attempts
    return TrialReport(config=config, trials=trials, successes=successes,
                       p_hat=p, ci95=_ci95(p, attempts), mean_delay=mean_delay,
                       seed=seed, estimator="tagged")


def sweep(configs: list, trials: int, seed: int,
          estimator: str = "pooled") -> list:
    """Independent estimates per config, one derived substream each;
    result order matches input order."""
    if not configs:
        raise ValueError("sweep needs at least one config")
    reports = []
    for i, cfg in enumerate(configs):
        reports.append(estimate_access_probability(
            cfg, trials, derive_seed(seed, "sweep", i), estimator=estimator))
    return reports
