"""Vectorized simulator: seeding contract, sampler structure, exact
per-map equivalence with the set decoder, and the report shapes."""

import math
import random

import numpy as np
import pytest

from kgfa import (
    SystemConfig,
    decode_stf,
    derive_seed,
    estimate_access_probability,
    estimate_message_delay,
    generate_access_map,
    sweep,
)
from kgfa.montecarlo import (
    CSV_COLUMNS,
    _BATCH_ELEMS,
    _batch_rng,
    batch_size,
    decode_batch,
    positions_from_map,
    sample_positions,
)


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(1, "table1", 2, 2) == derive_seed(1, "table1", 2, 2)

    def test_sensitive_to_every_label(self):
        base = derive_seed(1, "fig4", "0.2", 5)
        assert derive_seed(2, "fig4", "0.2", 5) != base
        assert derive_seed(1, "fig5", "0.2", 5) != base
        assert derive_seed(1, "fig4", "0.3", 5) != base
        assert derive_seed(1, "fig4", "0.2", 6) != base

    def test_type_distinction(self):
        # "2" and 2 are different experiments, not the same label
        assert derive_seed(1, "2") != derive_seed(1, 2)

    def test_range(self):
        s = derive_seed(12345, "anything")
        assert 0 <= s < 2 ** 64


class TestBatchSize:
    def test_small_config_hits_element_cap(self):
        cfg = SystemConfig(r=2, n=1, k=1, q=1)
        assert batch_size(cfg) == _BATCH_ELEMS

    def test_large_config_still_positive(self):
        cfg = SystemConfig(r=100000, n=5000, k=2, q=2)
        assert batch_size(cfg) >= 1

    def test_grows_with_smaller_population(self):
        big = SystemConfig(r=500, n=400, k=2, q=2)
        small = SystemConfig(r=500, n=40, k=2, q=2)
        assert batch_size(small) >= batch_size(big)


class TestSamplePositions:
    def test_uniform_mode_shape_and_distinctness(self):
        cfg = SystemConfig(r=5, n=3, k=2, q=2)
        pos = sample_positions(_batch_rng(7, 0), 64, cfg)
        assert pos.shape == (64, 3, 4)
        assert pos.min() >= 0 and pos.max() < cfg.cell_count
        distinct = np.array([[len(set(row)) for row in trial] for trial in pos])
        assert (distinct == cfg.qk).all()

    def test_per_frame_mode_structure(self):
        cfg = SystemConfig(r=4, n=2, k=2, q=3, selection="per-frame")
        pos = sample_positions(_batch_rng(7, 0), 128, cfg)
        frames = pos // cfg.r
        for trial in range(pos.shape[0]):
            for dev in range(cfg.n):
                cells = pos[trial, dev]
                # exactly K cells in every frame, distinct blocks within
                for f in range(cfg.q):
                    in_frame = cells[frames[trial, dev] == f]
                    assert in_frame.size == cfg.k
                    assert len(set(in_frame.tolist())) == cfg.k

    def test_same_key_same_draw(self):
        cfg = SystemConfig(r=5, n=3, k=2, q=2)
        a = sample_positions(_batch_rng(7, 3), 16, cfg)
        b = sample_positions(_batch_rng(7, 3), 16, cfg)
        assert (a == b).all()

    def test_different_batch_index_different_draw(self):
        cfg = SystemConfig(r=5, n=3, k=2, q=2)
        a = sample_positions(_batch_rng(7, 0), 16, cfg)
        b = sample_positions(_batch_rng(7, 1), 16, cfg)
        assert (a != b).any()


class TestDecodeBatchEquivalence:
    def test_matches_set_decoder_per_map(self):
        rng = random.Random(0x5EED)
        for i in range(150):
            k = rng.choice([1, 2, 3])
            cfg = SystemConfig(
                r=rng.randint(max(2, k), 6),
                n=rng.randint(1, 5),
                k=k,
                q=rng.choice([1, 2, 3]),
                alpha=rng.randint(1, 3),
                beta=rng.randint(1, 2),
                scheme=rng.choice(["rs", "nors"]),
            )
            amap = generate_access_map(cfg, seed=i)
            ref = decode_stf(amap).recovered
            got = decode_batch(positions_from_map(amap), cfg)[0]
            assert tuple(bool(x) for x in got) == ref, (cfg, i)

    def test_walkthrough_map(self, walkthrough_map):
        got = decode_batch(positions_from_map(walkthrough_map),
                           walkthrough_map.config)[0]
        assert tuple(bool(x) for x in got) == (True, True, False, False, True)


class TestEstimateAccessProbability:
    CFG = SystemConfig(r=6, n=4, k=2, q=2)

    def test_deterministic(self):
        a = estimate_access_probability(self.CFG, 500, seed=3)
        b = estimate_access_probability(self.CFG, 500, seed=3)
        assert a == b

    def test_seed_matters(self):
        a = estimate_access_probability(self.CFG, 500, seed=3)
        b = estimate_access_probability(self.CFG, 500, seed=4)
        assert a.successes != b.successes

    def test_pooled_counts_every_device(self):
        rep = estimate_access_probability(self.CFG, 300, seed=1)
        assert rep.estimator == "pooled"
        assert rep.p_hat == rep.successes / (300 * self.CFG.n)

    def test_tagged_counts_first_device(self):
        rep = estimate_access_probability(self.CFG, 300, seed=1,
                                          estimator="tagged")
        assert rep.p_hat == rep.successes / 300
        assert rep.successes <= 300

    def test_lone_device_always_recovers(self):
        rep = estimate_access_probability(
            SystemConfig(r=3, n=1, k=2, q=1), 200, seed=1)
        assert rep.p_hat == 1.0
        assert rep.ci95 == 0.0

    def test_ci_formula_and_shrink(self):
        rep = estimate_access_probability(self.CFG, 400, seed=1)
        expected = 1.96 * math.sqrt(rep.p_hat * (1 - rep.p_hat) / 400)
        assert rep.ci95 == pytest.approx(expected, rel=1e-12)
        wide = estimate_access_probability(self.CFG, 100, seed=1)
        assert rep.ci95 < wide.ci95

    def test_batch_split_invisible_in_result(self):
        # more trials than one batch holds for this config still yields
        # a pure function of (config, trials, seed)
        cfg = SystemConfig(r=3, n=2, k=1, q=1)
        a = estimate_access_probability(cfg, 1000, seed=9)
        assert a.trials == 1000
        assert 0.0 <= a.p_hat <= 1.0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            estimate_access_probability(self.CFG, 0, seed=1)
        with pytest.raises(ValueError):
            estimate_access_probability(self.CFG, 10, seed=1,
                                        estimator="bayesian")


class TestEstimateMessageDelay:
    def test_delay_is_message_over_rate_on_its_own_stream(self):
        cfg = SystemConfig(r=6, n=4, k=2, q=2, m=8)
        rep = estimate_message_delay(cfg, 200, seed=5)
        assert rep.mean_delay == pytest.approx(cfg.m / rep.p_hat, rel=1e-12)

    def test_certain_delivery_takes_exactly_m_frames(self):
        cfg = SystemConfig(r=3, n=1, k=2, q=1, m=4)
        rep = estimate_message_delay(cfg, 100, seed=5)
        assert rep.mean_delay == 4.0
        assert rep.p_hat == 1.0

    def test_deterministic(self):
        cfg = SystemConfig(r=6, n=4, k=2, q=2, m=8)
        assert estimate_message_delay(cfg, 100, seed=5) == \
            estimate_message_delay(cfg, 100, seed=5)

    def test_hopeless_config_raises_instead_of_spinning(self):
        # two devices, one shared block: no STF ever decodes
        cfg = SystemConfig(r=1, n=2, k=1, q=1, m=4)
        with pytest.raises(RuntimeError):
            estimate_message_delay(cfg, 5, seed=1, max_attempts=5)

    def test_requires_message_size(self):
        with pytest.raises(ValueError):
            estimate_message_delay(SystemConfig(r=6, n=4, k=2, q=2), 10,
                                   seed=1)


class TestSweep:
    CONFIGS = [SystemConfig(r=6, n=4, k=2, q=2),
               SystemConfig(r=8, n=4, k=2, q=2),
               SystemConfig(r=6, n=4, k=2, q=2)]

    def test_order_and_configs_preserved(self):
        reports = sweep(self.CONFIGS, 200, seed=1)
        assert [r.config for r in reports] == self.CONFIGS

    def test_deterministic(self):
        assert sweep(self.CONFIGS, 200, seed=1) == \
            sweep(self.CONFIGS, 200, seed=1)

    def test_positions_get_independent_substreams(self):
        reports = sweep(self.CONFIGS, 200, seed=1)
        # identical configs at different positions: different substream
        assert reports[0].seed != reports[2].seed
        assert reports[0].config == reports[2].config

    def test_empty_sweep_rejected(self):
        with pytest.raises(ValueError):
            sweep([], 100, seed=1)


class TestTrialReport:
    def test_csv_row_matches_columns(self):
        cfg = SystemConfig(r=6, n=4, k=2, q=2)
        rep = estimate_access_probability(cfg, 100, seed=1)
        row = rep.to_csv_row()
        assert len(row) == len(CSV_COLUMNS)
        assert row[:9] == [6, 4, 2, 2, 2, 1, "rs", "none", "uniform-stf"]
        assert row[9] == f"{4 / 6:.10g}"
        assert row[10] == 100
        assert row[14] == 1

    def test_missing_delay_is_empty_field(self):
        cfg = SystemConfig(r=6, n=4, k=2, q=2)
        rep = estimate_access_probability(cfg, 100, seed=1)
        assert rep.mean_delay is None
        assert rep.to_csv_row()[13] == ""

    def test_delay_field_formatted(self):
        cfg = SystemConfig(r=6, n=4, k=2, q=2, m=8)
        rep = estimate_message_delay(cfg, 50, seed=1)
        assert rep.to_csv_row()[13] == f"{rep.mean_delay:.10g}"
