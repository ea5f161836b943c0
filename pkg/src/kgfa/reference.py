"""Frozen baseline grid for the standard reproduction experiments.

These are previously recorded measurements for the canonical operating
points: simulated access probability (percent), plus the relative
deviations of the closed-form model (dev_model) and of the scale-free
approximation (dev_approx) from that simulation, both in percent as
|value - sim| / sim * 100.  Entries recorded only as "< 1e-4" carry the
bound with ``is_bound``.  `table1 --check` and the acceptance suite
assert that this implementation reproduces the grid within documented
envelopes; block counts realize the load as R = floor(N / gamma), the
convention the baselines were generated under.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BaselineCell:
    q: int
    k: int
    gamma: float
    n: int
    sim_pct: float
    dev_model_pct: float
    dev_approx_pct: float
    model_is_bound: bool = False
    approx_is_bound: bool = False

    @property
    def r(self) -> int:
        return rb_count_for(self.n, self.gamma)


def rb_count_for(n: int, gamma: float) -> int:
    """Blocks per frame at a baseline operating point (floor convention)."""
    return max(1, math.floor(n / gamma + 1e-9))


def _rows(q, k, per_gamma):
    cells = []
    for gamma, triples in per_gamma.items():
        for n, sim, ana, app in triples:
            ana_bound = ana == "<"
            app_bound = app == "<"
            cells.append(BaselineCell(
                q=q, k=k, gamma=gamma, n=n, sim_pct=sim,
                dev_model_pct=1e-4 if ana_bound else ana,
                dev_approx_pct=1e-4 if app_bound else app,
                model_is_bound=ana_bound, approx_is_bound=app_bound))
    return cells


# "<" marks entries recorded only as "< 1e-4".
TABLE_CELLS = (
    _rows(2, 2, {
        0.1: [(25, 99.9748, 0.0219, 0.0127),
              (100, 99.9857, 0.0047, 0.0019),
              (250, 99.9876, 0.0012, "<")],
        0.3: [(25, 94.7712, 0.1816, 0.7226),
              (100, 94.3430, 0.0428, 0.1907),
              (250, 94.2498, 0.0182, 0.0758)],
        0.5: [(25, 67.8784, 0.2469, 3.0818),
              (100, 66.3184, 0.0336, 0.8020),
              (250, 65.9964, 0.0165, 0.3180)],
        0.7: [(25, 33.9908, 0.2609, 3.1124),
              (100, 34.4265, 0.0196, 0.7595),
              (250, 34.7588, 0.0099, 0.2900)],
    })
    + _rows(2, 3, {
        0.1: [(25, 100.0, 0.0003, "<"),
              (100, 100.0, 0.0001, "<"),
              (250, 100.0, "<", "<")],
        0.3: [(25, 98.2152, 0.3077, 0.4253),
              (100, 97.9717, 0.0645, 0.1275),
              (250, 97.8850, 0.0484, 0.0291)],
        0.5: [(25, 65.5196, 0.5813, 2.8657),
              (100, 64.2014, 0.0177, 0.8713),
              (250, 63.8352, 0.0387, 0.3027)],
        0.7: [(25, 20.5404, 0.2120, 2.5565),
              (100, 22.2352, 0.0730, 0.5471),
              (250, 22.8848, 0.1772, 0.0119)],
    })
    + _rows(3, 2, {
        0.1: [(25, 99.9992, 0.0014, 0.0003),
              (100, 99.9988, 0.0013, 0.0006),
              (250, 99.9994, 0.0004, "<")],
        0.3: [(25, 96.3084, 0.3683, 0.5495),
              (100, 96.0020, 0.0997, 0.1392),
              (250, 95.9084, 0.0576, 0.0387)],
        0.5: [(25, 61.5940, 0.0719, 4.4982),
              (100, 59.5384, 0.1765, 0.9779),
              (250, 59.0484, 0.0810, 0.3811)],
        0.7: [(25, 21.3376, 1.1299, 4.0291),
              (100, 21.8367, 0.0359, 0.7563),
              (250, 22.1744, 0.0751, 0.2504)],
    })
)

# Acceptance envelopes for the reproduction checks, in the units used
# by each check (percentage points for sim-vs-baseline-sim, percent
# relative deviation for the model check, multiplier for the
# approximation check).
SIM_TOLERANCE_PP = {25: 1.0, 100: 0.5, 250: 0.5}
MODEL_DEV_LIMIT_PCT = 0.3
APPROX_DEV_FACTOR = 2.0

# Documented optima of the recovery-probability and delay studies.
FIG4_GAMMAS = (0.2, 0.3)
FIG4_KS = tuple(range(1, 8))
FIG4_N = 100
FIG4_Q = 2
FIG4_BEST_K = {0.2: 5, 0.3: 4}

FIG5_QS = (1, 2, 4, 8, 16, 32)
FIG5_KS = (2, 5)
FIG5_GAMMAS = (0.3, 0.35, 0.4)
FIG5_N = 100
FIG5_M = 32
FIG5_BEST_Q = {0.3: 32, 0.35: 8, 0.4: 1}
