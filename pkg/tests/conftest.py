import pytest

from kgfa.core import SystemConfig, build_access_map

# Five-device walkthrough system: R=9 blocks, Q=2 frames, K=2 copies,
# coded scheme.  Devices 1 and 2 are first-iteration decodable, device 5
# becomes decodable after their interference is cancelled, devices 3 and
# 4 need a third iteration.  Cells are (frame, block), 0-based.
WALKTHROUGH_PLACEMENTS = {
    1: [(0, 1), (1, 2), (0, 0), (1, 1)],
    2: [(0, 0), (0, 2), (0, 4), (1, 4)],
    3: [(0, 3), (0, 4), (0, 5), (1, 5)],
    4: [(0, 3), (0, 6), (1, 5), (1, 6)],
    5: [(0, 0), (0, 5), (0, 6), (1, 1)],
}


def make_walkthrough_map(alpha=2, beta=2, ic="none"):
    cfg = SystemConfig(r=9, n=5, k=2, q=2, alpha=alpha, beta=beta,
                       scheme="rs", ic=ic)
    return build_access_map(cfg, WALKTHROUGH_PLACEMENTS)


@pytest.fixture
def walkthrough_map():
    return make_walkthrough_map()


# ---------------------------------------------------------------------------
# acceptance reporting: every criterion prints one verdict line in the
# terminal summary, pass or fail, so a full run reads as a checklist.

ACCEPTANCE_RESULTS = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d}: {verdict} - {detail}")
