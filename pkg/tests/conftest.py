import numpy as np
import pytest

from otfs_isac.dd_core import FrameParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def frame8():
    return FrameParams(8, 8)


@pytest.fixture
def frame4():
    return FrameParams(2, 2)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Print and record one PASS/FAIL line, then assert it."""

    def report(criterion: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:2d}: {detail}"
        print(line)
        request.config.stash.setdefault(_VERDICTS, []).append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
