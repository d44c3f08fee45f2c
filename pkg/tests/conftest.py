import numpy as np
import pytest

from dhhsketch.hashing import fingerprint


@pytest.fixture(scope="session")
def distinct_fps_1e5():
    return np.array([fingerprint("key", f"sub{i}") for i in range(100_000)], dtype=np.uint64)


def pairs_of(stream):
    return [(k.decode(), s.decode()) for k, s in stream.pairs()]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
