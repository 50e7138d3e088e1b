import random

import pytest

from esas import cpabe
from esas.group import setup_group


@pytest.fixture(scope="session")
def ctx():
    return setup_group(128)


@pytest.fixture(scope="session")
def system(ctx):
    return cpabe.system_setup(ctx, random.Random(20240601))


@pytest.fixture(scope="session")
def params(system):
    return system[0]


@pytest.fixture(scope="session")
def msk(system):
    return system[1]


@pytest.fixture
def rng(request):
    # per-test deterministic stream
    return random.Random(request.node.nodeid)


@pytest.fixture
def acceptance(request):
    """Print and record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
