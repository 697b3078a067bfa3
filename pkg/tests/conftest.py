from pathlib import Path

import pytest

from xcube_opt.datagen import ScaleProfile, generate
from xcube_opt.model import load_warehouse

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture(scope="session")
def tiny():
    return load_warehouse(GOLDEN)


@pytest.fixture(scope="session")
def small():
    """A 2,000-cell warehouse with the default sales profile."""
    return generate(ScaleProfile.for_cells(2_000, seed=11))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list:
    """Collects one (criterion, passed, detail) entry per acceptance check."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    entries = config.stash.get(_ACCEPTANCE, [])
    if not entries:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(entries):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
