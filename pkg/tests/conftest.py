import pytest

from evplan.evmodel import EvModel, load_catalog

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def leaf(catalog):
    return next(m for m in catalog if m.name == "Nissan Leaf")


@pytest.fixture
def quick_model():
    """A tiny battery that recharges in a handful of one-minute steps."""
    return EvModel("quick", 100.0, 90.0, battery_capacity=1.0, charge_rate=12.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {num:>2}: {detail}")
