import math

import pytest
from hypothesis import settings

from hybrid_blockade.model import SystemParams

# fixed example sequence so reruns are reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

ETA_A_FIG3 = 40 / math.sqrt(2)
BETA_1_FIG3 = math.sqrt(1025)

_acceptance_lines = []


def fig3_params(Delta=BETA_1_FIG3, **changes) -> SystemParams:
    base = dict(Delta=Delta, eta=15.0, eta_a=ETA_A_FIG3, G_m=800.0, Omega_e=0.1, kappa_b=0.05)
    base.update(changes)
    return SystemParams.paper(**base)


@pytest.fixture
def fig3():
    return fig3_params()


@pytest.fixture(scope="session")
def acceptance_report():
    def report(number: int, ok: bool, detail: str):
        _acceptance_lines.append((number, ok, detail))

    return report


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_acceptance_lines):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
