import math

import pytest
from hypothesis import HealthCheck, settings

from dressedlaser.params import DressedFrame, ModelConfig, derive_dressed

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def cos2_config(c2: float, **kw) -> ModelConfig:
    base = dict(gamma=1.0, kappa=0.05, g=5.0)
    base.update(kw)
    return ModelConfig(phi_override=math.acos(math.sqrt(c2)), **base)


@pytest.fixture(scope="session")
def frame06() -> DressedFrame:
    """cos^2 phi = 0.6, gamma = 1, g = 5: the dual-path comparison point."""
    return derive_dressed(cos2_config(0.6))


@pytest.fixture
def asym_frame() -> DressedFrame:
    return DressedFrame.from_rates(g1=1.3, gamma0=0.4, gamma_plus=0.3, gamma_minus=0.2)
