import numpy as np
import pytest

from tsit.networks import NetConfig
from tsit.tensor import Tensor

# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def toy_config(**kw) -> NetConfig:
    base = dict(k=2, base_width=8, d_base_width=8, d_layers=2, d_scales=2)
    base.update(kw)
    return NetConfig(**base)


def rand(shape, seed=0, dtype=np.float64, scale=1.0):
    return Tensor((np.random.default_rng(seed).standard_normal(shape) * scale).astype(dtype))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
