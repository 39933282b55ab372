import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Lines recorded by the acceptance module, echoed in the terminal summary.
ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """One training run of the default desk configuration, shared across modules."""
    from m2vsl import train as TR
    from m2vsl.config import RunConfig

    cfg = RunConfig(out_dir=str(tmp_path_factory.mktemp("desk")))
    res = TR.train(cfg)
    return cfg, res


@pytest.fixture
def tiny_cfg(tmp_path):
    from m2vsl.config import RunConfig

    return RunConfig(dim=16, epochs=2, batch_size=8, n_train=32, n_val=8, n_test=8, n_duet=8,
                     out_dir=str(tmp_path / "run"))
