from types import SimpleNamespace

import numpy as np
import pytest

from wdmir.model import ModelConfig, init_params

TINY = dict(d_text=3, d_video=2, d_audio=3, num_classes=3, length=8, d_model=4, hidden=4)


def tiny_records(rng, n=2, num_classes=3, lengths=(3, 5, 8)):
    lt, lv, la = lengths
    return [SimpleNamespace(text=rng.normal(size=(lt, 3)), video=rng.normal(size=(lv, 2)),
                            audio=rng.normal(size=(la, 3)), label=int(rng.integers(num_classes)))
            for _ in range(n)]


@pytest.fixture
def tiny_cfg():
    return ModelConfig(**TINY)


@pytest.fixture
def tiny_model(tiny_cfg):
    return init_params(tiny_cfg, np.random.default_rng(0))


# One pass/fail line per acceptance criterion, repeated at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
