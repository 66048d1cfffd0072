import sys

import pytest
import torch

from bokehgan.data import synth_bokeh_dataset
from bokehgan.generator import GeneratorConfig

torch.set_num_threads(1)

DESK = GeneratorConfig(
    stage1_base_channels=8, stage1_max_channels=64,
    stage2_base_channels=16, stage2_max_channels=128,
    n_resblocks=4, n_scales=3,
)
TINY = GeneratorConfig(4, 32, 4, 32, 1, 3)


@pytest.fixture
def desk_config():
    return DESK


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture(scope="session")
def synth8():
    return synth_bokeh_dataset(8, (64, 96), seed=0)


@pytest.fixture(scope="session")
def synth4_small():
    return synth_bokeh_dataset(4, (32, 48), seed=3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
