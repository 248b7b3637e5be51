from pathlib import Path

import numpy as np
import pytest

from gapfilter.grid import make_grids
from gapfilter.model import (
    ConstantBand,
    Lorentzian,
    ObservationGeometry,
    ProcessModel,
    WeightFunction,
)
from gapfilter.scenario import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
FILTER_SCENARIOS = ["noiseless", "constant", "lorentzian_hole", "two_holes", "wide_hole",
                    "tabulated"]
MINIMAX_PAIRS = ["minimax_l1_l2", "minimax_l2_l2", "minimax_contamination_l1"]


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.yaml"


def build(name: str):
    sc = load_scenario(scenario_path(name))
    time, freq = sc.grids()
    return sc, sc.model(), time, freq


def lorentzian_setup(noise=0.25, hole=((2.0, 1.0),), step=0.25, horizon=8.0, box=(0.0, 1.0)):
    geo = ObservationGeometry(hole)
    time, freq = make_grids(step, horizon, geo)
    w = WeightFunction.box(box[0], box[1], step, horizon, geo)
    model = ProcessModel(Lorentzian(1.0, 1.0), ConstantBand(noise), geo, w)
    return model, time, freq


@pytest.fixture
def lorentzian():
    return lorentzian_setup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
