from __future__ import annotations

import pytest

from ecoplatoon.dynamics import AeroConfig, FuelCoeffs, RoadProfile, VehicleParams
from ecoplatoon.sim import load_config


def make_params(mass: float, rolling: float, area: float, radius: float) -> VehicleParams:
    return VehicleParams(mass, rolling, area, 6.5 * mass, 4.0 * mass, FuelCoeffs.from_tire_radius(radius), radius)


@pytest.fixture
def aero() -> AeroConfig:
    return AeroConfig()


@pytest.fixture
def leader_params() -> VehicleParams:
    return make_params(1420, 0.02, 1.7, 0.30115)


@pytest.fixture
def second_params() -> VehicleParams:
    return make_params(1320, 0.018, 1.6, 0.29915)


@pytest.fixture
def sec5_road() -> RoadProfile:
    return RoadProfile.paper_sec5()


@pytest.fixture(scope="session")
def sec5_config():
    return load_config("paper-sec5")


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
