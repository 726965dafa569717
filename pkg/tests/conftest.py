import pytest

from safeacc.config import RunConfig, load_config
from safeacc.dynamics import VehicleParams, default_drivetrain


@pytest.fixture(scope="session")
def params() -> VehicleParams:
    return VehicleParams()


@pytest.fixture(scope="session")
def drivetrain():
    return default_drivetrain()


@pytest.fixture(scope="session")
def run_cfg() -> RunConfig:
    return RunConfig(load_config(None))


@pytest.fixture(scope="session")
def certified_ecbf(run_cfg):
    cfg = run_cfg.ecbf_config(certified=True)
    assert cfg.certified, cfg.certification.reason
    return cfg
