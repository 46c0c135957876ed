import numpy as np
import pytest

from phy.blermodel import default_tables, load_bler_table
from sim.scenario import build_scenario

ANCHOR_MCS = [2, 6, 10, 14, 20]


@pytest.fixture(autouse=True)
def audit_db(tmp_path, monkeypatch):
    """Keep every audit row out of the repository database."""
    path = tmp_path / "audit.db"
    monkeypatch.setenv("SALAD_AUDIT_DB", str(path))
    return path


@pytest.fixture(scope="session")
def mcs_table():
    return default_tables()[0]


@pytest.fixture(scope="session")
def bler_table():
    return default_tables()[1]


@pytest.fixture(scope="session")
def anchor_table(mcs_table):
    """Only the measured rows, over the matching MCS subset."""
    return load_bler_table(mcs_table=mcs_table.subset(ANCHOR_MCS), fill_missing=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_scenario():
    """Scenario from keyword sections, with a short constant channel by default."""
    def _make(**sections):
        raw = {"name": "test", "slots": 200, "seed": 0, "channel": {"kind": "constant", "level": 10.0}}
        raw.update(sections)
        return build_scenario(raw)
    return _make
