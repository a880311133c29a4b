import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_spectra():
    """Frozen oracle spectra (see scripts/make_reference_fixture.py)."""
    return json.loads((FIXTURES / "reference_spectra.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
