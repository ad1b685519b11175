import numpy as np
import pytest

from ordinal_causal.copula import _backend
from ordinal_causal import simulation as sim

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def kernels(request):
    """Each copula test runs against every importable kernel backend."""
    return _backend.load(request.param)


@pytest.fixture(scope="session")
def baseline_data():
    return sim.generate(sim.baseline_spec(n=600), 11).data


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
