import pytest

from ergokit.model import default_model
from ergokit.synthetic import synthetic_profile


@pytest.fixture(scope="session")
def model():
    return default_model(72.0, 1.78)


@pytest.fixture(scope="session")
def profile():
    return synthetic_profile("test-subject", 72.0, 1.78)
