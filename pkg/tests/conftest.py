import pytest

from sinklab import WarpField


@pytest.fixture(scope="session")
def warp():
    return WarpField()
