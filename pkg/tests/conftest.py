import numpy as np
import pytest

from antiplane.mesh import generate_rect_mesh

TAGS = "bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb"


def square(nx, ny=None, tags=TAGS, width=1.0, height=1.0):
    return generate_rect_mesh(width, height, nx, nx if ny is None else ny, tags)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square8():
    return square(8)
