import math

import pytest

from eigenlab.mesh import (
    build_flat_circle,
    build_flat_torus,
    build_icosphere,
    build_product,
)


@pytest.fixture(scope="session")
def t3_res6():
    return build_flat_torus((1.0, 1.0, 1.0), (6, 6, 6))


@pytest.fixture(scope="session")
def t3_res12():
    return build_flat_torus((1.0, 1.0, 1.0), (12, 12, 12))


@pytest.fixture(scope="session")
def icosphere3():
    return build_icosphere(3)


@pytest.fixture(scope="session")
def s1_x_s2(icosphere3):
    circ = build_flat_circle(2.0 * math.pi, 64)
    return build_product(circ, icosphere3)
