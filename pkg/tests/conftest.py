import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from avcbench.grid import load_fixture, parse_case

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


TWO_BUS = """\
[meta]
base_mva 100
[bus]
1 slack {v1}
2 pq -
[branch]
1 2 {r} {x}
[gen]
1 0.0 {v1} 1
[load]
2 {p} {q}
"""


def two_bus(p=0.1, q=0.0, r=0.0, x=0.1, v1=1.0):
    return parse_case(TWO_BUS.format(p=p, q=q, r=r, x=x, v1=v1))


@pytest.fixture(scope="session")
def ieee14():
    return load_fixture("ieee14")


@pytest.fixture(scope="session")
def ieee14_ltc():
    return load_fixture("ieee14_ltc")


@pytest.fixture(scope="session")
def twobus():
    return load_fixture("twobus")
