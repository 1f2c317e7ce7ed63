import pytest

from lutherie.geometry import GuitarSpec, build_outlines
from lutherie.partition import BuildPlate, plan_guitar


def shoelace(ring):
    """Independent polygon area for oracle checks (signed, CCW positive)."""
    n = len(ring)
    return 0.5 * sum(ring[i][0] * ring[(i + 1) % n][1] - ring[(i + 1) % n][0] * ring[i][1]
                     for i in range(n))


def outline_area(outline):
    return abs(shoelace(outline.exterior)) - sum(abs(shoelace(h)) for h in outline.holes)


@pytest.fixture(scope="session")
def spec():
    return GuitarSpec()


@pytest.fixture(scope="session")
def outlines(spec):
    return {o.label: o for o in build_outlines(spec)}


@pytest.fixture(scope="session")
def plans(spec):
    return {p.label: p for p in plan_guitar(spec, BuildPlate())}
