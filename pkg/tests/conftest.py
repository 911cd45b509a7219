from functools import lru_cache
from pathlib import Path

import pytest

from speciso.mesh_core import load_mesh, make_dumbbell, make_ellipsoid, make_icosphere

FIXTURES = Path(__file__).parent / "fixtures"


@lru_cache(maxsize=None)
def icosphere(level, radius=1.0):
    return make_icosphere(level, radius)


@lru_cache(maxsize=None)
def fixture_mesh(name):
    return load_mesh(FIXTURES / name)


def corpus():
    """The soundness corpus: (label, mesh builder) pairs, 13 meshes."""
    return [
        ("icosphere2", lambda: icosphere(2)),
        ("icosphere3", lambda: icosphere(3)),
        ("icosphere4", lambda: icosphere(4)),
        ("icosphere5", lambda: icosphere(5)),
        ("ellipsoid_2_1_1", lambda: make_ellipsoid(2, 1, 1, 3)),
        ("ellipsoid_3_1_05", lambda: make_ellipsoid(3, 1, 0.5, 4)),
        ("ellipsoid_1_15_07", lambda: make_ellipsoid(1, 1.5, 0.7, 3)),
        ("dumbbell_09", lambda: make_dumbbell(0.9, 32)),
        ("dumbbell_05", lambda: make_dumbbell(0.5, 32)),
        ("dumbbell_01", lambda: make_dumbbell(0.1, 48)),
        ("bumpy.off", lambda: fixture_mesh("bumpy.off")),
        ("offset_sphere.obj", lambda: fixture_mesh("offset_sphere.obj")),
        ("twin_spheres.off", lambda: fixture_mesh("twin_spheres.off")),
    ]


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
