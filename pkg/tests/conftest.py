import json

import numpy as np
import pytest

from crossplan.domain import DomainParams, IntersectionModel
from crossplan.fixtures import fixture_path
from crossplan.simulation import load_scenario
from crossplan.topology import PathSet, build_path_set, fit_spline, parse_map


@pytest.fixture(scope="session")
def straight_path():
    return fit_spline(np.array([[0.0, 0.0], [200.0, 0.0]]))


@pytest.fixture(scope="session")
def straight_paths(straight_path):
    return PathSet(paths=[straight_path], q=np.array([1.0]))


@pytest.fixture(scope="session")
def circle_path():
    th = np.radians(np.arange(0, 91, 1.0))
    pts = np.column_stack([10.0 * np.cos(th), 10.0 * np.sin(th)])
    return fit_spline(pts)


@pytest.fixture(scope="session")
def crossing_paths():
    """Two perpendicular straight paths crossing at (100, 0)."""
    a = fit_spline(np.array([[0.0, 0.0], [200.0, 0.0]]), index=0)
    b = fit_spline(np.array([[100.0, -60.0], [100.0, 60.0]]), index=1)
    return PathSet(paths=[a, b], q=np.array([1.0, 1.0]))


@pytest.fixture(scope="session")
def roundabout_scenario():
    return load_scenario(fixture_path("roundabout.json"))


@pytest.fixture(scope="session")
def threeway_scenario():
    return load_scenario(fixture_path("threeway.json"))


@pytest.fixture(scope="session")
def straight_scenario():
    return load_scenario(fixture_path("straight.json"))


@pytest.fixture(scope="session")
def tjunction_graph():
    return parse_map(fixture_path("tjunction_map.json").read_bytes())


@pytest.fixture()
def crossing_model(crossing_paths):
    geoms = np.array([[2.0, 4.5], [2.0, 4.5]])
    return IntersectionModel(crossing_paths, geoms, DomainParams(), dt=0.5)


def minimal_map_dict():
    return {
        "nodes": {"a": [0, 0], "b": [50, 0]},
        "lanes": {"ab": {"nodes": ["a", "b"], "successors": []}},
        "entrances": ["ab"],
        "exits": ["ab"],
    }


@pytest.fixture()
def minimal_map_json():
    return json.dumps(minimal_map_dict())
