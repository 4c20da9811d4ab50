import numpy as np
import pytest

from tsdf_mcl import build_tsdf, scenes


@pytest.fixture(scope="session")
def room_scene():
    return scenes.room_20x10()


@pytest.fixture(scope="session")
def room_map_6cm(room_scene):
    """The bundled room at 6 cm cells; shared because building it is the
    single most expensive fixture."""
    m = build_tsdf(room_scene, 0.06, 0.48, 16)
    m.build_index()
    return m


@pytest.fixture(scope="session")
def room_map_coarse(room_scene):
    m = build_tsdf(room_scene, 0.1, 0.4, 16)
    m.build_index()
    return m


def random_pose_array(rng, n):
    """States with positions in a +-10 m cube and free-form wrapped angles."""
    states = np.empty((n, 6))
    states[:, :3] = rng.uniform(-10.0, 10.0, (n, 3))
    states[:, 3] = rng.uniform(-np.pi, np.pi, n)
    states[:, 4] = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05, n)
    states[:, 5] = rng.uniform(-np.pi, np.pi, n)
    return states
