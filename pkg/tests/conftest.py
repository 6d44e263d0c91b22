import numpy as np
import pytest

from vastzones.room import RoomSpec, circular_scene, generate_rirs
from vastzones.stats import SpatialStats


def random_spd(rng, n, cond=1e3):
    """Random SPD matrix with eigenvalues log-spaced over ``cond``."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.logspace(0, -np.log10(cond), n)
    return (q * w) @ q.T


def random_stats(rng, dim, m_b=3, m_d=3, l_count=1):
    """SpatialStats with random SPD matrices and a random correlation vector."""
    R_b = random_spd(rng, dim, 1e2)
    R_d = random_spd(rng, dim, 1e2)
    return SpatialStats(
        sigma_d_sq=float(rng.uniform(1, 2)), r_b=rng.standard_normal(dim) * 0.1,
        R_b=R_b, R_d=R_d, m_b=m_b, m_d=m_d, n_obs=1, l_count=l_count, j_len=dim // l_count,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_scene():
    """Four loudspeakers, 3 x 3 control points per zone, anechoic."""
    return circular_scene(n_loudspeakers=4, grid=3, spacing=0.1)


@pytest.fixture(scope="session")
def desk_rirs(desk_scene):
    return generate_rirs(desk_scene, RoomSpec(None, 0.0), 256)
