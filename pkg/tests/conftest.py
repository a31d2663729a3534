import warnings

import numpy as np
import pytest

from onebitms import build_cover_tree, build_gmra, sample_sphere
from onebitms.errors import DegenerateCellWarning

BENCH_SEED = 7


@pytest.fixture(scope="session")
def bench_cloud():
    """The 2-sphere benchmark cloud: d=2, D=20, n=2000."""
    return sample_sphere(2, 20, 2000, seed=BENCH_SEED)


@pytest.fixture(scope="session")
def bench_tree(bench_cloud):
    return build_cover_tree(bench_cloud.data)


@pytest.fixture(scope="session")
def bench_gmra(bench_cloud, bench_tree):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCellWarning)
        return build_gmra(bench_cloud, 2, j_min=2, j_max=6, tree=bench_tree)


@pytest.fixture(scope="session")
def small_sphere_cloud():
    """200 points on a 2-sphere in R^20, shared by tree and recovery tests."""
    return sample_sphere(2, 20, 200, seed=3)


@pytest.fixture(scope="session")
def small_gmra(small_sphere_cloud):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCellWarning)
        return build_gmra(small_sphere_cloud, 2, j_min=1, j_max=4)


def pairwise_distances(data):
    sq = np.sum(data * data, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (data @ data.T), 0.0)
    return np.sqrt(d2)
