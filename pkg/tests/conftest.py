"""Shared fixtures.

Thread pinning must happen before numpy is first imported so the BLAS
pools are sized to one thread; timing-sensitive tests assume it.
"""

import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ[_var] = "1"

import numpy as np
import pytest

from safescale import default_scene, run_campaign
from safescale.labeling import assign_labels, cluster_scalings


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def small_campaign(scene):
    """Twelve sequential episodes shared by most unit tests."""
    return run_campaign(scene, 12, 417)


@pytest.fixture(scope="session")
def small_model(small_campaign):
    return cluster_scalings(np.concatenate([tr.s for tr in small_campaign]))


@pytest.fixture(scope="session")
def small_labeled(small_campaign, small_model):
    return assign_labels(small_campaign, small_model)
