"""Shared fixtures; expensive artifacts are session-scoped and reused."""

from __future__ import annotations

import numpy as np
import pytest

from thinrod.material import ElasticMaterialField
from thinrod.rod1d import LoadSpec
from thinrod.xsection import center_and_normalize, disk_mesh, effective_stiffness

LAM = 1.0
MU = 1.0
YOUNG = MU * (3.0 * LAM + 2.0 * MU) / (LAM + MU)
DISK_I = 1.0 / (4.0 * np.pi)  # second moment of the unit-area disk
EI = YOUNG * DISK_I
CANTILEVER_LOAD = 0.08 * EI  # tip deflection ~ 1% of the length


@pytest.fixture(scope="session")
def unit_material():
    return ElasticMaterialField.homogeneous(LAM, MU)


@pytest.fixture(scope="session")
def fine_disk():
    """Finest default disk mesh (the acceptance-oracle resolution)."""
    return center_and_normalize(disk_mesh(1.0, 1.0 / 16.0))


@pytest.fixture(scope="session")
def coarse_disk():
    return center_and_normalize(disk_mesh(1.0, 1.0 / 5.0))


@pytest.fixture(scope="session")
def disk_stiffness(unit_material, fine_disk):
    return effective_stiffness(unit_material, 0.0, fine_disk)


@pytest.fixture(scope="session")
def cantilever_load():
    return LoadSpec.constant([0.0, 0.0, -CANTILEVER_LOAD], 1.0)
