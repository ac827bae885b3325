import time

import numpy as np
import pytest

from pseudorot.actionflow import ActionSpace, DeltaDisk, DiskMaps, DiskSettings
from pseudorot.genfun import factor_polar
from pseudorot.maps import AngularProfile, PolarMap

ALPHA, BETA = 0.3, 0.45


@pytest.fixture(scope="session")
def band_profile():
    return AngularProfile(ALPHA, BETA)


@pytest.fixture(scope="session")
def band_chain(band_profile):
    return factor_polar(PolarMap(band_profile), 8, K_target=3.5)


class _DiskCache:
    def __init__(self, chain):
        self.chain = chain
        self._disk = None
        self.build_seconds = None

    def get(self):
        if self._disk is None:
            t0 = time.perf_counter()
            self._disk = DeltaDisk.build(ActionSpace(self.chain, 3), 1, ALPHA, DiskSettings(n_psi_min=48))
            self.build_seconds = time.perf_counter() - t0
        return self._disk


@pytest.fixture(scope="session")
def disk_cache(band_chain):
    """The invariant disk for a/b = 1/3 of the band map, built once per session."""
    return _DiskCache(band_chain)


@pytest.fixture(scope="session")
def disk13(disk_cache):
    return disk_cache.get()


@pytest.fixture(scope="session")
def maps13(disk13):
    return DiskMaps(disk13)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
