import os

os.environ.setdefault("FLUCTGEOM_CHECKS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def axial2():
    from fluctgeom.workbench.catalog import builtin_family

    return builtin_family("axial-2d", 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
