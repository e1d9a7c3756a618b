import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def triangle_gpc():
    """One EP fit on the 2-D triangle data, shared across tests."""
    from localgrad.data import gen_triangle
    from localgrad.gpc import ep_fit
    from localgrad.kernels import KernelSpec

    data = gen_triangle(60, seed=123)
    model = ep_fit(data.features, data.labels, KernelSpec("rbf", width=1.0))
    return data, model
