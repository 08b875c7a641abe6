import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None, max_examples=40)
settings.load_profile("suite")


def gram_oracle(a: np.ndarray) -> np.ndarray:
    """Full symmetric A^T A via the plain loop kernel, used as the reference
    everywhere."""
    from atamul.matrix import mirror_lower_to_upper, naive_syrk_lower

    n = a.shape[1]
    c = np.zeros((n, n), dtype=a.dtype)
    naive_syrk_lower(a, c, 1.0)
    mirror_lower_to_upper(c)
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
