import numpy as np
import pytest

from leap.tasks import QuadraticSpec, Task
from leap.training import UpdateRule


def quad(A, c, alpha=0.5, steps=3, seed=0, **kw):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return Task("quadratic", QuadraticSpec(A, np.atleast_1d(np.asarray(c, dtype=float))),
                data_seed=seed, update_rule=UpdateRule(alpha, **kw), step_budget=steps,
                full_batch=True)


@pytest.fixture
def unit_quad():
    return quad([[1.0]], [1.0])
