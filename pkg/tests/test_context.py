from rrrflow.context import *
from rrrflow.sets import *

import pytest


def test_defaults():
    c = NumericContext()
    assert c.clamp_rounds == 8
    assert c.replace(clamp_rounds=2).clamp_rounds == 2
    assert c.clamp_rounds == 8
    with pytest.raises(ValueError):
        NumericContext(clamp_round=2)


def test_context_manager():
    s = Sphere([0, 0], 1.0)
    x = [1.0 + 1e-6, 0.0]
    assert not s.contains(x)
    with set_numeric_context(NumericContext(membership_tol=1e-3)):
        assert get_active_context().membership_tol == 1e-3
        assert s.contains(x)
    assert get_active_context().membership_tol == 1e-10
    assert not s.contains(x)
