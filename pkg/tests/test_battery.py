from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parkedrsu.battery import battery_drain


def test_reference_operating_point():
    assert battery_drain(3, 12, 6.64, 60) == pytest.approx(2.7667, abs=1e-4)
    assert battery_drain(3, 12, 6.64, 60, eol_factor=0.5) == pytest.approx(5.5333, abs=1e-4)


def test_zero_hours_is_zero():
    assert battery_drain(3, 12, 0, 60) == 0.0


@pytest.mark.parametrize("kw", [
    dict(power=0), dict(voltage=0), dict(capacity=0), dict(hours=-1), dict(eol_factor=0), dict(power=-2),
])
def test_rejects_bad_inputs(kw):
    args = dict(power=3, voltage=12, hours=6.64, capacity=60, eol_factor=1.0) | kw
    with pytest.raises(ValueError):
        battery_drain(**args)


@given(st.floats(0.1, 50), st.floats(1, 48), st.floats(0, 24), st.floats(1, 200))
def test_matches_direct_formula(p, v, h, c):
    assert battery_drain(p, v, h, c) == pytest.approx(100 * (p / v) * h / c)
