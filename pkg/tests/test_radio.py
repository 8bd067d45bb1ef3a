import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavmec.config import RadioParams, dbm_to_w, w_to_dbm
from uavmec.radio import (DegenerateGeometry, Radio, connected, coverage_indicator, distance,
                          link_capacity, rssi, uplink_interference)


def test_distance_examples():
    assert distance((0, 0, 100), (0, 0)) == 100.0
    assert distance((30, 40, 120), (0, 0)) == pytest.approx(130.0, rel=1e-15)
    assert distance((5, 6, 7), (5, 6, 7)) == 0.0


def test_rssi_examples():
    # 0.5 W * 1e-3 / 100^2
    assert rssi(0.5, 1e-3, 100.0) == pytest.approx(5e-8, rel=1e-15)
    assert w_to_dbm(rssi(0.5, 1e-3, 100.0)) == pytest.approx(-43.0103, abs=1e-4)
    assert rssi(0.5, 1e-3, 200.0) == pytest.approx(rssi(0.5, 1e-3, 100.0) / 4, rel=1e-15)
    assert rssi(0.0, 1e-3, 100.0) == 0.0
    with pytest.raises(DegenerateGeometry):
        rssi(0.5, 1e-3, 0.0)


def test_coverage_boundary_inclusive():
    thr = dbm_to_w(-90.0)
    assert coverage_indicator(thr, thr) == 1
    assert coverage_indicator(thr * (1 - 1e-9), thr) == 0
    assert coverage_indicator(5e-8, thr) == 1


def test_link_capacity_examples():
    assert link_capacity(1e7, 0.0, 0.0, 1e-13) == 0.0
    # SINR 3 -> log2(4) = 2
    assert link_capacity(1e7, 3.0, 0.5, 0.5) == pytest.approx(2e7, rel=1e-15)
    assert link_capacity(2e7, 3.0, 0.5, 0.5) == pytest.approx(2 * link_capacity(1e7, 3.0, 0.5, 0.5))
    with pytest.raises(ValueError):
        link_capacity(1e7, -1.0, 0.0, 1.0)


def test_uplink_interference_examples():
    devs = [(0.0, 0.0), (200.0, 0.0), (0.0, 200.0)]
    assert uplink_interference((0, 0, 0), devs, [0], 0, 0.1, 1e-3) == 0.0
    one = uplink_interference((0, 0, 0), devs, [0, 1], 0, 0.1, 1e-3)
    # 0.1 W * 1e-3 / 200^2
    assert one == pytest.approx(2.5e-9, rel=1e-12)
    two = uplink_interference((0, 0, 0), devs, [0, 1, 2], 0, 0.1, 1e-3)
    assert two == pytest.approx(2 * one, rel=1e-12)


def test_connectivity_predicate():
    assert connected(400.0, 400.0)
    assert not connected(400.0 + 1e-9, 400.0)


def test_radio_wrapper_uses_parameters():
    r = Radio(RadioParams())
    assert r.rssi_min == pytest.approx(1e-12, rel=1e-12)
    assert r.covers((0, 0, 100), (0, 0))
    assert not r.covers((0, 0, 100), (1e6, 0))


pos = st.floats(1.0, 5000.0)


@given(pos, pos)
def test_rssi_strictly_decreasing(d1, d2):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert rssi(0.5, 1e-3, lo) > rssi(0.5, 1e-3, hi)


@given(st.floats(0, 1e-6), st.floats(0, 1e-6), st.floats(0, 1e-9))
def test_capacity_monotone(s1, s2, i):
    noise = 1e-14
    lo, hi = sorted((s1, s2))
    assert link_capacity(1e7, lo, i, noise) <= link_capacity(1e7, hi, i, noise)
    assert link_capacity(1e7, hi, i, noise) >= link_capacity(1e7, hi, i + 1e-12, noise)


@given(st.floats(-150.0, 60.0))
def test_dbm_roundtrip(dbm):
    w = dbm_to_w(dbm)
    assert dbm_to_w(w_to_dbm(w)) == pytest.approx(w, rel=1e-12)
    assert math.isclose(w_to_dbm(w), dbm, rel_tol=1e-12, abs_tol=1e-12)
