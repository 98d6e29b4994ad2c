import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aperiodic_nf.ftseries import Caps
from aperiodic_nf.resonance import (ResonanceModule, action_grid, check_module,
                                    check_nonresonance, convexity_constants,
                                    fast_drift_distance, harmonics_below, is_resonance_module,
                                    smith_diagonal)
from aperiodic_nf.ftseries import action_polynomial
from _support import brute_saturated, exhaustive_saturation, quadratic_h

CAPS = Caps(0, 2, 0)
GOLDEN = (math.sqrt(5) - 1) / 2


def test_module_examples():
    assert is_resonance_module([(1, 1)])
    assert not is_resonance_module([(2, 0)])
    assert is_resonance_module([])
    chk = check_module([(1, 2), (2, 4)])
    assert not chk.is_module and "dependent" in chk.reason
    assert "not saturated" in check_module([(1, 1), (1, -1)]).reason


def test_smith_diagonal_examples():
    assert smith_diagonal([[2, 4], [6, 8]]) == [2, 4]
    assert smith_diagonal([[1, 1], [1, -1]]) == [1, 2]
    assert smith_diagonal([[0, 0]]) == []
    assert smith_diagonal([[3, 0, 0], [0, 2, 0]]) == [1, 6]


def test_resonance_module_class():
    with pytest.raises(ValueError):
        ResonanceModule(2, ((2, 0),))
    with pytest.raises(ValueError):
        ResonanceModule(2, ((1, 0, 0),))
    M = ResonanceModule(3, ((1, -1, 0),))
    assert M.dim == 1
    assert M.contains((2, -2, 0)) and not M.contains((1, 1, 0))
    assert list(M.contains(np.array([[0, 0, 0], [3, -3, 0], [0, 0, 1]]))) == [True, True, False]
    assert ResonanceModule.full(2).contains((5, -7))
    assert not ResonanceModule.zero(2).contains((0, 1))


@pytest.mark.parametrize("n,r", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_saturation_matches_brute_force(n, r):
    total, mism = exhaustive_saturation(n, r, is_resonance_module)
    assert total == 7 ** (n * r) and mism == 0


def test_brute_force_oracle_detects_wrong_answers():
    _, mism = exhaustive_saturation(2, 2, lambda rows: True)
    assert mism > 0
    got = brute_saturated(np.array([[[1, 1]], [[2, 0]], [[0, 0]], [[2, 3]]]))
    assert got.tolist() == [True, False, False, True]


def test_harmonics_below():
    ks = harmonics_below(2, 3)
    assert len(ks) == 6          # half of the 12 nonzero k with |k| <= 2
    assert all(next(x for x in k if x) > 0 for k in ks)
    assert len(harmonics_below(1, 1)) == 0


def _identity_h(n, center):
    return quadratic_h(np.eye(n), center, CAPS)


def test_nonresonance_examples():
    I = np.array([[1.0, 0.618]])
    h = _identity_h(2, [1.0, 0.618])
    rep = check_nonresonance(h, I, ResonanceModule.zero(2), 0.05, 5, 0.0)
    assert rep.passed
    assert rep.min_divisor == pytest.approx(0.236, abs=1e-12)
    assert rep.offender in ((1, -2), (-1, 2))
    bad = check_nonresonance(h, I, ResonanceModule.zero(2), 0.3, 5, 0.0)
    assert not bad.passed and bad.offender == (1, -2)
    full = check_nonresonance(h, I, ResonanceModule.full(2), 1e6, 5, 0.0)
    assert full.passed and full.offender is None


def test_nonresonance_margin_uses_hessian():
    h = _identity_h(2, [1.0, GOLDEN])
    I = np.array([[1.0, GOLDEN]])
    rep = check_nonresonance(h, I, ResonanceModule.zero(2), 0.05, 5, 0.01)
    assert rep.hessian_bound == pytest.approx(1.0)
    assert rep.margin((1, -2)) == pytest.approx(0.03)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 1.5), st.floats(0.3, 1.0), st.floats(1e-3, 0.5), st.integers(2, 8),
       st.floats(0.0, 1.0), st.integers(1, 8), st.floats(0.0, 0.05))
def test_nonresonance_monotone(a, b, alpha, N, fa, dN, delta):
    h = _identity_h(2, [a, b])
    sample = action_grid([a - 0.01, b - 0.01], [a + 0.01, b + 0.01], 3)
    M = ResonanceModule.zero(2)
    if check_nonresonance(h, sample, M, alpha, N, delta).passed:
        assert check_nonresonance(h, sample, M, alpha * fa + 1e-12, max(1, N - dN), delta).passed


def test_nonresonance_csv(tmp_path):
    h = _identity_h(2, [1.0, GOLDEN])
    rep = check_nonresonance(h, action_grid([0.9, 0.6], [1.1, 0.65], 2),
                             ResonanceModule.zero(2), 0.01, 4, 0.0)
    path = tmp_path / "nr.csv"
    rep.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["I1", "I2", "min_slack", "divisor", "k1", "k2", "ok"]
    assert len(rows) == 5
    assert rep.to_dict()["margin_rule"] == "M_hess * delta * |k|"


def test_fast_drift_examples():
    M = ResonanceModule(2, ((1, 0),))
    assert fast_drift_distance([3.0, 0.1], [0.0, 0.0], M) == pytest.approx(0.1)
    assert fast_drift_distance([3.0, 0.0], [0.0, 0.0], M) == pytest.approx(0.0)
    Z = ResonanceModule.zero(2)
    assert fast_drift_distance([3.0, 4.0], [0.0, 0.0], Z) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        fast_drift_distance([1.0], [0.0, 0.0], Z)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-10, 10))
def test_fast_drift_invariant_along_plane(I, I0, t):
    M = ResonanceModule(3, ((1, -1, 0), (0, 1, 2)))
    v = t * np.array([1, -1, 0]) - 0.5 * t * np.array([0, 1, 2])
    d0 = fast_drift_distance(I, I0, M)
    assert fast_drift_distance(np.array(I) + v, I0, M) == pytest.approx(d0, abs=1e-9)


def test_convexity_examples():
    sample = action_grid([0.5, 0.5], [1.5, 1.5], 3)
    rep = convexity_constants(_identity_h(2, [1.0, 1.0]), sample)
    assert rep.m == pytest.approx(1.0) and rep.M == pytest.approx(1.0) and rep.convex
    h = action_polynomial([((2, 0), 1.0), ((0, 2), 2.0)], 2, CAPS, [1.0, 1.0], about_origin=True)
    rep = convexity_constants(h, sample)
    assert rep.m == pytest.approx(2.0) and rep.M == pytest.approx(4.0)
    h = action_polynomial([((1, 1), 1.0)], 2, CAPS, [1.0, 1.0], about_origin=True)
    assert not convexity_constants(h, sample).convex
    with pytest.raises(ValueError):
        convexity_constants(h, np.zeros((0, 2)))
