import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lureobs.model import (LipschitzBounds, LureSystem, decompose,
                           lipschitz_spot_check, plant_rhs)
from lureobs.setvalued import SetValuedMap


def _zero_f2(x, u):
    return np.zeros((len(x), 1))


def test_only_f1_survives():
    sys_ = LureSystem(np.zeros((3, 3)), np.zeros((3, 1)), np.zeros((1, 3)),
                      np.eye(3)[:1], lambda x, u: np.array([u[0], 0, 0]),
                      _zero_f2, SetValuedMap.sign(1))
    np.testing.assert_array_equal(plant_rhs(sys_, 0.0, [1, 2, 3], [4.0]),
                                  [4, 0, 0])


def test_example2_rhs_arithmetic(ex2):
    sys_ = ex2[0].system
    x = np.array([3.0, 2.0, 1.0])
    # Cx = 15 - 6 + 4 = 13, relay gives 2*13 + 5 = 31, so w = -31
    Ax = np.array([-3 + 10, 27 - 1.8, -1])
    Bw = np.array([2, -3, 4]) * -31.0
    f1 = np.array([24 + 0.8 * math.sin(2), 16 + 0.9 * math.cos(3),
                   -8 + 0.8 * math.sin(1)])
    want = Ax + Bw + f1          # theta(0) = 0
    np.testing.assert_allclose(plant_rhs(sys_, 0.0, x, [8.0]), want,
                               rtol=0, atol=1e-12)


def test_branch_point_selects_zero(ex2):
    sys_ = ex2[0].system
    x = np.array([0.0, 4.0, 3.0])        # Cx = -12 + 12 = 0
    assert (sys_.C @ x)[0] == 0.0
    u = np.array([1.0])
    want = sys_.A @ x + sys_.f1(x, u) + sys_.f2(x, u) @ sys_.theta(0.5, x, u)
    np.testing.assert_allclose(plant_rhs(sys_, 0.5, x, u), want, atol=1e-14)


def test_dimension_errors(ex2):
    sys_ = ex2[0].system
    with pytest.raises(ValueError):
        plant_rhs(sys_, 0.0, np.zeros(2), [0.0])
    with pytest.raises(ValueError):
        plant_rhs(sys_, 0.0, np.zeros(3), [0.0, 1.0])
    with pytest.raises(ValueError):
        LureSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.eye(2),
                   lambda x, u: np.zeros(2), _zero_f2, SetValuedMap.sign(1))
    with pytest.raises(ValueError):
        LureSystem(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.eye(2),
                   lambda x, u: np.zeros(2), _zero_f2, SetValuedMap.sign(2))


def test_bounds_gamma_and_validation():
    assert LipschitzBounds(0.8, 3.0, 3.0).gamma == pytest.approx(9.8)
    with pytest.raises(ValueError):
        LipschitzBounds(-1, 0, 0)
    with pytest.raises(ValueError):
        LipschitzBounds(1, 0, 0, -2)


def _system(A, F, n=None):
    A = np.asarray(A, float)
    n = A.shape[0]
    return LureSystem(A, np.ones((n, 1)), np.ones((1, n)), F,
                      lambda x, u: np.zeros(n), _zero_f2, SetValuedMap.sign(1))


def test_decompose_blocks():
    dec = decompose(_system([[1, 2], [3, 4]], [[1.0, 0.0]]), 1)
    assert (dec.A11, dec.A12, dec.A21, dec.A22) == (1, 2, 3, 4)


def test_decompose_example2(ex2):
    sys_ = ex2[0].system
    dec = decompose(sys_, 1)
    assert dec.Fq[0, 0] == 1.0
    np.testing.assert_array_equal(dec.A22, [[-0.9, 0], [0, -1]])
    np.testing.assert_array_equal(dec.A12, [[5, 0]])
    A, B, C, F = dec.reassemble()
    assert np.array_equal(A, sys_.A) and np.array_equal(B, sys_.B)
    assert np.array_equal(C, sys_.C) and np.array_equal(F, sys_.F)


def test_decompose_rejects():
    with pytest.raises(ValueError, match="form"):
        decompose(_system([[1, 2], [3, 4]], [[0.0, 1.0]]), 1)
    with pytest.raises(ValueError, match="singular"):
        decompose(_system(np.eye(3), [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]), 2)
    with pytest.raises(ValueError):
        decompose(_system([[1, 2], [3, 4]], [[1.0, 0.0]]), 2)


@settings(max_examples=50)
@given(st.integers(2, 6), st.data())
def test_decompose_round_trip(n, data):
    q = data.draw(st.integers(1, n - 1))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    F = np.hstack([rng.normal(size=(q, q)) + 3 * np.eye(q), np.zeros((q, n - q))])
    sys_ = _system(rng.normal(size=(n, n)), F)
    A, B, C, F2 = decompose(sys_, q).reassemble()
    assert np.array_equal(A, sys_.A) and np.array_equal(F2, sys_.F)
    assert np.array_equal(B, sys_.B) and np.array_equal(C, sys_.C)


def test_rhs_lipschitz_away_from_branch(ex2, rng):
    spec = ex2[0]
    sys_, b = spec.system, spec.bounds
    a = sys_.Fop.a
    bound = (np.linalg.norm(sys_.A, 2) + b.L1 + b.L2 * b.L3
             + 2 * a * np.linalg.norm(sys_.B, 2) * np.linalg.norm(sys_.C, 2))
    checked = 0
    for _ in range(2000):
        x = rng.uniform(-10, 10, 3)
        y = x + rng.normal(scale=0.1, size=3)
        if np.sign(sys_.C @ x) != np.sign(sys_.C @ y):
            continue
        t, u = rng.uniform(0, 10), rng.uniform(-8, 8, 1)
        q = (np.linalg.norm(plant_rhs(sys_, t, x, u) - plant_rhs(sys_, t, y, u))
             / np.linalg.norm(x - y))
        assert q <= bound
        checked += 1
    assert checked > 1000


def test_spot_check_warns_on_understated_constant(ex2):
    spec, _, samples = ex2
    with pytest.warns(RuntimeWarning, match="L1"):
        out = lipschitz_spot_check(spec.system, spec.bounds, samples,
                                   n_pairs=3000, rng=1)
    assert not out["ok"]
    # 0.9 cos x1 term: the true constant of f1 is 0.9
    assert 0.8 < out["L1_observed"] <= 0.9 + 1e-12
    ok = LipschitzBounds(0.9, 3.0, 3.0, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert lipschitz_spot_check(spec.system, ok, samples, 3000, rng=1)["ok"]
