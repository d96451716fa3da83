import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peerocp.triplets import (build_triplet, dump_coefficients, flip, known_triplets,
                              load_coefficients, pascal, shift_matrix, triplet_from_dict,
                              triplet_to_dict, vandermonde)


def test_known_triplets():
    assert known_triplets() == ["AP4o33vgi", "AP4o33vsi"]
    with pytest.raises(KeyError):
        build_triplet("AP9")


def test_vandermonde_and_pascal_shift_polynomials():
    c = np.array([0.0, 0.3, 0.7, 1.0])
    V = vandermonde(c, 4)
    assert np.allclose(V[:, 2], c**2)
    # V P maps coefficients of p(x) to the values of p(x + 1)
    coef = np.array([1.0, -2.0, 0.5, 3.0])
    p = lambda x: np.polyval(coef[::-1], x)
    assert np.allclose(V @ pascal(4) @ coef, p(c + 1.0))
    # V E~ gives the derivative values
    d = np.polyder(coef[::-1])
    assert np.allclose(V @ shift_matrix(4) @ coef, np.polyval(d, c))


def test_flip_is_involution():
    P = flip(4)
    assert np.array_equal(P @ P, np.eye(4))


def test_basic_shapes_and_immutability(triplet_name):
    T = build_triplet(triplet_name)
    for M in (T.A, T.A0, T.AN, T.At0, T.AtN):
        assert M.shape == (4, 4)
    assert T.c[-1] == 1.0
    with pytest.raises(ValueError):
        T.A[0, 0] = 2.0
    assert np.allclose(np.tril(T.A), T.A)
    assert np.allclose(np.tril(T.At0), T.At0)


def test_B_has_ones_eigenvector(triplet_name):
    T = build_triplet(triplet_name)
    for s in (0.7, 1.0, 1.6):
        assert np.allclose(np.linalg.solve(T.A, T.B(s) @ np.ones(4)), np.ones(4), atol=1e-12)


def test_B_rejects_nonpositive_ratio():
    T = build_triplet("AP4o33vgi")
    with pytest.raises(ValueError):
        T.B(0.0)


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(-1.0, 2.0))
def test_interpolation_row_reproduces_cubics(theta):
    T = build_triplet("AP4o33vsi")
    coef = np.array([0.5, -1.0, 2.0, 0.25])
    Y = np.polyval(coef[::-1], T.c)
    assert T.interpolation_row(theta) @ Y == pytest.approx(np.polyval(coef[::-1], theta), abs=1e-11)


def test_json_roundtrip_is_bit_exact(tmp_path, triplet_name):
    T = build_triplet(triplet_name)
    path = tmp_path / "c.json"
    dump_coefficients(T, path)
    T2 = load_coefficients(path)
    for key in ("c", "kappa", "A", "A0", "AN", "At0", "AtN", "a", "w"):
        assert np.array_equal(getattr(T, key), getattr(T2, key)), key
    assert np.array_equal(T.B(1.3), T2.B(1.3))
    assert T2.grid_class == T.grid_class and T2.sigma_range == T.sigma_range
    doc = json.loads(path.read_text())
    assert triplet_to_dict(triplet_from_dict(doc)) == doc


def test_exact_data_are_fractions():
    T = build_triplet("AP4o33vgi")
    assert all(isinstance(x, Fraction) for x in T.exact["c"])
    assert sum(T.exact["kappa"]) == 1
