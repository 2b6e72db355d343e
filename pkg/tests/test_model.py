import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from l1cert.errors import DimensionError, UnboundedSetError
from l1cert.model import (NoiseModel, NuNormParams, SensingMatrix, SignalSpec, UncertaintySet, make_rng,
                          norm_sp, nu_norm, observe, radius_bound, read_csv, sparse_head, support_function,
                          write_csv)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def box_polytope(dim, radius=1.0):
    I = np.eye(dim)
    return UncertaintySet.polytope(np.vstack([I, -I]), np.full(2 * dim, radius))


class TestSensingMatrix:
    def test_col_norms(self):
        A = SensingMatrix(make_rng(0).standard_normal((5, 7)))
        np.testing.assert_allclose(A.col_norms, np.linalg.norm(A.entries, axis=0), rtol=1e-12)
        assert (A.m, A.n) == (5, 7)

    def test_immutable(self):
        A = SensingMatrix(np.eye(3))
        with pytest.raises(ValueError):
            A.entries[0, 0] = 2.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(Exception):
            SensingMatrix(np.zeros((0, 3)))
        with pytest.raises(Exception):
            SensingMatrix(np.array([[np.nan, 1.0]]))

    def test_hash_and_csv_roundtrip(self, tmp_path):
        A = SensingMatrix(make_rng(1).standard_normal((4, 6)))
        write_csv(tmp_path / "A.csv", A.entries)
        B = SensingMatrix.from_csv(tmp_path / "A.csv")
        assert np.array_equal(A.entries, B.entries)
        assert A.content_hash() == B.content_hash()
        assert A.content_hash() != SensingMatrix(A.entries * 2).content_hash()

    def test_vector_csv(self, tmp_path):
        v = np.array([1.0, -2.5, 1e-300])
        write_csv(tmp_path / "v.csv", v)
        assert np.array_equal(read_csv(tmp_path / "v.csv"), v)


class TestUncertaintySet:
    def test_support_zero(self):
        assert support_function(UncertaintySet.zero(2), [3, -4]) == 0.0

    def test_support_box(self):
        assert support_function(UncertaintySet.box_image(np.eye(2), 1.0), [1, -2]) == 3.0

    def test_support_polytope_matches_box(self, derived):
        val = support_function(box_polytope(2), [1, -2])
        assert abs(val - derived["polytope_support_box_g[1,-2]"]) <= 1e-9

    def test_polytope_with_equality_and_map(self):
        # {M z : |z_j| <= 1, sum z = 0} in R^2 with M = I: the segment between (1,-1) and (-1,1)
        I = np.eye(2)
        U = UncertaintySet.polytope(np.vstack([I, -I]), np.ones(4), E=np.ones((1, 2)))
        assert abs(support_function(U, [1.0, 0.0]) - 1.0) <= 1e-9
        assert abs(support_function(U, [1.0, 1.0])) <= 1e-9

    def test_asymmetric_polytope_rejected(self):
        with pytest.raises(ValueError):
            UncertaintySet.polytope(np.array([[1.0], [-1.0]]), np.array([1.0, 2.0]))

    def test_unbounded_polytope_rejected(self):
        C = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(UnboundedSetError, match="uncertainty set unbounded"):
            UncertaintySet.polytope(C, np.ones(2))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            support_function(UncertaintySet.zero(3), [1.0, 2.0])

    @pytest.mark.parametrize("make", [
        lambda: UncertaintySet.zero(3),
        lambda: UncertaintySet.box_image(make_rng(2).standard_normal((3, 5)), 0.7),
        lambda: box_polytope(3, 0.5),
    ])
    def test_support_symmetric(self, make):
        U = make()
        rng = make_rng(3)
        for _ in range(5):
            g = rng.standard_normal(3)
            a, b = support_function(U, g), support_function(U, -g)
            assert a >= 0 and abs(a - b) <= 1e-9

    @pytest.mark.parametrize("make", [
        lambda: UncertaintySet.zero(2),
        lambda: UncertaintySet.box_image([[1.0, 2.0], [0.0, 1.0]], 0.3),
        lambda: box_polytope(2, 0.5),
    ])
    def test_json_roundtrip(self, make, tmp_path):
        U = make()
        (tmp_path / "u.json").write_text(json.dumps(U.to_dict()))
        V = UncertaintySet.from_json(tmp_path / "u.json")
        g = np.array([0.3, -1.1])
        assert abs(support_function(U, g) - support_function(V, g)) <= 1e-12

    def test_radius_bound(self):
        assert radius_bound(UncertaintySet.zero(4)) == 0.0
        assert abs(radius_bound(UncertaintySet.box_image(np.eye(2), 1.0)) - math.sqrt(2)) <= 1e-12
        assert abs(radius_bound(box_polytope(2)) - math.sqrt(2)) <= 1e-8

    def test_is_trivial(self):
        assert UncertaintySet.zero(2).is_trivial
        assert UncertaintySet.box_image(np.eye(2), 0.0).is_trivial
        assert not UncertaintySet.box_image(np.eye(2), 0.1).is_trivial


class TestNuNorm:
    def test_degenerate(self):
        p = NuNormParams(UncertaintySet.zero(2), NoiseModel(0.0, 0.1), 5)
        assert nu_norm(p, [3.0, 4.0]) == 0.0
        assert p.degenerate

    def test_noise_term(self):
        n = 7
        p = NuNormParams(UncertaintySet.zero(2), NoiseModel(1.0, n * math.exp(-2)), n)
        assert abs(nu_norm(p, [1.0, 0.0]) - 2.0) <= 1e-12

    def test_box_term(self):
        p = NuNormParams(UncertaintySet.box_image(np.eye(2), 1.0), NoiseModel(0.0, 0.1), 3)
        assert nu_norm(p, [1.0, -2.0]) == 3.0

    def test_noise_coef_oracle(self, derived):
        p = NuNormParams(UncertaintySet.zero(1), NoiseModel(0.5, 0.01), 8)
        assert abs(p.noise_coef - derived["noise_coef_n8_s0.5_e0.01"]) <= 1e-14

    @settings(max_examples=200, deadline=None)
    @given(h1=arrays(float, 3, elements=finite), h2=arrays(float, 3, elements=finite), lam=finite)
    def test_is_a_norm(self, h1, h2, lam):
        M = np.array([[1.0, 0.5], [0.0, -1.0], [2.0, 0.3]])
        p = NuNormParams(UncertaintySet.box_image(M, 0.4), NoiseModel(0.2, 0.05), 9)
        a = nu_norm(p, lam * h1)
        b = abs(lam) * nu_norm(p, h1)
        assert abs(a - b) <= 1e-10 * max(1.0, b)
        assert nu_norm(p, h1 + h2) <= nu_norm(p, h1) + nu_norm(p, h2) + 1e-10

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(-1.0, 0.1)
        with pytest.raises(ValueError):
            NoiseModel(1.0, 1.0)
        with pytest.raises(ValueError):
            SignalSpec(5, 0)
        with pytest.raises(ValueError):
            SignalSpec(5, 2, -0.1)


class TestObserve:
    def test_noiseless(self):
        A = SensingMatrix(make_rng(0).standard_normal((4, 6)))
        x = make_rng(1).standard_normal(6)
        y = observe(A, x, None, NoiseModel(0.0, 0.1), seed=5)
        assert np.array_equal(y, A.entries @ x)

    def test_reproducible(self):
        A = SensingMatrix(np.eye(2))
        y1 = observe(A, [1.0, 0.0], [0.0, 0.0], NoiseModel(1.0, 0.1), seed=42)
        y2 = observe(A, [1.0, 0.0], [0.0, 0.0], NoiseModel(1.0, 0.1), seed=42)
        assert np.array_equal(y1, y2)
        np.testing.assert_allclose(y1 - np.array([1.0, 0.0]), make_rng(42).standard_normal(2), atol=1e-15)

    def test_gaussian_mean(self):
        A = SensingMatrix(np.ones((3, 2)))
        draws = np.array([observe(A, np.zeros(2), None, NoiseModel(1.0, 0.1), seed=k) for k in range(10_000)])
        assert np.all(np.abs(draws.mean(axis=0)) <= 4 / math.sqrt(10_000))

    def test_box_membership(self):
        A = SensingMatrix(np.eye(2))
        U = UncertaintySet.box_image(np.eye(2), 0.5)
        y = observe(A, [0.0, 0.0], None, NoiseModel(0.0, 0.1), 0, U=U, w=[0.5, -0.5])
        assert np.array_equal(y, [0.5, -0.5])
        with pytest.raises(ValueError):
            observe(A, [0.0, 0.0], None, NoiseModel(0.0, 0.1), 0, U=U, w=[0.6, 0.0])

    def test_polytope_membership(self):
        A = SensingMatrix(np.eye(2))
        U = box_polytope(2, 1.0)
        observe(A, [0.0, 0.0], [1.0, -1.0], NoiseModel(0.0, 0.1), 0, U=U)
        with pytest.raises(ValueError):
            observe(A, [0.0, 0.0], [1.5, 0.0], NoiseModel(0.0, 0.1), 0, U=U)


class TestSparseHead:
    def test_worked_example(self):
        head, tail = sparse_head([1, 2, 2, 3], 2)
        assert np.array_equal(head, [0, 2, 0, 3])
        assert tail == 3.0

    def test_full(self):
        x = np.array([1.0, -2.0, 0.5])
        head, tail = sparse_head(x, 3)
        assert np.array_equal(head, x) and tail == 0.0

    def test_enumeration_oracle(self, derived):
        head, tail = sparse_head([-5, 1, 1, 1], 1)
        keep = int(derived["sparse_head_keep_[-5,1,1,1]_s1"])
        assert np.flatnonzero(head).tolist() == [keep]
        assert tail == derived["sparse_head_tail_l1_[-5,1,1,1]_s1"]

    def test_tie_rule(self):
        head, _ = sparse_head([1.0, -1.0, 1.0], 2)
        assert np.array_equal(head, [1.0, -1.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(x=arrays(float, st.integers(1, 12), elements=finite), data=st.data())
    def test_norm_sp_identities(self, x, data):
        n = x.shape[0]
        s = data.draw(st.integers(1, n))
        assert norm_sp(x, s, math.inf) == np.abs(x).max()
        assert abs(norm_sp(x, n, 1) - np.abs(x).sum()) <= 1e-9 * max(1.0, np.abs(x).sum())
        head, tail = sparse_head(x, s)
        assert np.count_nonzero(head) <= s
        assert abs(np.abs(head).sum() + tail - np.abs(x).sum()) <= 1e-9 * max(1.0, np.abs(x).sum())
