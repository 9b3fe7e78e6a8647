import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondiss.linalg import (
    TOL,
    antisymmetrize,
    eig_general,
    expm,
    fro_norm,
    kron,
    spectral_norm,
    unvec,
    vec,
)


def _sorted_complex(vals):
    return sorted(vals, key=lambda z: (round(z.real, 6), round(z.imag, 6)))


class TestAntisymmetrize:
    def test_symmetric_input_gives_zero(self):
        w = np.array([[1.0, 2.0], [2.0, 5.0]])
        assert np.all(antisymmetrize(w) == 0.0)

    def test_definitional_2x2(self):
        w = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(antisymmetrize(w), [[0.0, 1.0], [-1.0, 0.0]])

    def test_random_8x8_is_antisymmetric(self):
        w = np.random.default_rng(3).standard_normal((8, 8))
        m = antisymmetrize(w)
        assert np.abs(m + m.T).max() < TOL.antisym_residual

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            antisymmetrize(np.zeros((2, 3)))

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_property_antisymmetric(self, seed):
        w = np.random.default_rng(seed).standard_normal((6, 6))
        m = antisymmetrize(w)
        assert np.abs(m + m.T).max() < TOL.antisym_residual


class TestEig:
    def test_rotation_generator(self):
        ev = _sorted_complex(eig_general(np.array([[0.0, 1.0], [-1.0, 0.0]])))
        assert abs(ev[0] - (-1j)) < 1e-10 and abs(ev[1] - 1j) < 1e-10

    def test_diagonal(self):
        ev = sorted(eig_general(np.diag([2.0, 3.0])).real)
        assert np.allclose(ev, [2.0, 3.0])

    def test_random_antisymmetric_purely_imaginary(self):
        # property over 100 seeded samples
        for seed in range(100):
            w = np.random.default_rng(seed).standard_normal((12, 12))
            ev = eig_general(antisymmetrize(w))
            assert np.abs(ev.real).max() < 1e-8

    def test_similarity_invariance(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 5))
        p = np.eye(5) + 0.1 * rng.standard_normal((5, 5))
        ev1 = _sorted_complex(eig_general(a))
        ev2 = _sorted_complex(eig_general(p @ a @ np.linalg.inv(p)))
        assert max(abs(x - y) for x, y in zip(ev1, ev2)) < 1e-6

    def test_eig_sum_equals_trace(self):
        a = np.random.default_rng(7).standard_normal((9, 9))
        assert abs(eig_general(a).sum() - np.trace(a)) < 1e-7

    def test_non_finite_rejected(self):
        with pytest.raises(FloatingPointError):
            eig_general(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestKronVec:
    def test_kron_identity(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_vec_identity_holds(self):
        rng = np.random.default_rng(1)
        a, x, b = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
        lhs = vec(a @ x @ b)
        rhs = kron(b.T, a) @ vec(x)
        assert np.linalg.norm(lhs - rhs) < 1e-12

    def test_unvec_round_trip(self):
        x = np.random.default_rng(2).standard_normal((4, 3))
        np.testing.assert_array_equal(unvec(vec(x), 4, 3), x)

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_vec_identity_property(self, seed):
        rng = np.random.default_rng(seed)
        m, k, n = rng.integers(1, 5, size=3)
        a, x, b = rng.standard_normal((m, k)), rng.standard_normal((k, k)), rng.standard_normal((k, n))
        assert np.linalg.norm(vec(a @ x @ b) - kron(b.T, a) @ vec(x)) < 1e-10


class TestExpm:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))

    def test_rotation_quarter_turn(self):
        # e^{t [[0,1],[-1,0]]} = [[cos t, sin t], [-sin t, cos t]]
        out = expm(np.array([[0.0, 1.0], [-1.0, 0.0]]), math.pi / 2)
        assert np.abs(out - np.array([[0.0, 1.0], [-1.0, 0.0]])).max() < 1e-12

    def test_diagonal_decay(self):
        out = expm(np.diag([-1.0]), 1.0)
        assert abs(out[0, 0] - math.exp(-1.0)) < 1e-12

    def test_semigroup_property(self):
        a = np.random.default_rng(4).standard_normal((5, 5)) * 0.5
        lhs = expm(a, 0.7 + 0.4)
        rhs = expm(a, 0.7) @ expm(a, 0.4)
        assert np.abs(lhs - rhs).max() < 1e-7

    def test_relative_accuracy_against_eigendecomposition(self):
        # independent oracle: diagonalizable symmetric matrix
        rng = np.random.default_rng(5)
        s = rng.standard_normal((6, 6))
        a = (s + s.T) / 2.0
        lam, t = np.linalg.eigh(a)
        oracle = t @ np.diag(np.exp(2.0 * lam)) @ t.T
        got = expm(a, 2.0)
        assert np.abs(got - oracle).max() / np.abs(oracle).max() < TOL.expm_relative


class TestNorms:
    def test_identity(self):
        assert spectral_norm(np.eye(4)) == pytest.approx(1.0, abs=1e-8)

    def test_diagonal(self):
        assert spectral_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0, abs=1e-7)

    def test_spectral_le_frobenius(self):
        a = np.random.default_rng(6).standard_normal((10, 10))
        assert spectral_norm(a) <= fro_norm(a) + 1e-9

    def test_against_svd_oracle(self):
        a = np.random.default_rng(8).standard_normal((7, 4))
        assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-6)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0
