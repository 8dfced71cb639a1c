import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwsim.linalg import (
    cholesky_upper,
    khatri_rao,
    kron,
    nullspace_basis,
    pinv,
    svd,
)


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestSvd:
    def test_identity(self):
        u, s, v = svd(np.eye(3, dtype=complex))
        assert np.allclose(s, 1.0)

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        a = rand_complex(rng, 5)
        b = rand_complex(rng, 4)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        _, s, _ = svd(np.outer(a, b.conj()))
        assert np.isclose(s[0], 1.0)
        assert np.allclose(s[1:], 0.0, atol=1e-12)

    def test_reconstruction_residual(self):
        rng = np.random.default_rng(1)
        a = rand_complex(rng, 8, 4)
        u, s, v = svd(a)
        resid = np.linalg.norm(a - (u * s) @ v.conj().T) / np.linalg.norm(a)
        assert resid <= 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 10), st.integers(2, 10), st.integers(0, 2**32 - 1))
    def test_properties(self, m, n, seed):
        rng = np.random.default_rng(seed)
        a = rand_complex(rng, m, n)
        u, s, v = svd(a)
        assert np.all(s >= 0)
        assert np.all(np.diff(s) <= 0)
        r = min(m, n)
        assert np.linalg.norm(u.conj().T @ u - np.eye(r)) <= 1e-10
        assert np.linalg.norm(v.conj().T @ v - np.eye(r)) <= 1e-10

    def test_rejects_nonfinite(self):
        bad = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(ValueError):
            svd(bad)


class TestCholesky:
    def test_identity(self):
        assert np.allclose(cholesky_upper(np.eye(4, dtype=complex)), np.eye(4))

    def test_diagonal(self):
        d = cholesky_upper(np.diag([4.0, 9.0]).astype(complex))
        assert np.allclose(d, np.diag([2.0, 3.0]))

    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        f = rand_complex(rng, 9, 5)
        c = f.conj().T @ f
        d = cholesky_upper(c)
        assert np.allclose(d, np.triu(d))
        assert np.linalg.norm(d.conj().T @ d - c) / np.linalg.norm(c) <= 1e-10

    def test_not_positive_definite(self):
        with pytest.raises(np.linalg.LinAlgError):
            cholesky_upper(np.diag([1.0, -1.0]).astype(complex))


class TestPinv:
    def test_invertible(self):
        rng = np.random.default_rng(3)
        a = rand_complex(rng, 2, 2) + 2 * np.eye(2)
        assert np.allclose(pinv(a), np.linalg.inv(a))

    def test_zero_matrix(self):
        p = pinv(np.zeros((3, 5), dtype=complex))
        assert p.shape == (5, 3)
        assert np.all(p == 0)

    def test_tall_left_inverse(self):
        rng = np.random.default_rng(4)
        a = rand_complex(rng, 6, 2)
        assert np.linalg.norm(pinv(a) @ a - np.eye(2)) <= 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_penrose_and_involution(self, m, n, seed):
        rng = np.random.default_rng(seed)
        a = rand_complex(rng, m, n)
        p = pinv(a)
        scale = np.linalg.norm(a)
        assert np.linalg.norm(a @ p @ a - a) <= 1e-9 * scale
        assert np.linalg.norm(p @ a @ p - p) <= 1e-9 * np.linalg.norm(p)
        assert np.linalg.norm((a @ p).conj().T - a @ p) <= 1e-9
        assert np.linalg.norm((p @ a).conj().T - p @ a) <= 1e-9
        assert np.linalg.norm(pinv(p) - a) <= 1e-8 * scale


class TestNullspace:
    def test_zero_matrix(self):
        basis = nullspace_basis(np.zeros((4, 4), dtype=complex))
        assert basis.shape == (4, 4)
        assert np.allclose(basis.conj().T @ basis, np.eye(4))

    def test_rank_one(self):
        rng = np.random.default_rng(5)
        u = rand_complex(rng, 4)
        basis = nullspace_basis(np.outer(u, u.conj()))
        assert basis.shape == (4, 3)
        assert np.linalg.norm(basis.conj().T @ u) <= 1e-10 * np.linalg.norm(u)

    def test_rank_two_in_c6(self):
        rng = np.random.default_rng(6)
        a = sum(
            np.outer(v, v.conj())
            for v in (rand_complex(rng, 6), rand_complex(rng, 6))
        )
        basis = nullspace_basis(a)
        assert basis.shape == (6, 4)
        assert np.linalg.norm(a @ basis) <= 1e-8 * np.linalg.norm(a)
        assert np.linalg.norm(basis.conj().T @ basis - np.eye(4)) <= 1e-10


class TestKron:
    def test_identity(self):
        assert np.allclose(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_khatri_rao_single_column(self):
        rng = np.random.default_rng(7)
        a = rand_complex(rng, 3, 1)
        b = rand_complex(rng, 4, 1)
        assert np.allclose(khatri_rao(a, b)[:, 0], np.kron(a[:, 0], b[:, 0]))

    def test_kron_elementwise_oracle(self):
        rng = np.random.default_rng(8)
        a = rand_complex(rng, 2, 2)
        b = rand_complex(rng, 2, 2)
        manual = np.empty((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                manual[2 * i:2 * i + 2, 2 * j:2 * j + 2] = a[i, j] * b
        assert np.allclose(kron(a, b), manual)

    def test_khatri_rao_columns(self):
        rng = np.random.default_rng(9)
        a = rand_complex(rng, 3, 4)
        b = rand_complex(rng, 2, 4)
        kr = khatri_rao(a, b)
        for j in range(4):
            assert np.allclose(kr[:, j], np.kron(a[:, j], b[:, j]))

    def test_khatri_rao_dimension_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 3)), np.ones((2, 4)))
