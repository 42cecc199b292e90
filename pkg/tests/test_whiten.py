import numpy as np
import pytest

from psimf.embed import BasisSpec, EmbeddedTensor, design_matrix, embed_record
from psimf.errors import DegenerateCovariance, DimensionMismatch, NotSymmetric, SingularGram
from psimf.simkit import KernelSpec, MeanSpec, build_covariance_matrix, sample_mgp_subject, zero_kernel
from psimf.whiten import (
    compute_population_gram_and_asymptotic_cov,
    inv_sqrt_psd,
    oracle_embedding_covariance,
    sample_covariance,
    whiten_dataset,
)

RQ = KernelSpec("rational_quadratic", length_scale=1.0)
CONST_BASIS = BasisSpec(q=1, ridge=0.5, functions=[lambda t: np.ones_like(t)])


def tensor_from_rows(rows, m=1):
    rows = np.asarray(rows, dtype=float)
    n, d = rows.shape
    return EmbeddedTensor(rows.reshape(n, m, d // m))


class TestSampleCovariance:
    def test_two_slice_hand_computation(self):
        est = sample_covariance(tensor_from_rows([[1.0, 0.0], [3.0, 0.0]]))
        np.testing.assert_allclose(est.matrix, [[2.0, 0.0], [0.0, 0.0]])
        assert est.eigen_floor_applied

    def test_identical_slices_degenerate(self):
        with pytest.raises(DegenerateCovariance):
            sample_covariance(tensor_from_rows([[1.0, 2.0]] * 5))

    def test_large_sample_identity(self, rng):
        x = rng.standard_normal((50000, 2))
        est = sample_covariance(tensor_from_rows(x))
        gap = np.linalg.norm(est.matrix - np.eye(2), 2)
        assert gap < 0.05

    def test_permutation_invariance(self, rng):
        x = rng.standard_normal((20, 6))
        a = sample_covariance(tensor_from_rows(x, m=2))
        b = sample_covariance(tensor_from_rows(x[rng.permutation(20)], m=2))
        np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-12)

    def test_symmetry_tolerance(self, rng):
        x = rng.standard_normal((40, 4))
        est = sample_covariance(tensor_from_rows(x))
        scale = np.abs(est.matrix).max()
        assert np.abs(est.matrix - est.matrix.T).max() <= 1e-12 * scale


class TestInvSqrt:
    def test_identity(self):
        np.testing.assert_allclose(inv_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-12)

    def test_diagonal(self):
        np.testing.assert_allclose(
            inv_sqrt_psd(np.diag([4.0, 9.0])), np.diag([0.5, 1.0 / 3.0]), atol=1e-12
        )

    def test_defining_property(self, rng):
        a = rng.standard_normal((5, 5))
        psd = a @ a.T + 0.5 * np.eye(5)
        s = inv_sqrt_psd(psd)
        np.testing.assert_allclose(s, s.T, atol=1e-12)
        assert np.linalg.norm(s @ psd @ s - np.eye(5), 2) < 1e-8

    def test_not_symmetric_rejected(self):
        with pytest.raises(NotSymmetric):
            inv_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestWhitening:
    def test_identity_covariance_is_noop(self, rng):
        tensor = tensor_from_rows(rng.standard_normal((6, 4)), m=2)
        est = sample_covariance(tensor)
        est.matrix = np.eye(4)
        est.inv_sqrt = np.eye(4)
        out = whiten_dataset(tensor, est)
        np.testing.assert_array_equal(out.data, tensor.data)

    def test_dimension_mismatch(self, rng):
        t1 = tensor_from_rows(rng.standard_normal((6, 4)), m=2)
        t2 = tensor_from_rows(rng.standard_normal((6, 4)), m=1)
        with pytest.raises(DimensionMismatch):
            whiten_dataset(t2, sample_covariance(t1))

    def test_whitening_fixed_point(self, rng):
        cov = np.array([[2.0, 0.7], [0.7, 1.0]])
        x = rng.multivariate_normal([0, 0], cov, size=5000)
        tensor = tensor_from_rows(x)
        est = sample_covariance(tensor)
        out = whiten_dataset(tensor, est)
        rewhitened = sample_covariance(EmbeddedTensor(out.data))
        assert np.linalg.norm(rewhitened.matrix - np.eye(2), 2) < 0.1


class TestOracleCovariance:
    def test_zero_kernel_zero_noise(self):
        cov = oracle_embedding_covariance(
            zero_kernel(), CONST_BASIS, [np.array([0.1, 0.5])], [0.0]
        )
        np.testing.assert_allclose(cov, 0.0, atol=1e-15)

    def test_constant_basis_noise_only_closed_form(self):
        # D = (r + ridge)^-1 1^T, Sigma = s^2 I -> scalar r s^2 / (r + ridge)^2
        r, s2 = 5, 0.3
        times = [np.linspace(0.1, 0.9, r)]
        cov = oracle_embedding_covariance(zero_kernel(), CONST_BASIS, times, [s2])
        expected = r * s2 / (r + CONST_BASIS.ridge) ** 2
        np.testing.assert_allclose(cov, [[expected]], rtol=1e-12)

    def test_monte_carlo_agreement(self, rng):
        basis = BasisSpec(q=2, rho=0.9, ridge=0.01)
        times = np.sort(rng.uniform(0, 1, 8))
        noise = 0.1
        oracle = oracle_embedding_covariance(RQ, basis, [times], [noise])
        reps = 5000
        draws = np.array(
            [
                embed_record(
                    basis,
                    times,
                    sample_mgp_subject(RQ, MeanSpec.zero(1), 0, [times], [noise], rng)[0],
                )
                for _ in range(reps)
            ]
        )
        emp = np.cov(draws.T)
        tol = 3 * np.abs(oracle).max() * np.sqrt(2.0 / reps) * 4 + 0.01
        np.testing.assert_allclose(emp, oracle, atol=tol)

    def test_mean_part_exposed(self):
        times = [np.array([0.2, 0.8])]
        cov, beta = oracle_embedding_covariance(
            zero_kernel(), CONST_BASIS, times, [0.0],
            mean_per_feature=[np.array([3.0, 3.0])],
        )
        np.testing.assert_allclose(beta, [6.0 / 2.5])


class TestPopulationGram:
    def test_constant_basis_gram(self):
        gram, cov = compute_population_gram_and_asymptotic_cov(
            zero_kernel(), CONST_BASIS, [0.0], quadrature_points=256
        )
        np.testing.assert_allclose(gram, [[1.0]], rtol=1e-6)

    def test_noise_only_constant_basis(self):
        s2 = 0.4
        _, cov = compute_population_gram_and_asymptotic_cov(
            zero_kernel(), CONST_BASIS, [s2], quadrature_points=256
        )
        np.testing.assert_allclose(cov, [[s2]], rtol=1e-6)

    def test_quadrature_refinement(self):
        basis = BasisSpec(q=3, rho=0.99)
        _, c1 = compute_population_gram_and_asymptotic_cov(RQ, basis, [0.1], 256)
        _, c2 = compute_population_gram_and_asymptotic_cov(RQ, basis, [0.1], 512)
        rel = np.abs(c1 - c2).max() / np.abs(c2).max()
        assert rel < 1e-4

    def test_gram_convergence_of_empirical_design(self, rng):
        basis = BasisSpec(q=3, rho=0.99)
        gram, _ = compute_population_gram_and_asymptotic_cov(RQ, basis, [0.0], 1024)
        r = 20000
        phi = design_matrix(basis, rng.uniform(0, 1, r))
        emp = phi @ phi.T / r
        gap = np.linalg.norm(emp - gram, 2) / np.linalg.norm(gram, 2)
        assert gap <= 0.05

    def test_mean_functional(self):
        gram, cov, beta = compute_population_gram_and_asymptotic_cov(
            zero_kernel(), CONST_BASIS, [0.0], 256,
            mean_functions=[lambda t: 2.0 * np.ones_like(t)],
        )
        np.testing.assert_allclose(beta, [2.0], rtol=1e-6)
