import numpy as np
import pytest

from maxpem.kernels import (DC2, TC, HyperParams, assemble_kernel,
                            dc2_kernel, in_box, tc_kernel)


def _eta_tc(lam_b=1.0, lam_c=1.0, bb=0.5, bc=0.5):
    return HyperParams(kind=TC, lambda_b=lam_b, lambda_c=lam_c,
                       beta_b=bb, beta_c=bc)


class TestTcKernel:
    def test_direct_values(self):
        np.testing.assert_allclose(tc_kernel(0.5, 2),
                                   [[0.5, 0.25], [0.25, 0.25]])

    def test_scalar_case(self):
        np.testing.assert_allclose(tc_kernel(0.3, 1), [[0.3]])

    def test_positive_definite(self):
        K = tc_kernel(0.9, 50)
        assert np.min(np.linalg.eigvalsh(K)) > 0

    def test_exact_symmetry(self):
        K = tc_kernel(0.73, 30)
        assert np.array_equal(K, K.T)

    def test_diagonal_decreasing(self):
        d = np.diag(tc_kernel(0.8, 20))
        assert np.all(np.diff(d) < 0)

    def test_rejects_bad_beta(self):
        for beta in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                tc_kernel(beta, 3)


class TestDc2Kernel:
    def test_collapses_to_tc_at_alpha_zero(self):
        for beta in (0.2, 0.5, 0.9):
            np.testing.assert_array_equal(dc2_kernel(beta, 0.0, 10),
                                          tc_kernel(beta, 10))

    def test_scalar_hand_value(self):
        # beta=0.5, alpha=0.5, T=1:
        # 0.5*(1 - 0.5*0.5) - 0.25*0.25 = 0.3125
        K = dc2_kernel(0.5, 0.5, 1)
        np.testing.assert_allclose(K, [[0.3125]])

    def test_near_positive_semidefinite(self):
        K = dc2_kernel(0.8, 0.7, 50)
        w = np.linalg.eigvalsh(K)
        assert w.min() >= -1e-10 * w.max()

    def test_psd_over_grid(self):
        for beta in np.arange(0.1, 1.0, 0.1):
            for alpha in np.arange(0.1, 1.0, 0.1):
                w = np.linalg.eigvalsh(dc2_kernel(beta, alpha, 25))
                assert w.min() >= -1e-10 * w.max(), (beta, alpha)

    def test_exact_symmetry(self):
        K = dc2_kernel(0.6, 0.4, 30)
        assert np.array_equal(K, K.T)

    def test_diagonal_decreasing(self):
        d = np.diag(dc2_kernel(0.9, 0.5, 20))
        assert np.all(np.diff(d) < 0)


class TestHyperParams:
    def test_dc2_requires_alphas(self):
        with pytest.raises(ValueError):
            HyperParams(kind=DC2, lambda_b=1, lambda_c=1,
                        beta_b=0.5, beta_c=0.5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            _eta_tc(bb=1.5)
        with pytest.raises(ValueError):
            _eta_tc(lam_b=-1.0)

    def test_in_box(self):
        assert in_box(_eta_tc())
        assert not in_box(_eta_tc(lam_b=1e9))


class TestKernelMatrix:
    def test_scalar_blocks(self):
        kern = assemble_kernel(_eta_tc(), 1)
        np.testing.assert_allclose(kern.K, np.diag([0.5, 0.5]))
        np.testing.assert_allclose(kern.logdet, 2 * np.log(0.5))

    def test_scale_linearity(self):
        k1 = assemble_kernel(_eta_tc(lam_b=1.0), 5)
        k2 = assemble_kernel(_eta_tc(lam_b=2.0), 5)
        np.testing.assert_allclose(k2.K[:5, :5], 2.0 * k1.K[:5, :5])
        np.testing.assert_allclose(k2.K[5:, 5:], k1.K[5:, 5:])

    def test_chol_reconstructs(self):
        kern = assemble_kernel(_eta_tc(bb=0.8, bc=0.3), 10)
        np.testing.assert_allclose(kern.chol @ kern.chol.T, kern.K,
                                   rtol=1e-10, atol=1e-12)

    def test_logdet_against_dense_lu(self):
        kern = assemble_kernel(_eta_tc(lam_b=2.0, bb=0.7, bc=0.4), 4)
        sign, logdet = np.linalg.slogdet(kern.K)
        assert sign > 0
        np.testing.assert_allclose(kern.logdet, logdet, atol=1e-9)

    def test_quad_form_zero(self):
        kern = assemble_kernel(_eta_tc(), 3)
        assert kern.quad_form(np.zeros(6)) == 0.0

    def test_quad_form_matches_explicit_inverse(self):
        rng = np.random.default_rng(0)
        kern = assemble_kernel(_eta_tc(lam_b=0.7, bb=0.6, bc=0.8), 6)
        theta = rng.normal(size=12)
        expected = theta @ np.linalg.inv(kern.K) @ theta
        np.testing.assert_allclose(kern.quad_form(theta), expected,
                                   rtol=1e-9)

    def test_quad_form_dimension_mismatch(self):
        kern = assemble_kernel(_eta_tc(), 3)
        with pytest.raises(ValueError):
            kern.quad_form(np.zeros(5))
