"""Banded precision algebra against dense oracles and hand-built cases."""
import numpy as np
import pytest
from scipy.linalg import toeplitz

from _oracles import band_to_dense, lower_band_to_dense, partitioned_conditional
from fgnmix import DomainError, NotPositiveDefiniteError, ObservationModel
from fgnmix.ar1fit import Ar1Mixture, default_start, fit_single
from fgnmix.gmrf import (
    KAPPA_DEFAULT,
    ar1_precision,
    assemble_precision,
    band_marginal_variances,
    band_quadform,
    cholesky_banded,
    condition,
    logdet,
    mixture_rotation,
    rotated_z_band,
    sample,
    solve,
    z_block_precision,
)


def mixture_for(H, m, k_max=300):
    return fit_single(H, m, k_max=k_max).mixture


@pytest.fixture(scope="module")
def mix_m4():
    return mixture_for(0.8, 4)


class TestAr1Precision:
    def test_near_zero_phi_is_identity(self):
        band = ar1_precision(1e-12, 4)
        np.testing.assert_allclose(band[0], 1.0, rtol=1e-10)
        np.testing.assert_allclose(band[1], [0, 0, 0, -1e-12], atol=1e-11)

    def test_hand_value_phi_half_n3(self):
        band = ar1_precision(0.5, 3)
        want = np.array([[1.0, -0.5, 0.0], [-0.5, 1.25, -0.5], [0.0, -0.5, 1.0]]) / 0.75
        np.testing.assert_allclose(band_to_dense(band), want, rtol=1e-14)

    def test_inverse_is_ar1_covariance(self):
        phi, n = 0.8, 6
        dense = band_to_dense(ar1_precision(phi, n))
        cov = np.linalg.inv(dense)
        want = toeplitz(phi ** np.arange(n))
        np.testing.assert_allclose(cov, want, atol=1e-10)

    def test_single_point(self):
        band = ar1_precision(0.7, 1)
        assert band[0, 0] == 1.0 and band[1, 0] == 0.0

    def test_domain(self):
        for phi in [0.0, 1.0, -0.3, 1.5]:
            with pytest.raises(DomainError):
                ar1_precision(phi, 5)


class TestAssemble:
    def test_hand_built_m1(self):
        mix = Ar1Mixture(w=np.array([1.0]), phi=np.array([0.5]))
        Q = assemble_precision(mix, sigma=1.0, n=2, kappa=10.0)
        want = np.array(
            [
                [10.0, -10.0, 0.0, 0.0],
                [-10.0, 34.0 / 3.0, 0.0, -2.0 / 3.0],
                [0.0, 0.0, 10.0, -10.0],
                [0.0, -2.0 / 3.0, -10.0, 34.0 / 3.0],
            ]
        )
        np.testing.assert_allclose(band_to_dense(Q.band), want, rtol=1e-14)

    def test_dims_and_bandwidth(self):
        mix = Ar1Mixture.from_params(default_start(3))
        Q = assemble_precision(mix, 1.0, 10)
        assert Q.dim == 40
        assert Q.bandwidth == 4
        # structural zeros outside the band by construction; check the
        # band itself has the expected sparsity inside one period
        assert Q.band.shape == (5, 40)

    def test_marginal_covariance_of_x_block(self, mix_m4):
        # invert the assembled precision densely; the x sub-block must be
        # sigma^2 (mixture covariance + 1/kappa on the diagonal)
        from fgnmix.ar1fit import mixture_acf

        n, sigma, kappa = 50, 1.4, float(np.exp(10))
        Q = assemble_precision(mix_m4, sigma, n, kappa)
        cov = np.linalg.inv(band_to_dense(Q.band))
        xi = Q.x_indices
        got = cov[np.ix_(xi, xi)]
        want = sigma**2 * (toeplitz(mixture_acf(mix_m4, n - 1)) + np.eye(n) / kappa)
        np.testing.assert_allclose(got, want, atol=1e-8)

    def test_validation(self, mix_m4):
        with pytest.raises(DomainError):
            assemble_precision(mix_m4, 1.0, 0)
        with pytest.raises(DomainError):
            assemble_precision(mix_m4, 1.0, 5, kappa=-1.0)
        with pytest.raises(DomainError):
            assemble_precision(mix_m4, 0.0, 5)

    def test_single_time_point(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.0, 1)
        dense = band_to_dense(Q.band)
        cov = np.linalg.inv(dense)
        assert cov[0, 0] == pytest.approx(1.0 + 1.0 / Q.kappa, rel=1e-9)


class TestCholeskyBanded:
    def test_identity_with_declared_bandwidth(self):
        band = np.zeros((4, 12))
        band[0] = 1.0
        ch = cholesky_banded(band)
        np.testing.assert_array_equal(ch.band[0], np.ones(12))
        np.testing.assert_array_equal(ch.band[1:], 0.0)
        assert logdet(ch) == 0.0
        assert ch.flops == 12 * 9

    def test_flop_law_small(self):
        mix = Ar1Mixture.from_params(default_start(3))
        Q = assemble_precision(mix, 1.0, 10)
        assert cholesky_banded(Q).flops == 10 * 4**3

    @pytest.mark.parametrize("n", [10, 100, 1000])
    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    def test_flop_and_memory_laws(self, n, m):
        mix = Ar1Mixture.from_params(default_start(m))
        ch = cholesky_banded(assemble_precision(mix, 1.0, n))
        assert ch.flops == n * (m + 1) ** 3
        assert ch.band.size == n * (m + 1) * (m + 2)

    def test_reconstructs_q(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.2, 100)
        ch = cholesky_banded(Q)
        Ld = lower_band_to_dense(ch.band)
        Qd = band_to_dense(Q.band)
        np.testing.assert_allclose(Ld @ Ld.T, Qd, rtol=1e-10, atol=1e-6)
        assert ch.bandwidth == Q.bandwidth

    def test_logdet_matches_dense(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.0, 100)
        ch = cholesky_banded(Q)
        sign, want = np.linalg.slogdet(band_to_dense(Q.band))
        assert sign > 0
        assert logdet(ch) == pytest.approx(want, rel=1e-9)

    def test_not_positive_definite_reports_index(self):
        band = np.zeros((2, 5))
        band[0] = [1.0, 1.0, -3.0, 1.0, 1.0]
        with pytest.raises(NotPositiveDefiniteError) as err:
            cholesky_banded(band)
        assert err.value.index == 2


class TestSolve:
    def test_identity(self):
        band = np.zeros((3, 8))
        band[0] = 1.0
        ch = cholesky_banded(band)
        rhs = np.arange(8.0)
        np.testing.assert_allclose(solve(ch, rhs), rhs, rtol=1e-15)

    def test_hand_solved_laplacian(self):
        # tridiagonal (2, -1): inverse first column is (6-i)/6
        band = np.zeros((2, 5))
        band[0] = 2.0
        band[1, :4] = -1.0
        ch = cholesky_banded(band)
        e1 = np.zeros(5)
        e1[0] = 1.0
        want = np.array([5, 4, 3, 2, 1]) / 6.0
        np.testing.assert_allclose(solve(ch, e1), want, rtol=1e-13)

    def test_round_trip(self, mix_m4):
        Q = assemble_precision(mix_m4, 0.9, 50)
        ch = cholesky_banded(Q)
        rng = np.random.default_rng(5)
        x = rng.standard_normal(Q.dim)
        rhs = band_to_dense(Q.band) @ x
        np.testing.assert_allclose(solve(ch, rhs), x, rtol=1e-8, atol=1e-8)

    def test_rhs_length_checked(self, mix_m4):
        ch = cholesky_banded(assemble_precision(mix_m4, 1.0, 4))
        with pytest.raises(DomainError):
            solve(ch, np.ones(3))


class TestQuadformAndVariances:
    def test_quadform_matches_dense(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.1, 30)
        rng = np.random.default_rng(2)
        x = rng.standard_normal(Q.dim)
        want = x @ band_to_dense(Q.band) @ x
        assert band_quadform(Q, x) == pytest.approx(want, rel=1e-12)

    def test_marginal_variances_match_dense_inverse(self, mix_m4):
        # moderate kappa: at exp(15) the dense-inverse oracle itself only
        # carries ~1e-7 relative accuracy
        Q = assemble_precision(mix_m4, 1.3, 40, kappa=float(np.exp(8)))
        ch = cholesky_banded(Q)
        got = band_marginal_variances(ch)
        want = np.diag(np.linalg.inv(band_to_dense(Q.band)))
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_marginal_variances_at_default_kappa(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.3, 40)
        ch = cholesky_banded(Q)
        got = band_marginal_variances(ch)
        want = np.diag(np.linalg.inv(band_to_dense(Q.band)))
        np.testing.assert_allclose(got, want, rtol=2e-7, atol=1e-12)


class TestSample:
    def test_identity_returns_raw_normals(self):
        band = np.zeros((2, 6))
        band[0] = 1.0
        ch = cholesky_banded(band)
        got = sample(ch, 123)
        want = np.random.default_rng(123).standard_normal(6)
        np.testing.assert_array_equal(got, want)

    def test_deterministic(self, mix_m4):
        ch = cholesky_banded(assemble_precision(mix_m4, 1.0, 20))
        np.testing.assert_array_equal(sample(ch, 7), sample(ch, 7))

    @pytest.mark.slow
    def test_sample_acf_matches_mixture(self):
        from _oracles import sample_acf
        from fgnmix.ar1fit import mixture_acf

        mix = mixture_for(0.8, 4, k_max=1000)
        n = 500
        Q = assemble_precision(mix, 1.0, n)
        ch = cholesky_banded(Q)
        xi = Q.x_indices
        acc = np.zeros(11)
        n_rep = 2000
        for s in range(n_rep):
            x = sample(ch, s)[xi]
            acc += sample_acf(x, 10, center=False)
        acc /= n_rep
        want = mixture_acf(mix, 10)
        np.testing.assert_allclose(acc[1:], want[1:], atol=0.05)


class TestCondition:
    def test_no_data_prior_sd(self, mix_m4):
        n, sigma = 30, 1.7
        Q = assemble_precision(mix_m4, sigma, n)
        obs = ObservationModel(y=np.zeros(n), d=np.zeros(n))
        res = condition(Q, obs)
        np.testing.assert_allclose(res.mean, 0.0, atol=0)
        want_sd = sigma * np.sqrt(1.0 + 1.0 / KAPPA_DEFAULT)
        np.testing.assert_allclose(res.sd[Q.x_indices], want_sd, rtol=1e-6)

    def test_huge_homogeneous_precision_pins_to_data(self, mix_m4):
        n = 25
        Q = assemble_precision(mix_m4, 1.0, n)
        rng = np.random.default_rng(8)
        y = rng.standard_normal(n)
        res = condition(Q, ObservationModel(y=y, d=np.full(n, 1e12)))
        np.testing.assert_allclose(res.mean[Q.x_indices], y, atol=1e-4)
        assert res.sd[Q.x_indices].max() < 1e-4

    @pytest.mark.parametrize("p", [0, 7])
    def test_matches_dense_partitioned_oracle(self, mix_m4, p):
        from fgnmix.ar1fit import mixture_acf

        n, sigma, kappa = 100, 1.2, float(np.exp(12))
        n_tot = n + p
        Q = assemble_precision(mix_m4, sigma, n_tot, kappa)
        rng = np.random.default_rng(3)
        d = rng.uniform(0.4, 5.0, n)
        d[rng.choice(n, 10, replace=False)] = 0.0
        y = rng.standard_normal(n) * sigma
        obs = ObservationModel(y=y, d=d, p=p)
        res = condition(Q, obs)
        # oracle: dense conditional under the x marginal covariance
        cov = sigma**2 * (
            toeplitz(mixture_acf(mix_m4, n_tot - 1)) + np.eye(n_tot) / kappa
        )
        y_pad = np.concatenate([y, np.zeros(p)])
        d_pad = np.concatenate([d, np.zeros(p)])
        want_mean, want_sd = partitioned_conditional(cov, y_pad, d_pad)
        xi = Q.x_indices
        np.testing.assert_allclose(res.mean[xi], want_mean, atol=1e-7)
        np.testing.assert_allclose(res.sd[xi], want_sd, atol=1e-7)
        assert res.chol.bandwidth == Q.bandwidth

    def test_exact_observations_match_dense_limit(self, mix_m4):
        from fgnmix.ar1fit import mixture_acf

        n, p, sigma, kappa = 40, 6, 0.9, float(np.exp(12))
        n_tot = n + p
        Q = assemble_precision(mix_m4, sigma, n_tot, kappa)
        rng = np.random.default_rng(4)
        y = rng.standard_normal(n) * sigma
        obs = ObservationModel.exact(y, p=p)
        res = condition(Q, obs)
        xi = Q.x_indices
        np.testing.assert_array_equal(res.mean[xi[:n]], y)
        np.testing.assert_array_equal(res.sd[xi[:n]], 0.0)
        assert res.chol.bandwidth <= Q.bandwidth
        cov = sigma**2 * (
            toeplitz(mixture_acf(mix_m4, n_tot - 1)) + np.eye(n_tot) / kappa
        )
        y_pad = np.concatenate([y, np.zeros(p)])
        d_pad = np.concatenate([np.full(n, np.inf), np.zeros(p)])
        want_mean, want_sd = partitioned_conditional(cov, y_pad, d_pad)
        np.testing.assert_allclose(res.mean[xi], want_mean, atol=1e-7)
        np.testing.assert_allclose(res.sd[xi], want_sd, atol=1e-7)

    def test_mixed_exact_and_noisy(self, mix_m4):
        from fgnmix.ar1fit import mixture_acf

        n, kappa = 30, float(np.exp(12))
        Q = assemble_precision(mix_m4, 1.0, n, kappa)
        rng = np.random.default_rng(9)
        y = rng.standard_normal(n)
        d = rng.uniform(1.0, 3.0, n)
        d[::5] = np.inf
        d[1::7] = 0.0
        obs = ObservationModel(y=y, d=d)
        res = condition(Q, obs)
        cov = toeplitz(mixture_acf(mix_m4, n - 1)) + np.eye(n) / kappa
        want_mean, want_sd = partitioned_conditional(cov, y, d)
        xi = Q.x_indices
        np.testing.assert_allclose(res.mean[xi], want_mean, atol=1e-7)
        np.testing.assert_allclose(res.sd[xi], want_sd, atol=1e-7)

    def test_length_mismatch(self, mix_m4):
        Q = assemble_precision(mix_m4, 1.0, 10)
        with pytest.raises(DomainError):
            condition(Q, ObservationModel(y=np.ones(5), d=np.ones(5), p=0))


class TestZBlock:
    def test_is_the_z_subblock_of_the_joint(self, mix_m4):
        n, kappa = 12, float(np.exp(8))
        Q = assemble_precision(mix_m4, 1.0, n, kappa)
        dense = band_to_dense(Q.band)
        zpos = np.sort(np.concatenate([Q.z_indices(j) for j in range(1, 5)]))
        want = dense[np.ix_(zpos, zpos)]
        got = band_to_dense(z_block_precision(mix_m4, n, kappa))
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-9)


class TestRotatedZBlock:
    def test_rotation_is_orthogonal_involution(self, mix_m4):
        rot = mixture_rotation(mix_m4.w)
        np.testing.assert_allclose(rot, rot.T, atol=0)
        np.testing.assert_allclose(rot @ rot, np.eye(4), atol=1e-14)
        np.testing.assert_allclose(rot @ np.sqrt(mix_m4.w),
                                   np.eye(4)[0], atol=1e-15)

    def test_single_component_rotation_is_identity(self):
        np.testing.assert_array_equal(mixture_rotation(np.array([1.0])),
                                      np.eye(1))

    def test_is_congruent_to_plain_z_block(self, mix_m4):
        n, kappa = 9, float(np.exp(8))
        rot = mixture_rotation(mix_m4.w)
        big = np.kron(np.eye(n), rot)
        plain = band_to_dense(z_block_precision(mix_m4, n, kappa))
        got = band_to_dense(rotated_z_band(mix_m4, n, kappa))
        want = big @ plain @ big.T
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-8)

    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_logdet_matches_plain_z_block(self, mix_m4, n):
        kappa = float(np.exp(10))
        ld = logdet(cholesky_banded(rotated_z_band(mix_m4, n, kappa)))
        want = np.linalg.slogdet(
            band_to_dense(z_block_precision(mix_m4, n, kappa)))[1]
        assert ld == pytest.approx(want, rel=1e-12)

    def test_joint_logdet_has_analytic_form(self, mix_m4):
        # Schur complement of x in the joint is exactly the AR(1) block,
        # so |Q| = (kappa/sigma^2)^n * prod_j (1-phi_j^2)^{-(n-1)}
        n, sigma, kappa = 40, 1.7, float(np.exp(12))
        Q = assemble_precision(mix_m4, sigma, n, kappa)
        ld = logdet(cholesky_banded(Q))
        want = n * np.log(kappa / sigma**2) \
            - (n - 1) * np.sum(np.log1p(-mix_m4.phi**2))
        assert ld == pytest.approx(want, abs=1e-7)


@pytest.mark.slow
def test_factorization_scales_linearly(mix_m4):
    import time

    def best_time(n):
        Q = assemble_precision(mix_m4, 1.0, n)
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            cholesky_banded(Q)
            best = min(best, time.perf_counter() - t0)
        return best

    best_time(100_000)  # warm jit and allocator at full size
    t1 = best_time(100_000)
    t2 = best_time(200_000)
    assert t2 / t1 <= 3.0
