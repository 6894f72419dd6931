import dataclasses

import numpy as np
import pytest
from scipy.special import erfc

from specnash import InvalidInputError, UNBOUNDED, build_game, ratio_scenario
from specnash.channel import ChannelSet
from specnash.matrix_oracle import (
    circulant_links,
    fourier_matrix,
    gap_rate,
    interference_covariance,
    majorization_leq,
    mmse_receiver,
    mse_sinr,
    mutual_information,
    precoder_feasible,
    precoder_from_profile,
    qam_gap,
    random_feasible_precoder,
    verify_diagonal_optimality,
)
from specnash.pareto import rate_array


def scenario(Q=2, N=4, seed=1, snr_db=8.0, d_ratio=2.0):
    return ratio_scenario(Q, N, d_ratio=d_ratio, snr_db=snr_db, seed=seed,
                          channel_order=N // 2)


def diagonal_precoders(ch, p):
    return np.stack([precoder_from_profile(p[r], ch.P[r], ch.N) for r in range(ch.Q)])


def sinr_via_receiver(q, precoders, links, G):
    """Direct SINR form through an explicit receive filter (test oracle)."""
    N = links.N
    HF = links.H[q, q] @ precoders[q]
    R_noise = interference_covariance(q, precoders, links)
    signal_cov = HF @ HF.conj().T
    out = np.empty(N)
    for k in range(N):
        gk = G[:, k]
        num = abs(gk.conj() @ HF[:, k]) ** 2
        total = gk.conj() @ (signal_cov + R_noise) @ gk
        out[k] = num / (total.real - num)
    return out


class TestMutualInformation:
    def test_scalar_case(self):
        taps = np.array([[[0.8 + 0.3j]]])
        ch = ChannelSet(taps=taps, d=np.array([[1.0]]), gamma=2.0, P=np.array([2.0]),
                        sigma2=np.array([0.5]), pmax_bar=np.array([[UNBOUNDED]]),
                        Gamma=np.array([1.0]), N=1)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.array([[1.0]]))
        ref = np.log2(1.0 + abs(0.8 + 0.3j) ** 2 * 2.0 / 0.5)
        assert mutual_information(0, F, links) == pytest.approx(ref, rel=1e-12)

    def test_identity_two_bins(self):
        # H = I, F = I, sigma2 = 1: (1/2) log2 det(2 I) = 1 bit.
        taps = np.array([[[1.0]]])
        ch = ChannelSet(taps=taps, d=np.array([[1.0]]), gamma=2.0, P=np.array([1.0]),
                        sigma2=np.array([1.0]), pmax_bar=np.full((1, 2), UNBOUNDED),
                        Gamma=np.array([1.0]), N=2)
        links = circulant_links(ch)
        F = np.eye(2, dtype=complex)[None, :, :]
        assert mutual_information(0, F, links) == pytest.approx(1.0, rel=1e-12)

    def test_matches_reduced_game_rate(self, rng):
        ch = scenario(seed=3)
        game = dataclasses.replace(build_game(ch), Gamma=np.ones(2))
        links = circulant_links(ch)
        p = rng.uniform(0.2, 1.5, (2, 4))
        p /= p.mean(axis=1, keepdims=True)
        F = diagonal_precoders(ch, p)
        for q in range(2):
            assert mutual_information(q, F, links) == pytest.approx(
                rate_array(p, game)[q], abs=1e-10
            )


class TestMmseReceiver:
    def test_zero_precoder(self):
        ch = scenario(seed=2)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.ones((2, 4)))
        F[0] = 0.0
        assert np.abs(mmse_receiver(0, F, links)).max() == 0.0

    def test_scalar_wiener(self):
        taps = np.array([[[0.9 - 0.2j]]])
        ch = ChannelSet(taps=taps, d=np.array([[1.0]]), gamma=2.0, P=np.array([1.5]),
                        sigma2=np.array([0.3]), pmax_bar=np.array([[UNBOUNDED]]),
                        Gamma=np.array([1.0]), N=1)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.array([[1.0]]))
        h = complex(taps[0, 0, 0])
        f = complex(F[0][0, 0])
        ref = (h * f) / 0.3 / (1.0 + abs(h * f) ** 2 / 0.3)
        assert mmse_receiver(0, F, links)[0, 0] == pytest.approx(ref, rel=1e-12)

    def test_lossless_on_random_instances(self, rng):
        # verify=True recomputes the mutual information through G and
        # raises beyond 1e-9; exercising it on random precoders is the test.
        for s in range(50):
            ch = scenario(seed=s)
            links = circulant_links(ch)
            F = diagonal_precoders(ch, np.ones((2, 4)))
            F[0] = random_feasible_precoder(np.random.default_rng(s), ch.P[0],
                                            ch.pmax_bar[0], 4)
            mmse_receiver(0, F, links, verify=True)


class TestMseSinr:
    def test_diagonal_matches_reduced_sinr(self, rng):
        ch = scenario(seed=5)
        game = dataclasses.replace(build_game(ch), Gamma=np.ones(2))
        links = circulant_links(ch)
        p = rng.uniform(0.1, 1.8, (2, 4))
        p /= p.mean(axis=1, keepdims=True)
        F = diagonal_precoders(ch, p)
        for q in range(2):
            direct = game.gain2[q, q]
            inter = 1.0 + np.einsum("rk,rk->k", game.gain2[:, q, :], p) - direct * p[q]
            ref = direct * p[q] / inter
            got = np.sort(mse_sinr(q, F, links))
            np.testing.assert_allclose(got, np.sort(ref), atol=1e-10)

    def test_direct_form_identity(self, rng):
        ch = scenario(seed=8)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.ones((2, 4)))
        F[0] = random_feasible_precoder(rng, ch.P[0], ch.pmax_bar[0], 4)
        G = mmse_receiver(0, F, links)
        lhs = sinr_via_receiver(0, F, links, G)
        rhs = mse_sinr(0, F, links)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9, rtol=1e-9)

    def test_zero_power_bin(self):
        ch = scenario(seed=2)
        links = circulant_links(ch)
        p = np.ones((2, 4))
        p[0, 2] = 0.0
        F = diagonal_precoders(ch, p)
        sinr = mse_sinr(0, F, links)
        assert sinr.min() == pytest.approx(0.0, abs=1e-12)


class TestGapRate:
    def test_gamma_one_equals_mutual_information(self):
        ch = scenario(seed=4)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.ones((2, 4)))
        assert gap_rate(0, F, links, 1.0) == pytest.approx(
            mutual_information(0, F, links), abs=1e-10
        )

    def test_large_gap_kills_rate(self):
        ch = scenario(seed=4)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.ones((2, 4)))
        assert gap_rate(0, F, links, 1e9) < 1e-6

    def test_qam_gap_value(self):
        # Numerical inverse-Q oracle by bisection on Q(x) = erfc(x/sqrt2)/2.
        target = 2.5e-4
        lo, hi = 0.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if 0.5 * erfc(mid / np.sqrt(2.0)) > target:
                lo = mid
            else:
                hi = mid
        ref = hi**2 / 3.0
        assert qam_gap(1e-3) == pytest.approx(ref, rel=1e-9)
        assert qam_gap(1e-3) == pytest.approx(4.04, abs=5e-3)

    def test_gap_below_one_rejected(self):
        ch = scenario(seed=4)
        links = circulant_links(ch)
        F = diagonal_precoders(ch, np.ones((2, 4)))
        with pytest.raises(InvalidInputError):
            gap_rate(0, F, links, 0.5)


class TestSampler:
    def test_feasible_with_masks(self, rng):
        pmax_bar = np.array([3.0, 1.0, 5.0, 0.5])
        for s in range(30):
            F = random_feasible_precoder(np.random.default_rng(s), 2.0, pmax_bar, 4)
            assert precoder_feasible(F, 2.0, pmax_bar)

    def test_deterministic_per_seed(self):
        a = random_feasible_precoder(np.random.default_rng(9), 1.0, np.full(4, UNBOUNDED), 4)
        b = random_feasible_precoder(np.random.default_rng(9), 1.0, np.full(4, UNBOUNDED), 4)
        assert a.tobytes() == b.tobytes()

    def test_profile_precoder_feasibility(self):
        ch = scenario(seed=1)
        F = precoder_from_profile(np.ones(4), ch.P[0])
        assert precoder_feasible(F, ch.P[0], ch.pmax_bar[0])


class TestDiagonalOptimality:
    def test_diagonal_samples_never_beat_best_response(self, rng):
        ch = scenario(seed=6)
        game = build_game(ch)
        links = circulant_links(ch)
        from specnash.equilibrium import best_response

        opponents = np.minimum(1.0, game.pmax)
        p_star = best_response(0, opponents, game)
        F = diagonal_precoders(ch, opponents)
        F[0] = precoder_from_profile(p_star, ch.P[0], 4)
        best = mutual_information(0, F, links)
        for s in range(40):
            p_rand = np.random.default_rng(s).uniform(0, 2, 4)
            p_rand = p_rand / p_rand.mean()
            F[0] = precoder_from_profile(p_rand, ch.P[0], 4)
            assert mutual_information(0, F, links) <= best + 1e-9

    def test_random_precoders_mutual_information(self):
        rep = verify_diagonal_optimality(scenario(seed=7), 0, samples=60, seed=0)
        assert rep.violations == 0
        assert rep.max_gap <= 1e-9

    def test_random_precoders_gap_payoff(self):
        rep = verify_diagonal_optimality(
            scenario(seed=7), 0, samples=60, seed=0, payoff="gap", Gamma=3.0
        )
        assert rep.violations == 0

    def test_masked_instance(self):
        ch = ratio_scenario(2, 4, d_ratio=2.0, seed=9, channel_order=2,
                            pmax_bar=np.full((2, 4), 8.0))
        rep = verify_diagonal_optimality(ch, 1, samples=60, seed=3)
        assert rep.violations == 0

    def test_guards(self):
        with pytest.raises(InvalidInputError):
            verify_diagonal_optimality(scenario(seed=1, N=16), 0, samples=60, seed=0)
        with pytest.raises(InvalidInputError):
            verify_diagonal_optimality(scenario(seed=1), 0, samples=10, seed=0)


class TestMajorization:
    def test_examples(self):
        assert majorization_leq([1.0, 1.0], [2.0, 0.0])
        assert majorization_leq([1.0, 2.0], [1.0, 2.0])
        assert not majorization_leq([2.0, 0.0], [1.0, 1.0])
        assert not majorization_leq([1.0, 0.0], [2.0, 0.0])  # unequal totals

    def test_unitary_diagonal_majorized_by_eigenvalues(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            A = A + A.conj().T
            U, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
            d = np.real(np.diag(U.conj().T @ A @ U))
            lam = np.linalg.eigvalsh(A)
            assert majorization_leq(d, lam, tol=1e-10)

    def test_schur_concavity_spot_check(self, rng):
        # The negated gap objective as a function of the MSE diagonal must
        # not decrease when the diagonal spreads out toward the spectrum.
        def f(x, Gamma=3.0):
            return -np.mean(np.log2(1.0 + (1.0 / x - 1.0) / Gamma))

        for s in range(50):
            gen = np.random.default_rng(s)
            n = 4
            B = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
            E = np.linalg.inv(np.eye(n) + B @ B.conj().T)
            d = np.real(np.diag(E))
            lam = np.linalg.eigvalsh(E)
            assert f(d) >= f(lam) - 1e-12


class TestFourier:
    def test_unitary(self):
        W = fourier_matrix(5)
        np.testing.assert_allclose(W @ W.conj().T, np.eye(5), atol=1e-12)

    def test_circulant_diagonalization(self, rng):
        ch = scenario(seed=11)
        links = circulant_links(ch)
        W = fourier_matrix(4)
        D = W.conj().T @ links.H[0, 1] @ W
        off = D - np.diag(np.diag(D))
        assert np.abs(off).max() < 1e-12
