import numpy as np
import pytest

from conftest import flat_game, high_interference_game, random_c1_game
from specnash import (
    InvalidInputError,
    NumericFailureError,
    UNBOUNDED,
    WaterfillInput,
    build_game,
    kkt_residual,
    ratio_scenario,
    waterfill,
)
from specnash.equilibrium import (
    best_response,
    brute_force_ne,
    check_allocation_rule,
    classify_equilibrium,
    classify_profile,
    orthogonal_profile,
    solve,
)
from specnash.pareto import rate_array, random_feasible_profile


class TestBestResponse:
    def test_single_user_is_waterfill(self):
        ch = ratio_scenario(1, 8, seed=3, channel_order=3)
        game = build_game(ch)
        p = np.zeros((1, 8))
        br = best_response(0, p, game)
        ref = waterfill(WaterfillInput(
            g=game.gain2[0, 0], i=np.ones(8), Gamma=game.Gamma[0], pmax=game.pmax[0]
        ))
        np.testing.assert_allclose(br, ref)

    def test_symmetric_flat_uniform(self):
        game = flat_game(Q=2, coupling=0.4, N=4)
        p = np.ones((2, 4))
        np.testing.assert_allclose(best_response(0, p, game), np.ones(4), atol=1e-12)

    def test_shifted_price_oracle(self):
        # Opponent loads bin 0 with p = [2, 0]; the interference factors
        # become i = [3, 1] and the response follows the two-bin solve.
        gain2 = np.zeros((2, 2, 2))
        gain2[0, 0] = [4.0, 1.0]
        gain2[1, 1] = [1.0, 1.0]
        gain2[1, 0] = [1.0, 1.0]
        game_np = np.full((2, 2), UNBOUNDED)
        from specnash import NormalizedGame

        game = NormalizedGame(gain2=gain2, pmax=game_np, Gamma=np.ones(2))
        p = np.array([[0.0, 0.0], [2.0, 0.0]])
        br = best_response(0, p, game)
        # mu from budget: clip(mu - 3/4) + clip(mu - 1) = 2 -> mu = 1.875.
        np.testing.assert_allclose(br, [1.125, 0.875])


class TestSolve:
    def test_single_user_one_iteration(self):
        ch = ratio_scenario(1, 8, seed=2, channel_order=3)
        res = solve(build_game(ch), tol=1e-10)
        assert res.converged and res.iterations == 1
        assert res.residual <= 1e-10

    def test_schedules_agree_under_c1(self):
        game, _, _ = random_c1_game(seed=10)
        a = solve(game, "sequential", tol=1e-11)
        b = solve(game, "simultaneous", tol=1e-11)
        assert a.converged and b.converged
        assert np.abs(a.profile.p - b.profile.p).max() <= 1e-8

    def test_trace_monotone_tail(self):
        game, _, _ = random_c1_game(seed=3)
        res = solve(game, tol=1e-10)
        assert res.trace[-1] <= res.trace[0]
        assert res.residual == res.trace[-1]

    def test_nan_iterate_raises(self):
        game = flat_game(Q=2, coupling=0.2, N=2)
        bad = np.full((2, 2), np.nan)
        with pytest.raises((NumericFailureError, InvalidInputError)):
            solve(game, init=bad, tol=1e-8)

    def test_converged_kkt(self):
        game, _, _ = random_c1_game(seed=7, N=2)
        res = solve(game, tol=1e-9)
        for q in range(game.Q):
            i = 1.0 + np.einsum(
                "rk,rk->k", game.gain2[:, q, :], res.profile.p
            ) - game.gain2[q, q] * res.profile.p[q]
            inp = WaterfillInput(g=game.gain2[q, q], i=np.maximum(i, 1.0),
                                 Gamma=game.Gamma[q], pmax=game.pmax[q])
            assert kkt_residual(res.profile.p[q], inp) <= 10 * 1e-9

    def test_multistart_agreement_under_c1(self):
        game, _, _ = random_c1_game(seed=21)
        sols = []
        for s in range(20):
            init = random_feasible_profile(game, np.random.default_rng(s))
            sols.append(solve(game, init=init, tol=1e-11).profile.p)
        for s in sols[1:]:
            assert np.abs(s - sols[0]).max() <= 1e-6

    def test_payoff_consistency(self):
        game, _, _ = random_c1_game(seed=4)
        res = solve(game, tol=1e-11)
        base = rate_array(res.profile.p, game)
        for q in range(game.Q):
            p2 = res.profile.p.copy()
            p2[q] = best_response(q, res.profile.p, game)
            assert abs(rate_array(p2, game)[q] - base[q]) <= 1e-10

    def test_bad_args(self):
        game = flat_game()
        with pytest.raises(InvalidInputError):
            solve(game, tol=0.0)
        with pytest.raises(InvalidInputError):
            solve(game, schedule="chaotic")
        with pytest.raises(InvalidInputError):
            solve(game, init=np.ones((3, 2)))


class TestClassification:
    def test_disjoint_supports(self):
        game = flat_game(Q=2, coupling=0.5, N=4)
        p = np.array([[2.0, 2.0, 0.0, 0.0], [0.0, 0.0, 2.0, 2.0]])
        cls = classify_profile(p, game)
        assert cls.orthogonal
        assert sorted(np.concatenate(cls.exclusive).tolist()) == [0, 1, 2, 3]
        assert cls.shared_carriers == 0
        np.testing.assert_allclose(cls.flatness, 0.0)

    def test_full_support_sharing(self):
        game = flat_game(Q=2, coupling=0.5, N=4)
        cls = classify_profile(np.ones((2, 4)), game)
        assert not cls.orthogonal
        assert cls.shared_carriers == 4

    def test_requires_convergence(self):
        game, _, _ = random_c1_game(seed=2)
        res = solve(game, tol=1e-16, max_iter=1)
        assert not res.converged
        with pytest.raises(InvalidInputError):
            classify_equilibrium(res, game)

    def test_eps_stability_on_constructed_instance(self):
        game = high_interference_game(seed=11)
        res = solve(game, tol=1e-10)
        assert res.converged
        a = classify_profile(res.profile.p, game, eps=1e-6)
        b = classify_profile(res.profile.p, game, eps=2e-6)
        assert a.orthogonal == b.orthogonal


class TestAllocationRule:
    def test_single_user_vacuous(self):
        ch = ratio_scenario(1, 1, seed=0, channel_order=0)
        game = build_game(ch)
        res = solve(game, tol=1e-10)
        rule = check_allocation_rule(res, game)
        assert rule.pairs == {}
        assert rule.violations == []

    def _crafted_game(self):
        # User 1 dominates bin 0 (ratio g11/g22 higher there).
        from specnash import NormalizedGame

        gain2 = np.zeros((2, 2, 2))
        gain2[0, 0] = [8.0, 1.0]
        gain2[1, 1] = [1.0, 4.0]
        gain2[0, 1] = [0.5, 0.5]
        gain2[1, 0] = [0.5, 0.5]
        return NormalizedGame(gain2=gain2, pmax=np.full((2, 2), UNBOUNDED), Gamma=np.ones(2))

    def test_matching_vs_swapped_assignment(self):
        game = self._crafted_game()
        good = orthogonal_profile(game, [[0], [1]])
        rule = check_allocation_rule(good, game)
        assert all(rule.pairs.values())
        swapped = orthogonal_profile(game, [[1], [0]])
        rule2 = check_allocation_rule(swapped, game)
        assert not all(rule2.pairs.values())
        assert rule2.violations

    def test_premise_guard(self):
        from specnash import NormalizedGame

        gain2 = np.zeros((2, 2, 2))
        gain2[0, 0] = [1.0, 1.0]
        gain2[1, 1] = [1.0, 1.0]
        gain2[0, 1] = [5.0, 5.0]  # outgoing cross gain above own direct gain
        gain2[1, 0] = [5.0, 5.0]
        game = NormalizedGame(gain2=gain2, pmax=np.full((2, 2), UNBOUNDED), Gamma=np.ones(2))
        p = np.array([[2.0, 0.0], [0.0, 2.0]])
        with pytest.raises(InvalidInputError):
            check_allocation_rule(p, game)

    def test_non_orthogonal_rejected(self):
        game = flat_game(Q=2, coupling=0.3, N=2)
        with pytest.raises(InvalidInputError):
            check_allocation_rule(np.ones((2, 2)), game)


class TestOrthogonalProfile:
    def test_construction_is_equilibrium_at_high_interference(self):
        game = high_interference_game(seed=11)
        for part in ([[0], [1]], [[1], [0]]):
            p = orthogonal_profile(game, part)
            res = max(np.abs(p[q] - best_response(q, p, game)).max() for q in range(2))
            assert res <= 1e-12
            assert classify_profile(p, game).orthogonal

    def test_disjointness_enforced(self):
        game = flat_game(Q=2, coupling=0.5, N=2)
        with pytest.raises(InvalidInputError):
            orthogonal_profile(game, [[0, 1], [1]])


class TestBruteForce:
    def test_single_user_matches_waterfill(self):
        ch = ratio_scenario(1, 2, seed=1, channel_order=1)
        game = build_game(ch)
        bf = brute_force_ne(game, grid=200)
        assert len(bf.clusters) == 1
        ref = solve(game, tol=1e-11).profile.p
        best = min(np.abs(bf.profiles[i] - ref).max() for i in bf.clusters[0])
        assert best <= 2.0 / 199 + 1e-9

    def test_c1_instance_single_cluster(self):
        game, _, _ = random_c1_game(seed=5)
        bf = brute_force_ne(game, grid=200)
        assert len(bf.clusters) == 1
        ref = solve(game, tol=1e-11).profile.p
        best = min(np.abs(bf.profiles[i] - ref).max() for i in bf.clusters[0])
        assert best <= 2.0 / 199 + 1e-9

    def test_high_interference_permutations(self):
        game = high_interference_game(seed=11)
        bf = brute_force_ne(game, grid=200)
        assert len(bf.clusters) >= 2
        perms = [orthogonal_profile(game, [[0], [1]]), orthogonal_profile(game, [[1], [0]])]
        for target in perms:
            found = any(
                min(np.abs(bf.profiles[i] - target).max() for i in c) <= 2 * 2.0 / 199
                for c in bf.clusters
            )
            assert found

    def test_guards(self):
        game = flat_game(Q=2, coupling=0.5, N=4)
        with pytest.raises(InvalidInputError):
            brute_force_ne(game, grid=64)  # Q*N = 8
        small = flat_game(Q=2, coupling=0.5, N=2)
        with pytest.raises(InvalidInputError):
            brute_force_ne(small, grid=8)
