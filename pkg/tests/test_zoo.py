from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mintygym import markov as mk
from mintygym import zoo
from mintygym.errors import InvalidInputError, UnsupportedStructureError

seeds = st.integers(0, 2**31 - 1)


def test_ratio_value_examples():
    game = zoo.minty_counterexample(0.1, 0.5)
    e1 = np.array([1.0, 0.0])
    assert zoo.ratio_value(game, e1, e1) == pytest.approx(-2.0)
    u = np.full(2, 0.5)
    assert zoo.ratio_value(game, u, u) == pytest.approx(-1 / 3)
    same = zoo.RatioGame(np.full((2, 3), 0.4), np.full((2, 3), 0.4))
    rng = np.random.default_rng(0)
    assert zoo.ratio_value(same, rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3))) == pytest.approx(1.0)


def test_ratio_game_validation():
    with pytest.raises(InvalidInputError):
        zoo.RatioGame(np.zeros((2, 2)), np.full((2, 2), 1.5))
    with pytest.raises(InvalidInputError):
        zoo.RatioGame(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        zoo.RatioGame(np.full((2, 2), 2.0), np.ones((2, 2)))
    for bad in [(0.0, 0.5), (0.1, 1.0)]:
        with pytest.raises(InvalidInputError):
            zoo.minty_counterexample(*bad)


def test_minty_counterexample_matrices():
    game = zoo.minty_counterexample(0.1, 0.5)
    np.testing.assert_array_equal(game.R, [[-1, 0.1], [-0.1, 0]])
    np.testing.assert_array_equal(game.S, [[0.5, 0.5], [1, 1]])
    assert game.zeta_bound == 0.5
    rng = np.random.default_rng(1)
    x1 = rng.dirichlet(np.ones(2))
    for _ in range(5):
        assert x1 @ game.S @ rng.dirichlet(np.ones(2)) == pytest.approx(x1 @ [0.5, 1.0])


def test_zero_payoff_operator_vanishes():
    game = zoo.RatioGame(np.zeros((2, 3)), np.full((2, 3), 0.5))
    assert np.all(zoo.ratio_operator(game)(game.space.centroid()) == 0)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_ratio_operator_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    game = zoo.random_ratio_game(3, 4, seed=seed)
    x1, x2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
    F = zoo.ratio_operator(game)(np.concatenate([x1, x2]))
    h = 1e-6
    fd = np.empty(7)
    for k in range(3):
        e = np.eye(3)[k] * h
        fd[k] = (zoo.ratio_value(game, x1 + e, x2) - zoo.ratio_value(game, x1 - e, x2)) / (2 * h)
    for k in range(4):
        e = np.eye(4)[k] * h
        fd[3 + k] = -(zoo.ratio_value(game, x1, x2 + e) - zoo.ratio_value(game, x1, x2 - e)) / (2 * h)
    assert np.max(np.abs(F - fd)) <= 1e-6 * max(np.max(np.abs(fd)), 1.0)


def test_ratio_operator_agrees_with_markov_operator():
    rng = np.random.default_rng(2)
    for g in range(5):
        rg = zoo.random_ratio_game(3, 4, seed=g)
        mg = zoo.ratio_to_markov(rg)
        op = mk.build_operator(mg)
        for _ in range(10):
            x1, x2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(4))
            x = np.concatenate([x1, x2])
            diff = op.eval_F(x) - zoo.ratio_operator(rg)(x)
            # equal up to a constant per block, which the simplex geometry ignores
            blocks = [diff[:3], diff[3:]]
            assert max(np.ptp(b) for b in blocks) <= 1e-8
            shift = zoo.ratio_value(rg, x1, x2) / (x1 @ rg.S @ x2)
            assert blocks[0].mean() == pytest.approx(shift, abs=1e-8)
            assert blocks[1].mean() == pytest.approx(-shift, abs=1e-8)


def test_ratio_embedding_values():
    rng = np.random.default_rng(3)
    rg = zoo.random_ratio_game(4, 5, seed=3)
    mg = zoo.ratio_to_markov(rg)
    assert mg.zeta == rg.zeta_bound and mk.single_controller_of(mg) == 0
    for _ in range(10):
        x1, x2 = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(5))
        res = mk.plan(mg, [x1[None], x2[None]])
        assert res.values[1, 0] == pytest.approx(zoo.ratio_value(rg, x1, x2), abs=1e-10)
        assert res.values[0, 0] == pytest.approx(-res.values[1, 0], abs=1e-12)
    zero = zoo.ratio_to_markov(zoo.RatioGame(np.zeros((2, 2)), np.full((2, 2), 0.3)))
    assert np.all(mk.plan(zero, mk.uniform_profile(zero)).values == 0)


def test_weighted_ratio_problem():
    rg = zoo.random_ratio_game(5, 6, seed=4)
    prob = zoo.ratio_problem(rg, weighted=True)
    x = rg.space.centroid()
    _, A = prob.evaluate(x)
    np.testing.assert_allclose(A[:5], x[:5] @ rg.S[:, 0])
    assert np.all(A[5:] == 1)
    general = zoo.RatioGame(np.zeros((2, 2)), np.array([[0.5, 0.6], [1.0, 1.0]]))
    with pytest.raises(UnsupportedStructureError):
        zoo.ratio_problem(general, weighted=True)


def test_random_ratio_game():
    game = zoo.random_ratio_game(100, 120, seed=7)
    assert game.shape == (100, 120)
    assert np.all(game.S == game.S[:, :1])
    assert np.all((game.R >= 0) & (game.R < 1)) and np.all((game.S > 0) & (game.S <= 1))
    again = zoo.random_ratio_game(100, 120, seed=7)
    np.testing.assert_array_equal(game.R, again.R)
    np.testing.assert_array_equal(game.S, again.S)


# --------------------------------------------------------------------------- Minty search

def test_minty_certificate_for_the_counterexample():
    cert = zoo.minty_violation_search(zoo.minty_counterexample(0.1, 0.5), 101)
    assert cert.valid and cert.worst_violation <= -1e-6
    assert cert.values.shape == (101 * 101,) and cert.witnesses.shape == (101 * 101, 2)
    # spot-check a witness independently
    F = zoo.ratio_operator(zoo.minty_counterexample(0.1, 0.5))
    j = 4321
    (p, q), (a, b) = cert.candidates[j], cert.witnesses[j]
    x = np.array([a, 1 - a, b, 1 - b])
    star = np.array([p, 1 - p, q, 1 - q])
    assert (x - star) @ F(x) == pytest.approx(cert.values[j], abs=1e-12)


def test_monotone_control_has_no_certificate():
    cert = zoo.minty_violation_search(zoo.bilinear_control(), 101)
    assert not cert.valid
    assert [0.5, 0.5] in cert.unviolated().tolist()


def test_finer_grids_only_strengthen_witnesses():
    game = zoo.minty_counterexample(0.1, 0.5)
    coarse = zoo.minty_violation_search(game, 11, refine=False)
    fine = zoo.minty_violation_search(game, 21, refine=False)
    # the 11-grid is a subset of the 21-grid, as candidates and as witnesses
    coarse_map = {tuple(np.round(c, 12)): v for c, v in zip(coarse.candidates, coarse.values)}
    for c, v in zip(fine.candidates, fine.values):
        key = tuple(np.round(c, 12))
        if key in coarse_map:
            assert v <= coarse_map[key] + 1e-15


def test_minty_search_preconditions():
    with pytest.raises(InvalidInputError):
        zoo.minty_violation_search(zoo.minty_counterexample(), 5)
    with pytest.raises(InvalidInputError):
        zoo.minty_violation_search(zoo.random_ratio_game(3, 2, 0), 11)


# --------------------------------------------------------------------------- Markov generators

@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from(["single", "switching"]))
def test_polymatrix_games(seed, mode):
    game = zoo.random_polymatrix_zero_sum(3, 3, (2, 3, 2), 0.3, controller_mode=mode, seed=seed)
    assert np.all(game.rewards.sum(axis=0) == 0)
    assert np.all(np.abs(game.rewards) <= 1)
    np.testing.assert_allclose(game.transitions.sum(axis=2), 0.7, atol=1e-12)
    if mode == "single":
        assert mk.single_controller_of(game) == 0
    assert np.all(game.rho == 1 / 3)


def test_polymatrix_on_a_path_graph():
    game = zoo.random_polymatrix_zero_sum(4, 2, (2, 2, 2, 2), 0.2, edges=[(0, 1), (1, 2), (2, 3)], seed=1)
    assert np.all(game.rewards.sum(axis=0) == 0)
    assert np.all(np.abs(game.rewards) <= 0.5)


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)], [], [(0, 1, 2)]])
def test_polymatrix_rejects_bad_edges(edges):
    with pytest.raises(InvalidInputError):
        zoo.random_polymatrix_zero_sum(3, 2, (2, 2, 2), 0.3, edges=edges)


def test_two_player_zero_sum_single_controller():
    game = zoo.two_player_zero_sum_single_controller(3, (2, 3), 0.25, seed=2)
    assert np.all(game.rewards[0] + game.rewards[1] == 0)
    assert mk.single_controller_of(game) == 0
    rng = np.random.default_rng(2)
    for _ in range(5):
        v = mk.plan(game, mk.random_profile(game, rng)).values
        assert np.max(np.abs(v[0] + v[1])) <= 1e-10


def test_random_battery_respects_size_limits():
    for game in zoo.random_battery(20, seed=1):
        assert game.n <= 3 and game.num_states <= 4 and max(game.action_counts) <= 3
        assert game.zeta >= 0.2
