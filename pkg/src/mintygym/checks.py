"""Fixed-seed invariant battery behind ``mintygym check``.

Every property reports its worst measured deviation against a tolerance.
``PROPERTY_COUNT`` is the number of lines a full run prints.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import markov as mk
from . import zoo
from .blocks import diameters
from .estimators import RolloutEngine, mc_values
from .vi import (
    SolverConfig, WeightedVIProblem, iteration_budget, path_length_audit, rvu_audit, solve,
    theorem_step_size,
)


@dataclass
class CheckResult:
    name: str
    deviation: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status} {self.name:<32} worst={self.deviation:.3e} tol={self.tolerance:.1e}{extra}"


def _le(name, deviation, tol, detail=""):
    return CheckResult(name, float(deviation), tol, bool(deviation <= tol), detail)


def interior_profile(game, rng):
    # bounded away from the boundary so finite differences stay feasible
    return [0.8 * x + 0.2 / x.shape[1] for x in mk.random_profile(game, rng)]


def fd_gradient(game, profile, step=1e-5):
    """Central differences of ``V_i(rho)`` on the pseudo-policy extension."""
    out = []
    for i, x in enumerate(profile):
        g = np.empty_like(x)
        for s, a in np.ndindex(*x.shape):
            hi = [p.copy() for p in profile]
            lo = [p.copy() for p in profile]
            hi[i][s, a] += step
            lo[i][s, a] -= step
            vhi = mk.plan(game, hi, pseudo=True).values[i] @ game.rho
            vlo = mk.plan(game, lo, pseudo=True).values[i] @ game.rho
            g[s, a] = (vhi - vlo) / (2 * step)
        out.append(g)
    return out


def gradient_relative_error(analytic, numeric) -> float:
    a = np.concatenate([g.ravel() for g in analytic])
    b = np.concatenate([g.ravel() for g in numeric])
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def check_gradient(corrupt_gradient=False):
    rng = np.random.default_rng(101)
    worst = 0.0
    for game in zoo.random_battery(20, seed=1):
        prof = interior_profile(game, rng)
        g = mk.policy_gradient(game, prof)
        if corrupt_gradient:
            g = [gi * 1.01 + 1e-3 for gi in g]
        worst = max(worst, gradient_relative_error(g, fd_gradient(game, prof)))
    return _le("gradient-finite-difference", worst, 1e-4)


def check_value_difference():
    rng = np.random.default_rng(102)
    games = zoo.random_battery(20, seed=1)
    worst = 0.0
    for k in range(50):
        game = games[k % len(games)]
        prof = mk.random_profile(game, rng)
        i = int(rng.integers(game.n))
        alt = rng.dirichlet(np.ones(game.action_counts[i]), size=game.num_states)
        lhs, rhs = mk.value_difference_audit(game, prof, i, alt)
        worst = max(worst, abs(lhs - rhs))
    return _le("value-difference-identity", worst, 1e-8)


def check_bounds():
    rng = np.random.default_rng(103)
    worst = 0.0
    for game in zoo.random_battery(20, seed=2):
        for _ in range(5):
            res = mk.plan(game, mk.random_profile(game, rng))
            z = game.zeta
            worst = max(
                worst,
                np.max(np.abs(res.values)) - 1 / z,
                np.max(game.rho - res.visit_unnormalized),
                np.max(res.visit_unnormalized) - 1 / z,
                abs(res.visit_normalized.sum() - 1),
            )
    return _le("value-and-visitation-bounds", max(worst, 0.0), 1e-12)


def check_controller_visitation():
    rng = np.random.default_rng(104)
    worst = 0.0
    for seed in range(10):
        game = zoo.random_polymatrix_zero_sum(3, 3, (2, 2, 2), 0.3, seed=seed)
        c = mk.single_controller_of(game)
        prof = mk.random_profile(game, rng)
        full = mk.plan(game, prof).visit_unnormalized
        alone = mk.controller_visitation(game, c, prof[c])
        worst = max(worst, float(np.max(np.abs(full - alone))))
    return _le("single-controller-visitation", worst, 1e-12)


def enumerate_best_value(game, profile, i) -> float:
    S, A = game.num_states, game.action_counts[i]
    best = -np.inf
    for actions in itertools.product(range(A), repeat=S):
        dev = list(profile)
        pol = np.zeros((S, A))
        pol[np.arange(S), actions] = 1.0
        dev[i] = pol
        best = max(best, float(mk.plan(game, dev).values[i] @ game.rho))
    return best


def check_best_response():
    rng = np.random.default_rng(105)
    worst = 0.0
    for seed in range(10):
        game = zoo.random_markov_game(2, 3, (2, 2), 0.25, seed=seed)
        prof = mk.random_profile(game, rng)
        for i in range(game.n):
            br = mk.best_response(game, i, profile=prof)
            worst = max(worst, abs(br.value - enumerate_best_value(game, prof, i)))
    return _le("best-response-enumeration", worst, 1e-8)


def check_gradient_dominance():
    rng = np.random.default_rng(106)
    worst = -np.inf
    for seed in range(20):
        game = zoo.two_player_zero_sum_single_controller(3, (2, 3), 0.3, seed=seed)
        prof = mk.random_profile(game, rng)
        for i in range(game.n):
            gd = mk.gradient_dominance_bound(game, prof, i)
            worst = max(worst, gd.value_gap - gd.coefficient_bound * gd.linear_gap)
    return _le("gradient-dominance", max(worst, 0.0), 1e-10)


def check_smoothness():
    worst = -np.inf
    for seed in range(5):
        game = zoo.random_markov_game(2, 3, (2, 2), 0.5, seed=seed)
        worst = max(worst, mk.smoothness_probe(game, 40, seed=seed) - mk.smoothness_bound(game))
    return _le("smoothness-bound", max(worst, 0.0), 0.0)


def check_monte_carlo():
    game = zoo.random_markov_game(2, 3, (2, 2), 0.3, seed=7)
    prof = mk.random_profile(game, np.random.default_rng(107))
    exact = mk.plan(game, prof).values @ game.rho
    est = mc_values(RolloutEngine(game, seed=7), prof, 10**5)
    z = np.abs(est.values - exact) / est.standard_errors
    return _le("monte-carlo-values", float(z.max()), 3.0, "(in standard errors)")


def _theorem_run(seed: int):
    game = zoo.two_player_zero_sum_single_controller(3, (2, 2), 0.25, seed=seed)
    problem = mk.build_operator(game, "weighted")
    c = mk.theorem_constants(game)
    eta = theorem_step_size(c.ell, c.h, c.L, c.B_F, c.alpha, c.d)
    T = iteration_budget(np.sqrt(c.D_X2), c.h, c.ell, 0.5)
    return game, problem, c, eta, solve(problem, SolverConfig(eta=eta, T=T))


def _audit_run():
    game = zoo.random_polymatrix_zero_sum(3, 3, (2, 2, 2), 0.3, seed=11)
    problem = mk.build_operator(game, "weighted")
    return problem, 0.05, solve(problem, SolverConfig(eta=0.05, T=400))


def check_rvu():
    problem, eta, rep = _audit_run()
    d_zr, _ = diameters(problem.space)
    worst = rep.ledger.rvu_violation()
    for r in range(problem.space.d):
        for _, lhs, rhs in rvu_audit(rep, r, eta, d_zr[r]):
            worst = max(worst, lhs - rhs)
    return _le("rvu-audit", max(worst, 0.0), 1e-9)


def check_br_gap():
    problem, eta, rep = _audit_run()
    d_zr, _ = diameters(problem.space)
    return _le("best-response-gap-bound", max(rep.ledger.br_violation(eta, d_zr), 0.0), 1e-9)


def check_path_length():
    worst = -np.inf
    for seed in range(3):
        _, _, c, _, rep = _theorem_run(seed)
        total, bound, _ = path_length_audit(rep, np.sqrt(c.D_X2), c.h, c.ell)
        worst = max(worst, total - bound)
    return _le("path-length-bound", max(worst, 0.0), 0.0)


def ratio_cross_points(n_games=5, n_points=10, seed=108):
    rng = np.random.default_rng(seed)
    for g in range(n_games):
        rg = zoo.random_ratio_game(3 + g % 2, 4, seed=g)
        m, k = rg.shape
        for _ in range(n_points):
            yield rg, rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(k))


def check_ratio_value():
    worst = 0.0
    for rg, x1, x2 in ratio_cross_points():
        mg = zoo.ratio_to_markov(rg)
        v = mk.plan(mg, [x1[None], x2[None]]).values[1, 0]
        worst = max(worst, abs(v - zoo.ratio_value(rg, x1, x2)))
    return _le("ratio-value-embedding", worst, 1e-10)


def check_ratio_operator():
    worst = 0.0
    for rg, x1, x2 in ratio_cross_points():
        mg = zoo.ratio_to_markov(rg)
        x = np.concatenate([x1, x2])
        F_markov = mk.build_operator(mg).eval_F(x)
        F_ratio = zoo.ratio_operator(rg)(x)
        # the multilinear extension adds V / den along each block's all-ones direction
        shift = zoo.ratio_value(rg, x1, x2) / float(x1 @ rg.S @ x2)
        m = rg.shape[0]
        expected = F_ratio + np.concatenate([np.full(m, shift), np.full(x.size - m, -shift)])
        worst = max(worst, float(np.max(np.abs(F_markov - expected))))
    return _le("ratio-operator-embedding", worst, 1e-8)


def check_minty():
    cert = zoo.minty_violation_search(zoo.minty_counterexample(0.1, 0.5), 101)
    control = zoo.minty_violation_search(zoo.bilinear_control(), 101)
    ok = cert.valid and not control.valid
    return CheckResult("minty-certificate", cert.worst_violation, cert.threshold, ok,
                       f"control valid={control.valid}")


def check_reduction():
    game = zoo.random_polymatrix_zero_sum(3, 2, (2, 2, 2), 0.3, seed=3)
    vanilla = mk.build_operator(game)
    ones = WeightedVIProblem(space=vanilla.space, eval_F=vanilla.eval_F,
                             eval_A=lambda x: np.ones(x.size))
    cfg = SolverConfig(eta=0.05, T=200)
    a, b = solve(vanilla, cfg), solve(ones, cfg)
    worst = max(float(np.max(np.abs(ra.x - rb.x))) for ra, rb in zip(a.records, b.records))
    return _le("unit-weight-reduction", worst, 1e-12)


CHECKS = (
    check_gradient,
    check_value_difference,
    check_bounds,
    check_controller_visitation,
    check_best_response,
    check_gradient_dominance,
    check_smoothness,
    check_monte_carlo,
    check_rvu,
    check_br_gap,
    check_path_length,
    check_ratio_value,
    check_ratio_operator,
    check_minty,
    check_reduction,
)
PROPERTY_COUNT = len(CHECKS)


def run_checks(corrupt_gradient: bool = False, threads: int | None = None) -> list[CheckResult]:
    """Run every property; results come back in ``CHECKS`` order."""

    def one(fn):
        if fn is check_gradient:
            return fn(corrupt_gradient=corrupt_gradient)
        try:
            return fn()
        except Exception as exc:  # a crashing property is a failing property
            return CheckResult(fn.__name__.removeprefix("check_"), float("inf"), 0.0, False, repr(exc))

    if threads is None:
        threads = max(1, int(os.environ.get("MINTYGYM_THREADS", "1") or 1))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, CHECKS))
    return [one(fn) for fn in CHECKS]
