"""Example games: ratio games, their Markov embeddings and random generators.

Also hosts the grid search that certifies a ratio game violates the Minty
condition at every candidate solution.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .blocks import BlockSpace
from .errors import InvalidInputError, UnsupportedStructureError
from .markov import MarkovGame
from .vi import WeightedVIProblem

# rewards of the polymatrix generator are truncated to this dyadic grid so
# that the pairwise antisymmetric sums cancel exactly in floating point
_DYADIC = 2.0**-30


# --------------------------------------------------------------------------- ratio games

@dataclass(eq=False)
class RatioGame:
    """Value ``x1' R x2 / x1' S x2``; player 1 minimizes it, player 2 maximizes."""

    R: np.ndarray
    S: np.ndarray
    zeta_bound: float = field(init=False)

    def __post_init__(self):
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if self.R.shape != self.S.shape:
            raise InvalidInputError(f"R and S differ in shape: {self.R.shape} vs {self.S.shape}")
        if not (np.all(np.isfinite(self.R)) and np.all(np.isfinite(self.S))):
            raise InvalidInputError("ratio game matrices must be finite")
        if np.any(np.abs(self.R) > 1):
            raise InvalidInputError("R entries must lie in [-1, 1]")
        if np.any(self.S <= 0) or np.any(self.S > 1):
            raise InvalidInputError("S entries must lie in (0, 1]")
        # a bilinear form over simplices attains its minimum at a vertex pair
        self.zeta_bound = float(self.S.min())

    @property
    def shape(self) -> tuple[int, int]:
        return self.R.shape

    @property
    def space(self) -> BlockSpace:
        return BlockSpace(self.R.shape)

    def controller_row(self) -> Optional[np.ndarray]:
        """``s`` with ``S = s 1'`` when the termination depends on player 1 only."""
        if np.all(self.S == self.S[:, :1]):
            return self.S[:, 0].copy()
        return None


def ratio_value(game: RatioGame, x1, x2) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return float(x1 @ game.R @ x2) / float(x1 @ game.S @ x2)


def ratio_gradients(game: RatioGame, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    """Quotient-rule gradients of the value in ``x1`` and in ``x2``."""
    Rx2, Sx2 = game.R @ x2, game.S @ x2
    Rtx1, Stx1 = game.R.T @ x1, game.S.T @ x1
    num, den = float(x1 @ Rx2), float(x1 @ Sx2)
    g1 = (Rx2 * den - Sx2 * num) / den**2
    g2 = (Rtx1 * den - Stx1 * num) / den**2
    return g1, g2


def ratio_operator(game: RatioGame):
    """``F(x) = (grad_x1 V, -grad_x2 V)`` on the flat vector ``(x1, x2)``."""
    m = game.shape[0]

    def F(x):
        x = np.asarray(x, dtype=float)
        g1, g2 = ratio_gradients(game, x[:m], x[m:])
        return np.concatenate([g1, -g2])

    return F


def ratio_problem(game: RatioGame, weighted: bool = False) -> WeightedVIProblem:
    """VI problem of the ratio game; ``weighted`` scales player 1's block by ``x1' s``."""
    space = game.space
    F = ratio_operator(game)
    if not weighted:
        return WeightedVIProblem(space=space, eval_F=F, name="ratio:vanilla")
    s = game.controller_row()
    if s is None:
        raise UnsupportedStructureError("weighted ratio problem needs S with identical columns")
    m, k = game.shape

    def eval_A(x):
        return np.concatenate([np.full(m, float(x[:m] @ s)), np.ones(k)])

    ell = float(s.min())
    return WeightedVIProblem(
        space=space, eval_F=F, eval_A=eval_A, ell=min(ell, 1.0), h=1.0, name="ratio:weighted",
        w_bounds=(1.0, 1.0 / ell),
    )


def minty_counterexample(epsilon: float = 0.1, s: float = 0.5) -> RatioGame:
    if not (0 < epsilon < 1 and 0 < s < 1):
        raise InvalidInputError(f"epsilon and s must lie in (0, 1), got {epsilon}, {s}")
    R = np.array([[-1.0, epsilon], [-epsilon, 0.0]])
    S = np.array([[s, s], [1.0, 1.0]])
    return RatioGame(R, S)


def bilinear_control() -> RatioGame:
    """Matching pennies with constant termination: a monotone bilinear game."""
    return RatioGame(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.ones((2, 2)))


def random_ratio_game(m: int, n_cols: int, seed: int) -> RatioGame:
    """``R`` and ``s`` uniform on (0, 1), ``S = s 1'``."""
    if m < 1 or n_cols < 1:
        raise InvalidInputError("ratio game dimensions must be positive")
    rng = np.random.default_rng(seed)
    R = rng.random((m, n_cols))
    s = 1.0 - rng.random(m)  # in (0, 1]
    return RatioGame(R, np.outer(s, np.ones(n_cols)))


def ratio_to_markov(game: RatioGame) -> MarkovGame:
    """Single-state game: continue with probability ``1 - S[a1, a2]``."""
    m, k = game.shape
    flat_R = game.R.reshape(1, m * k)
    rewards = np.stack([-flat_R, flat_R])
    transitions = (1.0 - game.S).reshape(1, m * k, 1)
    return MarkovGame((m, k), transitions, rewards, np.ones(1), game.zeta_bound, name="ratio")


# --------------------------------------------------------------------------- Minty search

@dataclass
class MintyCertificate:
    grid_resolution: int
    worst_violation: float  # max over candidates of the most negative value found
    candidates: np.ndarray  # (k*k, 2): first coordinates of (x1*, x2*)
    witnesses: np.ndarray  # (k*k, 2): first coordinates of the best x found
    values: np.ndarray  # (k*k,): <x - x*, F(x)> at the witness
    threshold: float = -1e-6

    @property
    def valid(self) -> bool:
        return bool(np.all(self.values <= self.threshold))

    def unviolated(self) -> np.ndarray:
        return self.candidates[self.values > self.threshold]


def _minty_terms(F, a: np.ndarray, b: np.ndarray):
    """Coefficients with ``<x - x*, F(x)> = base - p*c1 - q*c2`` for ``x* = ((p,1-p),(q,1-q))``."""
    base = np.empty(a.size)
    c1 = np.empty(a.size)
    c2 = np.empty(a.size)
    for j, (u, v) in enumerate(zip(a, b)):
        x = np.array([u, 1 - u, v, 1 - v])
        Fx = F(x)
        G = float(x @ Fx)
        base[j] = G - Fx[1] - Fx[3]
        c1[j] = Fx[0] - Fx[1]
        c2[j] = Fx[2] - Fx[3]
    return base, c1, c2


def minty_violation_search(game: RatioGame, k: int = 101, refine: bool = True,
                           threshold: float = -1e-6) -> MintyCertificate:
    """Search, for every ``x*`` on a ``k x k`` grid, for ``x`` with ``<x - x*, F(x)> < 0``.

    Witnesses are first taken from the same grid (exact minimum per
    candidate, computed in blocks), then candidates not yet below
    ``threshold`` are refined with Nelder-Mead over the unit square.
    """
    if game.shape != (2, 2):
        raise InvalidInputError("the Minty search handles 2 x 2 ratio games")
    if k < 11:
        raise InvalidInputError("grid resolution k must be at least 11")
    F = ratio_operator(game)
    grid = np.linspace(0.0, 1.0, k)
    wa, wb = (g.ravel() for g in np.meshgrid(grid, grid, indexing="ij"))
    base, c1, c2 = _minty_terms(F, wa, wb)

    best = np.empty((k, k))
    arg = np.empty((k, k), dtype=np.intp)
    for ip, p in enumerate(grid):
        row = base - p * c1
        vals = row[None, :] - grid[:, None] * c2[None, :]  # (q, witness)
        arg[ip] = np.argmin(vals, axis=1)
        best[ip] = vals[np.arange(k), arg[ip]]
    cand = np.stack([np.repeat(grid, k), np.tile(grid, k)], axis=1)
    values = best.ravel()
    witnesses = np.stack([wa[arg.ravel()], wb[arg.ravel()]], axis=1)

    if refine:
        for j in np.flatnonzero(values > threshold):
            p, q = cand[j]

            def objective(z, p=p, q=q):
                u, v = np.clip(z, 0.0, 1.0)
                x = np.array([u, 1 - u, v, 1 - v])
                xs = np.array([p, 1 - p, q, 1 - q])
                return float((x - xs) @ F(x))

            res = minimize(objective, witnesses[j], method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
            if res.fun < values[j]:
                values[j] = float(res.fun)
                witnesses[j] = np.clip(res.x, 0.0, 1.0)
    return MintyCertificate(k, float(values.max()), cand, witnesses, values, threshold)


# --------------------------------------------------------------------------- Markov generators

def _validate_edges(n: int, edges) -> list[tuple[int, int]]:
    seen = set()
    out = []
    for e in edges:
        if len(e) != 2:
            raise InvalidInputError(f"edge {e!r} is not a pair")
        i, j = int(e[0]), int(e[1])
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise InvalidInputError(f"edge ({i}, {j}) is a self-loop or names a missing player")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InvalidInputError(f"edge ({i}, {j}) appears twice")
        seen.add(key)
        out.append(key)
    if not out:
        raise InvalidInputError("edge list is empty")
    return out


def complete_graph(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def _controlled_transitions(rng, states: int, action_counts, zeta: float, controllers) -> np.ndarray:
    """Rows keyed on ``controllers[s]``'s action, each summing to ``1 - zeta``."""
    J = int(np.prod(action_counts))
    P = np.empty((states, J, states))
    joint = np.array(list(np.ndindex(*action_counts)))
    for s in range(states):
        c = controllers[s]
        rows = rng.dirichlet(np.ones(states), size=action_counts[c]) * (1 - zeta)
        P[s] = rows[joint[:, c]]
    return P


def random_polymatrix_zero_sum(n: int, states: int, action_counts: Sequence[int], zeta: float,
                               edges=None, controller_mode: str = "single", seed: int = 0) -> MarkovGame:
    """Pairwise zero-sum rewards on a graph with controller-driven transitions.

    ``single`` mode lets player 0 drive every transition; ``switching`` mode
    hands state ``s`` to player ``s mod n``.
    """
    if n < 2:
        raise InvalidInputError("polymatrix games need at least two players")
    if not (0 < zeta < 1):
        raise InvalidInputError("zeta must lie in (0, 1)")
    action_counts = tuple(int(a) for a in action_counts)
    if len(action_counts) != n:
        raise InvalidInputError("one action count per player is required")
    edges = _validate_edges(n, complete_graph(n) if edges is None else edges)
    if controller_mode not in ("single", "switching"):
        raise InvalidInputError(f"unknown controller mode {controller_mode!r}")
    rng = np.random.default_rng(seed)
    degree = np.bincount(np.array(edges).ravel(), minlength=n)
    scale = 1.0 / (2 * degree.max())
    J = int(np.prod(action_counts))
    joint = np.array(list(np.ndindex(*action_counts)))
    rewards = np.zeros((n, states, J))
    for i, j in edges:
        block = rng.uniform(-scale, scale, size=(states, action_counts[i], action_counts[j]))
        block = np.trunc(block / _DYADIC) * _DYADIC
        pay = block[:, joint[:, i], joint[:, j]]
        rewards[i] += pay
        rewards[j] -= pay
    controllers = [0] * states if controller_mode == "single" else [s % n for s in range(states)]
    P = _controlled_transitions(rng, states, action_counts, zeta, controllers)
    return MarkovGame(action_counts, P, rewards, np.full(states, 1.0 / states), zeta,
                      name=f"polymatrix-{controller_mode}-{seed}")


def two_player_zero_sum_single_controller(states: int, action_counts: Sequence[int], zeta: float,
                                          seed: int = 0) -> MarkovGame:
    if not (0 < zeta < 1):
        raise InvalidInputError("zeta must lie in (0, 1)")
    action_counts = tuple(int(a) for a in action_counts)
    if len(action_counts) != 2:
        raise InvalidInputError("two action counts are required")
    rng = np.random.default_rng(seed)
    J = action_counts[0] * action_counts[1]
    R2 = rng.uniform(-1.0, 1.0, size=(states, J))
    P = _controlled_transitions(rng, states, action_counts, zeta, [0] * states)
    return MarkovGame(action_counts, P, np.stack([-R2, R2]), np.full(states, 1.0 / states), zeta,
                      name=f"zero-sum-sc-{seed}")


def random_markov_game(n: int, states: int, action_counts: Sequence[int], zeta: float, seed: int = 0,
                       uniform_rho: bool = False) -> MarkovGame:
    """General-sum game whose transitions depend on the full joint action.

    Continuation mass per row is uniform on ``[0, 1 - zeta]``; ``rho`` is a
    random full-support distribution unless ``uniform_rho``.
    """
    action_counts = tuple(int(a) for a in action_counts)
    if len(action_counts) != n:
        raise InvalidInputError("one action count per player is required")
    rng = np.random.default_rng(seed)
    J = int(np.prod(action_counts))
    rewards = rng.uniform(-1.0, 1.0, size=(n, states, J))
    cont = rng.uniform(0.0, 1 - zeta, size=(states, J, 1))
    P = rng.dirichlet(np.ones(states), size=(states, J)) * cont
    rho = np.full(states, 1.0 / states) if uniform_rho else rng.dirichlet(np.full(states, 2.0))
    rho = np.maximum(rho, 1e-3)
    rho /= rho.sum()
    return MarkovGame(action_counts, P, rewards, rho, zeta, name=f"random-{seed}")


def random_battery(count: int, seed: int = 0) -> list[MarkovGame]:
    """Small random games: ``n <= 3``, ``|S| <= 4``, ``|A_i| <= 3``, ``zeta >= 0.2``."""
    rng = np.random.default_rng(seed)
    games = []
    for k in range(count):
        n = int(rng.integers(1, 4))
        S = int(rng.integers(1, 5))
        A = tuple(int(a) for a in rng.integers(1, 4, size=n))
        if max(A) == 1:
            A = (2,) + A[1:]
        zeta = float(rng.uniform(0.2, 0.6))
        games.append(random_markov_game(n, S, A, zeta, seed=int(rng.integers(2**31))))
    return games


def matching_pennies(zeta: float = 0.5) -> MarkovGame:
    """Single state, payoffs +-1 to the row player, continuation ``1 - zeta``."""
    r = np.array([1.0, -1.0, -1.0, 1.0])
    P = np.full((1, 4, 1), 1 - zeta)
    return MarkovGame((2, 2), P, np.stack([r, -r])[:, None, :], np.ones(1), zeta, name="matching-pennies")


def single_state_reference(continuation: float = 0.5, reward: float = 1.0) -> MarkovGame:
    """One player, one action, one state: ``V = dtilde = 1 / (1 - continuation)``."""
    return MarkovGame((1,), np.full((1, 1, 1), continuation), np.full((1, 1, 1), reward), np.ones(1),
                      1 - continuation, name="single-state")
