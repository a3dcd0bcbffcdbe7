"""Exact planning for tabular multi-player Markov games with termination.

Conventions used throughout:

* joint actions are flattened in mixed radix, player 0 most significant
  (``numpy.ravel_multi_index`` order);
* a policy profile is a list with one ``(S, |A_i|)`` array per player;
* flat strategy vectors list players in order and, within a player, states in
  order, so block ``(i, s)`` has index ``i * S + s``;
* players are indexed from 0.

Every quantity is obtained by dense linear solves; the termination margin
``zeta`` keeps ``I - P_pi`` well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .blocks import BlockSpace
from .errors import InvalidInputError, NumericalFailureError, UnsupportedStructureError
from .vi import WeightedVIProblem

MAX_TABLE_ENTRIES = 10**6
PSEUDO_EXTENSION = 0.1
PROFILE_TOL = 1e-9

Profile = Sequence[np.ndarray]


@dataclass(eq=False)
class MarkovGame:
    """``n``-player game: ``transitions[s, a, s']``, ``rewards[i, s, a]``.

    Row sums of ``transitions`` may not exceed ``1 - zeta``; the missing mass
    is the probability of terminating. ``require_full_support`` can be turned
    off for planning-only uses where ``rho`` is a point mass.
    """

    action_counts: tuple[int, ...]
    transitions: np.ndarray
    rewards: np.ndarray
    rho: np.ndarray
    zeta: float
    require_full_support: bool = True
    name: str = ""
    space: BlockSpace = field(init=False, repr=False)

    def __post_init__(self):
        self.action_counts = tuple(int(a) for a in self.action_counts)
        if len(self.action_counts) < 1 or any(a < 1 for a in self.action_counts):
            raise InvalidInputError(f"action counts must be positive, got {self.action_counts}")
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        self.zeta = float(self.zeta)
        n, J = self.n, self.num_joint
        if self.transitions.ndim != 3 or self.transitions.shape[1] != J or self.transitions.shape[0] != self.transitions.shape[2]:
            raise InvalidInputError(
                f"transitions must have shape (S, {J}, S), got {self.transitions.shape}"
            )
        S = self.num_states
        if S * J > MAX_TABLE_ENTRIES:
            raise InvalidInputError(f"|S| * prod|A_i| = {S * J} exceeds the cap {MAX_TABLE_ENTRIES}")
        if self.rewards.shape != (n, S, J):
            raise InvalidInputError(f"rewards must have shape ({n}, {S}, {J}), got {self.rewards.shape}")
        if self.rho.shape != (S,):
            raise InvalidInputError(f"rho must have shape ({S},), got {self.rho.shape}")
        for name, arr in (("transitions", self.transitions), ("rewards", self.rewards), ("rho", self.rho)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite entries")
        if not (0 < self.zeta <= 1):
            raise InvalidInputError(f"termination margin must satisfy 0 < zeta <= 1, got {self.zeta}")
        if np.any(self.transitions < 0):
            raise InvalidInputError("transition probabilities must be nonnegative")
        row = self.transitions.sum(axis=2)
        worst = float(row.max())
        if worst > 1 - self.zeta + 1e-12:
            s, a = np.unravel_index(int(row.argmax()), row.shape)
            raise InvalidInputError(
                f"transition row (state {s}, joint action {a}) sums to {worst!r}; "
                f"requires sum <= 1 - zeta with zeta = {self.zeta} > 0"
            )
        if np.any(np.abs(self.rewards) > 1):
            raise InvalidInputError("rewards must lie in [-1, 1]")
        if np.any(self.rho < 0) or abs(self.rho.sum() - 1) > 1e-9:
            raise InvalidInputError("rho must be a probability distribution")
        if self.require_full_support and np.any(self.rho <= 0):
            raise InvalidInputError("rho must have full support")
        self.space = BlockSpace(tuple(a for a in self.action_counts for _ in range(S)))

    @property
    def n(self) -> int:
        return len(self.action_counts)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_joint(self) -> int:
        return int(np.prod(self.action_counts))

    @property
    def joint_shape(self) -> tuple[int, ...]:
        return self.action_counts

    def split_axes(self, i: int) -> tuple[int, int, int]:
        """``(pre, |A_i|, post)`` so a joint axis reshapes to isolate player ``i``."""
        pre = int(np.prod(self.action_counts[:i]))
        post = int(np.prod(self.action_counts[i + 1:]))
        return pre, self.action_counts[i], post

    def player_slice(self, i: int) -> slice:
        S = self.num_states
        start = S * sum(self.action_counts[:i])
        return slice(start, start + S * self.action_counts[i])


# --------------------------------------------------------------------------- profiles

def uniform_profile(game: MarkovGame) -> list[np.ndarray]:
    S = game.num_states
    return [np.full((S, a), 1.0 / a) for a in game.action_counts]


def random_profile(game: MarkovGame, rng: np.random.Generator) -> list[np.ndarray]:
    S = game.num_states
    return [rng.dirichlet(np.ones(a), size=S) for a in game.action_counts]


def profile_to_vector(game: MarkovGame, profile: Profile) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float).ravel() for x in profile])


def vector_to_profile(game: MarkovGame, x: np.ndarray) -> list[np.ndarray]:
    x = np.asarray(x, dtype=float)
    S = game.num_states
    return [x[game.player_slice(i)].reshape(S, a) for i, a in enumerate(game.action_counts)]


def check_profile(game: MarkovGame, profile: Profile, pseudo: bool = False) -> list[np.ndarray]:
    if len(profile) != game.n:
        raise InvalidInputError(f"profile has {len(profile)} players, game has {game.n}")
    out = []
    for i, x in enumerate(profile):
        x = np.asarray(x, dtype=float)
        if x.shape != (game.num_states, game.action_counts[i]):
            raise InvalidInputError(
                f"player {i} policy has shape {x.shape}, expected {(game.num_states, game.action_counts[i])}"
            )
        if not np.all(np.isfinite(x)) or np.any(x < -PROFILE_TOL):
            raise InvalidInputError(f"player {i} policy has negative or non-finite entries")
        sums = x.sum(axis=1)
        if pseudo:
            if np.any(sums > 1 + PSEUDO_EXTENSION + PROFILE_TOL):
                raise InvalidInputError(f"player {i} pseudo-policy rows exceed 1 + {PSEUDO_EXTENSION}")
        elif np.any(np.abs(sums - 1) > PROFILE_TOL):
            raise InvalidInputError(f"player {i} policy rows do not sum to 1")
        out.append(x)
    return out


def joint_distribution(profile: Profile) -> np.ndarray:
    """Per-state product distribution over joint actions, shape ``(S, J)``."""
    joint = np.asarray(profile[0], dtype=float)
    for x in profile[1:]:
        x = np.asarray(x, dtype=float)
        joint = (joint[:, :, None] * x[:, None, :]).reshape(joint.shape[0], -1)
    return joint


def _opponent_weights(game: MarkovGame, profile: Profile, i: int) -> np.ndarray:
    """Joint weights with player ``i``'s factor replaced by ones."""
    others = list(profile)
    others[i] = np.ones((game.num_states, game.action_counts[i]))
    return joint_distribution(others)


def _contract_to_player(game: MarkovGame, table: np.ndarray, i: int) -> np.ndarray:
    """Sum a ``(S, J, ...)`` table over every joint axis except player ``i``'s."""
    pre, a, post = game.split_axes(i)
    S = table.shape[0]
    rest = table.shape[2:]
    return table.reshape((S, pre, a, post) + rest).sum(axis=(1, 3))


# --------------------------------------------------------------------------- planning

@dataclass
class PlanningResult:
    values: np.ndarray  # (n, S)
    q_values: np.ndarray  # (n, S, J)
    visit_unnormalized: np.ndarray  # (S,)
    visit_normalized: np.ndarray  # (S,)
    joint: np.ndarray  # (S, J)
    transition_matrix: np.ndarray  # (S, S) under the joint policy

    def value_at(self, rho: np.ndarray) -> np.ndarray:
        return self.values @ rho


def _solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        out = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"singular planning system: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalFailureError("planning system produced non-finite values")
    return out


def plan_joint(game: MarkovGame, joint: np.ndarray, check_radius: bool = False) -> PlanningResult:
    """Plan under a per-state joint action distribution ``joint[s, a]``."""
    S = game.num_states
    P_pi = np.einsum("sa,sat->st", joint, game.transitions)
    if check_radius:
        radius = float(np.max(np.abs(np.linalg.eigvals(P_pi)))) if S else 0.0
        if radius >= 1:
            raise InvalidInputError(f"pseudo-policy continuation has spectral radius {radius} >= 1")
    r_pi = np.einsum("sa,isa->is", joint, game.rewards)
    M = np.eye(S) - P_pi
    values = _solve(M, r_pi.T).T
    q = game.rewards + np.einsum("sat,it->isa", game.transitions, values)
    visit = _solve(M.T, game.rho)
    total = visit.sum()
    return PlanningResult(values, q, visit, visit / total, joint, P_pi)


def plan(game: MarkovGame, profile: Profile, pseudo: bool = False) -> PlanningResult:
    """Values, Q-functions and visitation of a (pseudo-)policy profile.

    With ``pseudo=True`` rows may sum up to ``1 + 0.1`` and the planner
    evaluates the multilinear extension of the value, rejecting profiles whose
    continuation matrix has spectral radius ``>= 1``.
    """
    profile = check_profile(game, profile, pseudo=pseudo)
    return plan_joint(game, joint_distribution(profile), check_radius=pseudo)


def expected_q(game: MarkovGame, profile: Profile, planned: PlanningResult, i: int) -> np.ndarray:
    """``E_{a_-i ~ pi_-i(.|s)} Q_i(s, a_i, a_-i)``, shape ``(S, |A_i|)``."""
    weights = _opponent_weights(game, profile, i)
    return _contract_to_player(game, planned.q_values[i] * weights, i)


def policy_gradient(game: MarkovGame, profile: Profile, planned: Optional[PlanningResult] = None,
                    pseudo: bool = False) -> list[np.ndarray]:
    """Gradient of ``V_i(rho)`` in player ``i``'s own strategy, for every ``i``.

    ``dV_i / dx_{i,s}[a] = dtilde[s] * E_{a_-i}[Q_i(s, a, a_-i)]``.
    """
    if planned is None:
        planned = plan(game, profile, pseudo=pseudo)
    d = planned.visit_unnormalized[:, None]
    return [d * expected_q(game, profile, planned, i) for i in range(game.n)]


def value_difference_audit(game: MarkovGame, profile: Profile, i: int, alt_policy_i) -> tuple[float, float]:
    """Both sides of the value-difference identity for a unilateral deviation."""
    profile = check_profile(game, profile)
    alt = list(profile)
    alt[i] = np.asarray(alt_policy_i, dtype=float)
    alt = check_profile(game, alt)
    base = plan(game, profile)
    dev = plan(game, alt)
    lhs = float(dev.values[i] @ game.rho - base.values[i] @ game.rho)
    eq = expected_q(game, profile, base, i)
    rhs = float(np.sum(dev.visit_unnormalized[:, None] * (alt[i] - profile[i]) * eq))
    return lhs, rhs


# --------------------------------------------------------------------------- best responses

@dataclass
class BestResponse:
    policy: np.ndarray  # (S, |A_i|) deterministic
    value: float  # V_i^dagger(rho)
    state_values: np.ndarray  # (S,)
    sweeps: int


def _induced_mdp(game: MarkovGame, weights: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Rewards ``(S, A_i)`` and transitions ``(S, A_i, S)`` faced by player ``i``."""
    r = _contract_to_player(game, game.rewards[i] * weights, i)
    P = _contract_to_player(game, game.transitions * weights[:, :, None], i)
    return r, P


def _evaluate_deterministic(r, P, actions, rho):
    S = r.shape[0]
    idx = np.arange(S)
    M = np.eye(S) - P[idx, actions]
    v = _solve(M, r[idx, actions])
    return v


def _greedy(q: np.ndarray) -> np.ndarray:
    # lowest index among (numerically) tied maxima
    top = q.max(axis=1, keepdims=True)
    tol = 1e-12 * np.maximum(1.0, np.abs(top))
    return np.argmax(q >= top - tol, axis=1)


def _solve_mdp(game: MarkovGame, r: np.ndarray, P: np.ndarray) -> BestResponse:
    S, A = r.shape
    eps = 1e-10 * game.zeta
    v = np.zeros(S)
    sweeps = 0
    max_sweeps = int(math.ceil(math.log(eps * game.zeta / 2) / math.log(1 - game.zeta))) + 10 if game.zeta < 1 else 2
    while True:
        q = r + P @ v
        v_new = q.max(axis=1)
        sweeps += 1
        if np.max(np.abs(v_new - v)) <= eps or sweeps >= max_sweeps:
            v = v_new
            break
        v = v_new
    actions = _greedy(r + P @ v)
    # polish with policy iteration so the returned policy is exactly optimal
    for _ in range(100):
        v = _evaluate_deterministic(r, P, actions, game.rho)
        q = r + P @ v
        improved = _greedy(q)
        gain = q[np.arange(S), improved] - q[np.arange(S), actions]
        if np.all(gain <= 1e-12 * np.maximum(1.0, np.abs(v))):
            break
        actions = np.where(gain > 1e-12 * np.maximum(1.0, np.abs(v)), improved, actions)
    policy = np.zeros((S, A))
    policy[np.arange(S), actions] = 1.0
    return BestResponse(policy, float(v @ game.rho), v, sweeps)


def best_response(game: MarkovGame, i: int, profile: Optional[Profile] = None,
                  mu: Optional[np.ndarray] = None) -> BestResponse:
    """Best stationary response of player ``i``.

    Opponents follow either the product ``profile`` (player ``i``'s entry is
    ignored) or the per-state marginal over ``A_-i`` of a correlated ``mu``.
    Solved by value iteration to ``1e-10 * zeta`` and then re-planned exactly.
    """
    if (profile is None) == (mu is None):
        raise InvalidInputError("pass exactly one of profile or mu")
    if profile is not None:
        profile = list(profile)
        if len(profile) != game.n:
            raise InvalidInputError("profile has the wrong number of players")
        profile[i] = np.full((game.num_states, game.action_counts[i]), 1.0 / game.action_counts[i])
        profile = check_profile(game, profile)
        weights = _opponent_weights(game, profile, i)
    else:
        mu = check_correlated(game, mu)
        weights = _correlated_opponent_weights(game, mu, i)
    r, P = _induced_mdp(game, weights, i)
    return _solve_mdp(game, r, P)


def ne_gaps(game: MarkovGame, profile: Profile) -> np.ndarray:
    """Per-player best-response improvement ``V_i^dagger - V_i``."""
    profile = check_profile(game, profile)
    planned = plan(game, profile)
    current = planned.values @ game.rho
    return np.array([best_response(game, i, profile=profile).value - current[i] for i in range(game.n)])


def ne_gap(game: MarkovGame, profile: Profile) -> float:
    return float(max(ne_gaps(game, profile).max(), 0.0))


# --------------------------------------------------------------------------- correlated policies

def check_correlated(game: MarkovGame, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (game.num_states, game.num_joint):
        raise InvalidInputError(f"correlated policy must have shape {(game.num_states, game.num_joint)}")
    if np.any(mu < -PROFILE_TOL) or np.any(np.abs(mu.sum(axis=1) - 1) > PROFILE_TOL):
        raise InvalidInputError("correlated policy rows must be distributions")
    return mu


def _correlated_opponent_weights(game: MarkovGame, mu: np.ndarray, i: int) -> np.ndarray:
    pre, a, post = game.split_axes(i)
    S = game.num_states
    marg = mu.reshape(S, pre, a, post).sum(axis=2, keepdims=True)
    return np.broadcast_to(marg, (S, pre, a, post)).reshape(S, -1)


def marginalize(mu, game: MarkovGame) -> list[np.ndarray]:
    mu = check_correlated(game, mu)
    return [_contract_to_player(game, mu, i) for i in range(game.n)]


def acce_gap(game: MarkovGame, mu) -> float:
    """Sum over players of the deviation benefit against ``mu_-i``; may be negative."""
    mu = check_correlated(game, mu)
    planned = plan_joint(game, mu)
    current = planned.values @ game.rho
    total = 0.0
    for i in range(game.n):
        total += best_response(game, i, mu=mu).value - current[i]
    return float(total)


class MixtureAccumulator:
    """Running uniform per-state mixture of product policies."""

    def __init__(self, game: MarkovGame):
        self.game = game
        self.total = np.zeros((game.num_states, game.num_joint))
        self.count = 0

    def add(self, profile: Profile):
        self.total += joint_distribution(profile)
        self.count += 1

    def add_vector(self, x: np.ndarray):
        self.add(vector_to_profile(self.game, x))

    def mixture(self) -> np.ndarray:
        if self.count == 0:
            raise InvalidInputError("no policies accumulated")
        return self.total / self.count


# --------------------------------------------------------------------------- structure

def single_controller_of(game: MarkovGame) -> Optional[int]:
    """Smallest player whose action alone determines every transition row."""
    S = game.num_states
    for i in range(game.n):
        pre, a, post = game.split_axes(i)
        P = game.transitions.reshape(S, pre, a, post, S)
        ref = P[:, :1, :, :1, :]
        if np.array_equal(P, np.broadcast_to(ref, P.shape)):
            return i
    return None


def controller_transitions(game: MarkovGame, c: int) -> np.ndarray:
    """``P[s, a_c, s']`` for a game controlled by player ``c``."""
    pre, a, post = game.split_axes(c)
    S = game.num_states
    return game.transitions.reshape(S, pre, a, post, S)[:, 0, :, 0, :]


def controller_visitation(game: MarkovGame, c: int, policy_c: np.ndarray) -> np.ndarray:
    """Unnormalized visitation computed from the controller's policy alone."""
    Pc = controller_transitions(game, c)
    P_pi = np.einsum("sa,sat->st", policy_c, Pc)
    return _solve((np.eye(game.num_states) - P_pi).T, game.rho)


def greedy_map(profile: Profile, gamma: float) -> list[np.ndarray]:
    """Mix every state's policy with the uniform one: ``(1 - g) x + g / |A_i|``."""
    if not (0 <= gamma <= 1):
        raise InvalidInputError(f"gamma must lie in [0, 1], got {gamma}")
    out = []
    for x in profile:
        x = np.asarray(x, dtype=float)
        out.append((1 - gamma) * x + gamma / x.shape[1])
    return out


# --------------------------------------------------------------------------- constants and audits

class TheoremConstants(NamedTuple):
    d: int
    D_X2: float
    h: float
    ell: float
    L: float
    B_F: float
    alpha: float


def theorem_constants(game: MarkovGame) -> TheoremConstants:
    n, S = game.n, game.num_states
    A = np.asarray(game.action_counts, dtype=float)
    z = game.zeta
    rho_inf = float(np.max(game.rho))
    return TheoremConstants(
        d=n * S,
        D_X2=2.0 * n * S,
        h=max(1 / z, 1 / rho_inf),
        ell=min(z, rho_inf),
        L=4 * math.sqrt(float(np.sum(A**2))) / z**3,
        B_F=float(np.sqrt(A).max()) / z**2,
        alpha=math.sqrt(S * float(A.sum())) / (z**2 * rho_inf**2),
    )


def weight_bounds(game: MarkovGame) -> tuple[float, float]:
    """Range of the controller weights ``1 / dtilde[s]``: ``[zeta, 1 / min rho]``."""
    rho_min = float(np.min(game.rho))
    return min(game.zeta, rho_min), max(1 / game.zeta, 1 / rho_min)


class GradientDominance(NamedTuple):
    value_gap: float
    linear_gap: float
    coefficient_bound: float

    @property
    def holds(self) -> bool:
        return self.value_gap <= self.coefficient_bound * self.linear_gap + 1e-10


def gradient_dominance_bound(game: MarkovGame, profile: Profile, i: int) -> GradientDominance:
    """Value gap, linearized gap and the mismatch coefficient of one best response.

    The coefficient uses the best response returned by ``best_response``, so
    it upper-bounds the minimum over all best responses.
    """
    profile = check_profile(game, profile)
    planned = plan(game, profile)
    br = best_response(game, i, profile=profile)
    value_gap = br.value - float(planned.values[i] @ game.rho)
    eq = expected_q(game, profile, planned, i)
    per_state = eq.max(axis=1) - np.sum(profile[i] * eq, axis=1)
    linear_gap = float(planned.visit_unnormalized @ per_state)
    dev = list(profile)
    dev[i] = br.policy
    d_br = plan(game, dev).visit_normalized
    coef = float(np.max(d_br / game.rho)) / game.zeta
    return GradientDominance(value_gap, linear_gap, coef)


def smoothness_probe(game: MarkovGame, trials: int, seed: int = 0, pairs=None) -> float:
    """Largest observed ``||grad_i V_i(x) - grad_i V_i(x')|| / ||x - x'||``.

    Random pairs mix a random profile toward another at several scales; an
    explicit list of ``(profile, profile')`` pairs may be given instead.
    """
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    if pairs is None:
        rng = np.random.default_rng(seed)
        pairs = []
        for k in range(trials):
            x = random_profile(game, rng)
            y = random_profile(game, rng)
            lam = 10.0 ** (-(k % 4))
            pairs.append((x, [(1 - lam) * a + lam * b for a, b in zip(x, y)]))
    best = 0.0
    for x, y in pairs:
        gx = policy_gradient(game, x)
        gy = policy_gradient(game, y)
        dist = np.linalg.norm(profile_to_vector(game, x) - profile_to_vector(game, y))
        if dist == 0:
            continue
        for i in range(game.n):
            best = max(best, float(np.linalg.norm(gx[i] - gy[i]) / dist))
    return best


def smoothness_bound(game: MarkovGame) -> float:
    return 4 * max(game.action_counts) / game.zeta**3


# --------------------------------------------------------------------------- operators

MODES = ("vanilla", "weighted", "weighted_estimated")


def build_operator(game: MarkovGame, mode: str = "vanilla", exploration_gamma: float = 0.0,
                   estimator=None) -> WeightedVIProblem:
    """Policy-gradient operator ``F = -(grad_1 V_1, ..., grad_n V_n)`` as a VI problem.

    The played profile is ``(1 - g) x + g * uniform``; ``F`` carries the chain
    rule factor ``1 - g``. In ``weighted`` mode the controller's blocks are
    scaled by ``1 / dtilde[s]`` computed from its own policy, every other
    block by 1. ``weighted_estimated`` takes those weights from
    ``estimator(game, played_profile) -> per-state weights``.
    """
    mode = mode.replace("-", "_")
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not (0 <= exploration_gamma <= 1):
        raise InvalidInputError("exploration_gamma must lie in [0, 1]")
    consts = theorem_constants(game)
    controller = None
    if mode != "vanilla":
        controller = single_controller_of(game)
        if controller is None:
            raise UnsupportedStructureError(f"{mode} mode needs a game with a single controller")
        if mode == "weighted_estimated" and estimator is None:
            raise InvalidInputError("weighted_estimated mode needs an estimator")
    g = float(exploration_gamma)
    space = game.space
    S = game.num_states
    sl = game.player_slice(controller) if controller is not None else None

    def played(x):
        prof = vector_to_profile(game, x)
        return greedy_map(prof, g) if g > 0 else prof

    def eval_F(x):
        prof = played(x)
        grads = policy_gradient(game, prof)
        return -(1 - g) * np.concatenate([gi.ravel() for gi in grads])

    def eval_FA(x):
        prof = played(x)
        planned = plan_joint(game, joint_distribution(prof))
        d = planned.visit_unnormalized[:, None]
        grads = [d * expected_q(game, prof, planned, i) for i in range(game.n)]
        Fx = -(1 - g) * np.concatenate([gi.ravel() for gi in grads])
        Ax = np.ones(space.total_dim)
        if mode == "weighted":
            w = 1.0 / controller_visitation(game, controller, prof[controller])
        else:
            w = np.asarray(estimator(game, prof), dtype=float)
        Ax[sl] = np.repeat(w, game.action_counts[controller])
        return Fx, Ax

    if mode == "vanilla":
        return WeightedVIProblem(
            space=space, eval_F=eval_F, ell=1.0, h=1.0, alpha=0.0,
            lipschitz_F=consts.L, b_f=consts.B_F, name=f"{game.name}:vanilla",
            metadata={"mode": mode, "constants": consts._asdict(), "controller": None, "gamma": g},
        )
    ell, h = weight_bounds(game)
    return WeightedVIProblem(
        space=space, eval_F=eval_F, eval_FA=eval_FA, ell=ell, h=h, alpha=consts.alpha,
        lipschitz_F=consts.L, b_f=consts.B_F, w_bounds=(ell, h), name=f"{game.name}:{mode}",
        metadata={"mode": mode, "constants": consts._asdict(), "controller": controller, "gamma": g},
    )
