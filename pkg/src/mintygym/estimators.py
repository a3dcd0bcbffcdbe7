"""Seeded rollouts and Monte Carlo visitation estimates.

Rollouts are simulated in vectorized chunks of ``CHUNK`` trajectories. Chunk
``k`` of stream ``key`` draws from its own PCG64 generator seeded with
``SeedSequence(seed, spawn_key=(key, k))``, so an estimate depends only on
``(seed, key, profile, m)`` and not on how chunks are scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .markov import MarkovGame, check_profile, controller_visitation, single_controller_of

CHUNK = 16384


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MINTYGYM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class RolloutEngine:
    game: MarkovGame
    seed: int = 0
    max_horizon: Optional[int] = None

    def __post_init__(self):
        if self.max_horizon is None:
            self.max_horizon = int(math.ceil(40 / self.game.zeta))
        if int(self.max_horizon) < 1:
            raise InvalidInputError("max_horizon must be at least 1")
        self.max_horizon = int(self.max_horizon)
        self._cum_P = np.cumsum(self.game.transitions, axis=2)
        self._cum_rho = np.cumsum(self.game.rho)

    def generator(self, key: int, chunk: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(key), int(chunk)))
        return np.random.Generator(np.random.PCG64(ss))

    def truncation_bias_bound(self) -> float:
        z = self.game.zeta
        return (1 - z) ** self.max_horizon / z


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)  # (state, joint action, rewards)
    truncated: bool = False

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row; returns ``cum.shape[1]`` when ``u`` exceeds the total mass."""
    return (cum <= u[:, None]).sum(axis=1)


def sample_trajectory(engine: RolloutEngine, profile, key: int = 0, index: int = 0) -> Trajectory:
    """One rollout from ``rho`` until termination or ``max_horizon`` steps."""
    game = engine.game
    profile = check_profile(game, profile)
    cum_pi = [np.cumsum(x, axis=1) for x in profile]
    rng = engine.generator(key, index)
    state = min(int(_draw(engine._cum_rho[None, :], rng.random(1))[0]), game.num_states - 1)
    traj = Trajectory()
    for _ in range(engine.max_horizon):
        acts = [min(int(_draw(c[state][None, :], rng.random(1))[0]), c.shape[1] - 1) for c in cum_pi]
        joint = int(np.ravel_multi_index(acts, game.joint_shape))
        traj.steps.append((state, joint, game.rewards[:, state, joint].copy()))
        nxt = int(_draw(engine._cum_P[state, joint][None, :], rng.random(1))[0])
        if nxt >= game.num_states:
            return traj
        state = nxt
    traj.truncated = True
    return traj


@dataclass
class _ChunkStats:
    visits: np.ndarray  # sum of per-rollout visit counts, (S,)
    visits_sq: np.ndarray  # sum of squared per-rollout counts, (S,)
    returns: np.ndarray  # (n,)
    returns_sq: np.ndarray  # (n,)
    steps: int
    steps_sq: float  # sum of squared episode lengths
    truncated: int


def _simulate_chunk(engine: RolloutEngine, cum_pi, rng: np.random.Generator, batch: int) -> _ChunkStats:
    game = engine.game
    S = game.num_states
    counts = np.zeros((batch, S))
    returns = np.zeros((batch, game.n))
    state = np.minimum(_draw(np.broadcast_to(engine._cum_rho, (batch, S)), rng.random(batch)), S - 1)
    idx = np.arange(batch)
    steps = 0
    for _ in range(engine.max_horizon):
        if idx.size == 0:
            break
        counts[idx, state] += 1
        steps += idx.size
        joint = np.zeros(idx.size, dtype=np.intp)
        for c in cum_pi:
            a = np.minimum(_draw(c[state], rng.random(idx.size)), c.shape[1] - 1)
            joint = joint * c.shape[1] + a
        returns[idx] += game.rewards[:, state, joint].T
        nxt = _draw(engine._cum_P[state, joint], rng.random(idx.size))
        alive = nxt < S
        idx, state = idx[alive], nxt[alive]
    lengths = counts.sum(axis=1)
    return _ChunkStats(
        counts.sum(axis=0), (counts**2).sum(axis=0), returns.sum(axis=0), (returns**2).sum(axis=0),
        steps, float(lengths @ lengths), int(idx.size),
    )


def _run(engine: RolloutEngine, profile, m: int, key: int) -> tuple[_ChunkStats, int]:
    if int(m) < 1:
        raise InvalidInputError("rollout count m must be at least 1")
    m = int(m)
    profile = check_profile(engine.game, profile)
    cum_pi = [np.cumsum(x, axis=1) for x in profile]
    sizes = [min(CHUNK, m - k * CHUNK) for k in range(-(-m // CHUNK))]

    def work(k):
        return _simulate_chunk(engine, cum_pi, engine.generator(key, k), sizes[k])

    workers = min(_threads(), len(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]
    # merge in chunk order so the floating-point sum is schedule-independent
    total = parts[0]
    for p in parts[1:]:
        total = _ChunkStats(
            total.visits + p.visits, total.visits_sq + p.visits_sq, total.returns + p.returns,
            total.returns_sq + p.returns_sq, total.steps + p.steps, total.steps_sq + p.steps_sq,
            total.truncated + p.truncated,
        )
    return total, m


def _standard_error(total, total_sq, m):
    mean = total / m
    if m < 2:
        return np.full_like(mean, np.inf)
    var = np.maximum(total_sq / m - mean**2, 0.0) * m / (m - 1)
    return np.sqrt(var / m)


@dataclass
class VisitationEstimate:
    d_tilde_hat: np.ndarray
    rollouts_used: int
    standard_errors: np.ndarray
    truncated: int = 0
    mean_length: float = 0.0


def mc_visitation(engine: RolloutEngine, profile, m: int, key: int = 0) -> VisitationEstimate:
    """Average per-rollout visit counts: an estimate of the unnormalized visitation."""
    stats, m = _run(engine, profile, m, key)
    return VisitationEstimate(
        stats.visits / m, m, _standard_error(stats.visits, stats.visits_sq, m),
        stats.truncated, stats.steps / m,
    )


@dataclass
class ValueEstimate:
    values: np.ndarray  # V_i(rho) per player
    standard_errors: np.ndarray
    rollouts_used: int
    mean_length: float
    length_standard_error: float


def mc_values(engine: RolloutEngine, profile, m: int, key: int = 0) -> ValueEstimate:
    """Average undiscounted returns from ``rho`` plus the mean episode length."""
    stats, m = _run(engine, profile, m, key)
    len_se = float(_standard_error(np.float64(stats.steps), stats.steps_sq, m))
    return ValueEstimate(
        stats.returns / m, _standard_error(stats.returns, stats.returns_sq, m), m, stats.steps / m, len_se,
    )


class EstimatedWeights:
    """Controller weights ``1 / dtilde_hat`` from fresh rollouts on every call.

    Call ``t`` (starting at 0) uses ``m_schedule(t)`` rollouts drawn from
    stream ``t``. Weights are clamped per state to ``[zeta, 1 / rho[s]]``,
    the range of the exact weights. With ``audit=True`` the sup-norm error
    against the exact weights is appended to ``errors``.
    """

    def __init__(self, engine: RolloutEngine, m_schedule: Optional[Callable[[int], int]] = None,
                 T: Optional[int] = None, audit: bool = True):
        self.engine = engine
        if m_schedule is None:
            floor = 1000 if T is None else max(1000, int(T))
            m_schedule = lambda t: floor  # noqa: E731
        self.m_schedule = m_schedule
        self.audit = audit
        self.calls = 0
        self.errors: list[float] = []
        self.controller = single_controller_of(engine.game)
        if self.controller is None:
            raise InvalidInputError("estimated weights need a single-controller game")
        self.lower = engine.game.zeta
        self.upper = 1.0 / np.where(engine.game.rho > 0, engine.game.rho, np.inf)

    def __call__(self, game: MarkovGame, profile) -> np.ndarray:
        if game is not self.engine.game:
            raise InvalidInputError("estimator was built for a different game")
        m = int(self.m_schedule(self.calls))
        if m < 1:
            raise InvalidInputError(f"m_schedule returned {m} at call {self.calls}")
        est = mc_visitation(self.engine, profile, m, key=self.calls)
        self.calls += 1
        with np.errstate(divide="ignore"):
            raw = 1.0 / est.d_tilde_hat
        weights = np.clip(raw, self.lower, np.maximum(self.upper, self.lower))
        if self.audit:
            exact = 1.0 / controller_visitation(game, self.controller, np.asarray(profile[self.controller]))
            self.errors.append(float(np.max(np.abs(exact - weights))))
        return weights


def estimated_weight_map(engine: RolloutEngine, m_schedule=None, T=None, audit=True) -> EstimatedWeights:
    return EstimatedWeights(engine, m_schedule, T=T, audit=audit)
