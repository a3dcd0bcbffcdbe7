"""Weighted optimistic gradient descent over products of simplices.

The update is

    x_t       = proj(xhat_t - eta * A(x_{t-1}) * F(x_{t-1}))
    xhat_{t+1} = proj(xhat_t - eta * A(x_t) * F(x_t))

with ``A`` constant inside every block. ``A == 1`` gives plain optimistic
gradient descent. Regret diagnostics treat ``u = -A * F`` as the utility each
block maximizes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blocks import BlockSpace, diameters
from .errors import InsufficientRecordsError, InvalidInputError, OperatorFailureError

log = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

# relative slack when checking A against its declared bounds
_BOUND_RTOL = 1e-9


@dataclass
class WeightedVIProblem:
    """Operator ``F`` and block-constant weight map ``A`` over ``space``.

    ``eval_A=None`` means ``A == 1``. ``eval_FA`` may be given when both maps
    share work (the Markov-game operator plans once per point). ``b_f`` is an
    optional uniform bound on block norms of ``F``; when set the solver checks
    every evaluation against it. ``W`` only appears in the analysis, so only
    its bounds are carried in ``w_bounds``.
    """

    space: BlockSpace
    eval_F: Operator
    eval_A: Optional[Operator] = None
    ell: float = 1.0
    h: float = 1.0
    alpha: float = 0.0
    lipschitz_F: Optional[float] = None
    b_f: Optional[float] = None
    eval_FA: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None
    w_bounds: Optional[tuple[float, float]] = None
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.ell <= self.h):
            raise InvalidInputError(f"need 0 < ell <= h, got ell={self.ell}, h={self.h}")
        if self.alpha < 0:
            raise InvalidInputError("alpha must be nonnegative")

    @property
    def weighted(self) -> bool:
        return self.eval_A is not None or self.eval_FA is not None

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(F(x), A(x))`` after checking finiteness and the A contract."""
        if self.eval_FA is not None:
            Fx, Ax = self.eval_FA(x)
        else:
            Fx = self.eval_F(x)
            Ax = self.eval_A(x) if self.eval_A is not None else None
        n = self.space.total_dim
        Fx = np.asarray(Fx, dtype=float)
        if Fx.shape != (n,) or not np.all(np.isfinite(Fx)):
            raise OperatorFailureError("operator F returned a non-finite or misshaped value", point=x.copy())
        if Ax is None:
            return Fx, np.ones(n)
        Ax = np.asarray(Ax, dtype=float)
        if Ax.shape != (n,) or not np.all(np.isfinite(Ax)):
            raise OperatorFailureError("weight map A returned a non-finite or misshaped value", point=x.copy())
        lo, hi = self.space.block_mins(Ax), self.space.block_maxs(Ax)
        if np.any(hi - lo > 1e-12 * np.maximum(1.0, np.abs(hi))):
            raise OperatorFailureError("weight map A is not constant within a block", point=x.copy())
        if np.any(lo < self.ell * (1 - _BOUND_RTOL)) or np.any(hi > self.h * (1 + _BOUND_RTOL)):
            raise OperatorFailureError(
                f"weight map A left [{self.ell}, {self.h}]: range [{lo.min()}, {hi.max()}]",
                point=x.copy(),
            )
        return Fx, Ax


@dataclass(frozen=True)
class SolverConfig:
    eta: float
    T: int
    initial: Optional[np.ndarray] = None
    record_every: int = 1
    seed: int = 0
    noise: Optional[tuple[float, float]] = None  # (delta, rho); rho is reporting only
    slack_gamma: float = 0.0
    audit: bool = True

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InvalidInputError(f"eta must be positive, got {self.eta}")
        if int(self.T) < 1:
            raise InvalidInputError(f"T must be at least 1, got {self.T}")
        if int(self.record_every) < 1:
            raise InvalidInputError("record_every must be a positive integer")
        if self.slack_gamma < 0:
            raise InvalidInputError("slack_gamma must be nonnegative")
        if self.noise is not None and (self.noise[0] < 0 or self.noise[1] < 0):
            raise InvalidInputError("noise parameters must be nonnegative")

    def echo(self) -> dict:
        return {
            "eta": self.eta,
            "T": int(self.T),
            "record_every": int(self.record_every),
            "seed": int(self.seed),
            "noise": None if self.noise is None else list(self.noise),
            "slack_gamma": self.slack_gamma,
            "initial": "centroid" if self.initial is None else "custom",
        }


@dataclass
class IterateRecord:
    t: int
    x: np.ndarray
    x_hat: np.ndarray  # xhat_t
    x_hat_next: np.ndarray  # xhat_{t+1}
    eqgap: float
    s_r: np.ndarray
    utility: np.ndarray  # -A(x_t) * F(x_t)
    F: np.ndarray
    A: np.ndarray


@dataclass
class RVULedger:
    """Per-iteration regret and RVU right-hand side, one column per block."""

    lhs: np.ndarray  # (T, d)
    rhs: np.ndarray  # (T, d)
    br_gap: np.ndarray  # instantaneous per-block gap, (T, d)
    s_r: np.ndarray  # (T, d)
    u_norm_max: np.ndarray  # running max of ||u_r||, (T, d)

    def rvu_violation(self) -> float:
        """Largest ``lhs - rhs`` over all t and blocks (<= 0 when the bound holds)."""
        return float(np.max(self.lhs - self.rhs))

    def br_violation(self, eta: float, d_zr: np.ndarray) -> float:
        """Largest ``gap - bound`` with the bound built from the running max norm."""
        bound = (d_zr[None, :] / eta + self.u_norm_max) * self.s_r
        return float(np.max(self.br_gap - bound))


@dataclass
class SolveReport:
    space: BlockSpace
    records: list[IterateRecord]
    best_t: int
    best_x: np.ndarray
    best_eqgap: float
    initial_x: np.ndarray
    initial_eqgap: float
    initial_utility: np.ndarray
    eqgaps: np.ndarray  # eqgap at t = 1..T
    path_partial: np.ndarray  # running path-length sum at t = 1..T
    config: dict
    eta: float
    T_completed: int
    completed: bool = True
    ledger: Optional[RVULedger] = None
    max_block_f_norm: float = 0.0
    error: Optional[str] = None
    stopped_early: bool = False

    @property
    def path_length_sum(self) -> float:
        return float(self.path_partial[-1]) if self.path_partial.size else 0.0

    @property
    def best_iterate(self) -> tuple[int, np.ndarray, float]:
        return self.best_t, self.best_x, self.best_eqgap

    @property
    def dense(self) -> bool:
        return self.config.get("record_every", 1) == 1 and len(self.records) == self.T_completed

    def record_at(self, t: int) -> IterateRecord:
        for rec in self.records:
            if rec.t == t:
                return rec
        raise KeyError(f"no record at t={t}")


def vi_gap(space: BlockSpace, x, Fx) -> float:
    """``max_{x*} <x - x*, F(x)>`` via its per-block closed form."""
    x = space.check_length(x, "x")
    Fx = space.check_length(Fx, "F(x)")
    per_block = space.block_sums(x * Fx) - space.block_mins(Fx)
    return float(max(np.sum(per_block), 0.0))


def _block_gaps(space: BlockSpace, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    # max_{z*} <z* - z, u> on each block
    return np.maximum(space.block_maxs(u) - space.block_sums(x * u), 0.0)


def ogd_iterate(problem: WeightedVIProblem, eta: float, state):
    """One step of weighted optimistic gradient descent.

    ``state`` is ``(x_prev, x_hat, F_prev, A_prev)``; returns
    ``(x_t, x_hat_next, F_t, A_t)`` with the evaluations taken at ``x_t``.
    """
    x_prev, x_hat, F_prev, A_prev = state
    space = problem.space
    for name, v in zip(("x_prev", "x_hat", "F_prev", "A_prev"), state):
        space.check_length(v, name)
    x_t = space.project(x_hat - eta * (A_prev * F_prev))
    F_t, A_t = problem.evaluate(x_t)
    x_hat_next = space.project(x_hat - eta * (A_t * F_t))
    return x_t, x_hat_next, F_t, A_t


def noisy_wrap(problem: WeightedVIProblem, delta: float, gap_oracle=None, seed: int = 0) -> WeightedVIProblem:
    """Perturb ``F`` by ``delta * gap(x)`` along a fresh random unit direction.

    ``gap_oracle(x)`` defaults to the exact strong gap of the unperturbed
    operator, so ``||F_noisy(x) - F(x)|| = delta * gap(x)``.

    The generator is owned by the returned problem and advances once per
    evaluation, so a wrapped problem should be used for a single run.
    """
    if delta < 0:
        raise InvalidInputError("delta must be nonnegative")
    space = problem.space
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(0x6E6F,))))
    base_FA = problem.eval_FA

    def perturb(x, Fx):
        # default gap is the exact one of the clean operator at x
        gap = vi_gap(space, x, Fx) if gap_oracle is None else float(gap_oracle(x))
        direction = rng.standard_normal(space.total_dim)
        direction /= np.linalg.norm(direction)
        return Fx + (delta * gap) * direction

    if base_FA is not None:
        def eval_FA(x):
            Fx, Ax = base_FA(x)
            return perturb(x, np.asarray(Fx, dtype=float)), Ax
        eval_F = lambda x: eval_FA(x)[0]  # noqa: E731
    else:
        eval_FA = None

        def eval_F(x):
            return perturb(x, np.asarray(problem.eval_F(x), dtype=float))

    return WeightedVIProblem(
        space=space,
        eval_F=eval_F,
        eval_A=problem.eval_A,
        ell=problem.ell,
        h=problem.h,
        alpha=problem.alpha,
        lipschitz_F=problem.lipschitz_F,
        b_f=None,
        eval_FA=eval_FA,
        w_bounds=problem.w_bounds,
        name=f"{problem.name}+noise({delta})",
        metadata=dict(problem.metadata, noise_delta=delta),
    )


def solve(problem: WeightedVIProblem, config: SolverConfig, callback=None) -> SolveReport:
    """Run ``config.T`` iterations from ``x_0 = xhat_1 = initial``.

    The auxiliary utility at t = 0 is evaluated at the initial point. Every
    iterate's gap is computed (closed form), records are kept every
    ``record_every`` steps, at ``T`` and at the best iterate. ``callback(t, x)``
    is invoked after each iterate when given; a truthy return value ends the
    run after that iterate (which is then recorded) with ``stopped_early`` set.

    On an operator failure the partial report is attached to the raised
    ``OperatorFailureError`` as ``.report``.
    """
    space = problem.space
    if config.noise is not None:
        problem = noisy_wrap(problem, config.noise[0], seed=config.seed)
    eta = float(config.eta)
    T = int(config.T)
    every = int(config.record_every)

    x0 = space.centroid() if config.initial is None else space.check_point(config.initial, "initial")
    x0 = np.array(x0, dtype=float)
    F_prev, A_prev = problem.evaluate(x0)
    initial_gap = vi_gap(space, x0, F_prev)
    initial_u = -(A_prev * F_prev)
    d = space.d
    d_zr, _ = diameters(space)

    eqgaps = np.empty(T)
    path_partial = np.empty(T)
    records: list[IterateRecord] = []
    best: Optional[IterateRecord] = None
    best_gap = math.inf
    max_f_norm = float(np.sqrt(space.block_sq_norms(F_prev)).max())

    if config.audit:
        lhs = np.empty((T, d))
        rhs = np.empty((T, d))
        brg = np.empty((T, d))
        s_hist = np.empty((T, d))
        unorm_hist = np.empty((T, d))
        cum_u = np.zeros(space.total_dim)
        cum_played = np.zeros(d)
        var_sum = np.zeros(d)
        path_blocks = np.zeros(d)
        unorm_max = np.zeros(d)
        base = d_zr**2 / (2 * eta)

    x_prev, x_hat = x0, x0.copy()
    u_prev = initial_u
    path = 0.0
    t_done = 0
    error = None
    stop = False
    try:
        for t in range(1, T + 1):
            x_t, x_hat_next, F_t, A_t = ogd_iterate(problem, eta, (x_prev, x_hat, F_prev, A_prev))
            u_t = -(A_t * F_t)
            gap = vi_gap(space, x_t, F_t)
            d1 = x_t - x_hat
            d2 = x_t - x_hat_next
            sq1 = space.block_sq_norms(d1)
            sq2 = space.block_sq_norms(d2)
            s_r = np.sqrt(sq1) + np.sqrt(sq2)
            path += float(np.sum(sq1) + np.sum(sq2))
            eqgaps[t - 1] = gap
            path_partial[t - 1] = path
            f_norm = float(np.sqrt(space.block_sq_norms(F_t)).max())
            max_f_norm = max(max_f_norm, f_norm)
            if problem.b_f is not None and f_norm > problem.b_f * (1 + _BOUND_RTOL):
                raise OperatorFailureError(
                    f"block norm of F ({f_norm}) exceeds the declared bound B_F={problem.b_f}",
                    point=x_t.copy(),
                )

            if config.audit:
                i = t - 1
                cum_u += u_t
                cum_played += space.block_sums(x_t * u_t)
                lhs[i] = space.block_maxs(cum_u) - cum_played
                du = u_t - u_prev
                var_sum += space.block_sq_norms(du)
                path_blocks += sq1 + sq2
                rhs[i] = base + eta * var_sum - path_blocks / (2 * eta)
                brg[i] = _block_gaps(space, x_t, u_t)
                s_hist[i] = s_r
                unorm_max = np.maximum(unorm_max, np.sqrt(space.block_sq_norms(u_t)))
                unorm_hist[i] = unorm_max

            if callback is not None:
                stop = bool(callback(t, x_t))
            rec = None
            if t % every == 0 or t == T or stop:
                rec = IterateRecord(t, x_t, x_hat, x_hat_next, gap, s_r, u_t, F_t, A_t)
                records.append(rec)
            if gap < best_gap:
                best_gap = gap
                best = rec if rec is not None else IterateRecord(t, x_t, x_hat, x_hat_next, gap, s_r, u_t, F_t, A_t)

            x_prev, x_hat, F_prev, A_prev, u_prev = x_t, x_hat_next, F_t, A_t, u_t
            t_done = t
            if stop:
                break
    except OperatorFailureError as exc:
        error = exc

    if best is not None and all(r.t != best.t for r in records):
        records.append(best)
        records.sort(key=lambda r: r.t)

    ledger = None
    if config.audit:
        ledger = RVULedger(lhs[:t_done], rhs[:t_done], brg[:t_done], s_hist[:t_done], unorm_hist[:t_done])

    report = SolveReport(
        space=space,
        records=records,
        best_t=best.t if best is not None else 0,
        best_x=best.x if best is not None else x0,
        best_eqgap=best_gap if best is not None else initial_gap,
        initial_x=x0,
        initial_eqgap=initial_gap,
        initial_utility=initial_u,
        eqgaps=eqgaps[:t_done],
        path_partial=path_partial[:t_done],
        config=config.echo(),
        eta=eta,
        T_completed=t_done,
        completed=error is None,
        ledger=ledger,
        max_block_f_norm=max_f_norm,
        error=None if error is None else str(error),
        stopped_early=stop,
    )
    if error is not None:
        log.warning("solve aborted at t=%d: %s", t_done + 1, error)
        error.report = report
        raise error
    return report


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not (value > 0 and math.isfinite(value)):
            raise InvalidInputError(f"{name} must be positive and finite, got {value}")


def theorem_step_size(ell, h, L, B_F, alpha, d) -> float:
    """Largest learning rate covered by the best-iterate guarantee."""
    _require_positive(ell=ell, h=h, L=L, B_F=B_F, d=d)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise InvalidInputError(f"alpha must be nonnegative, got {alpha}")
    return 0.25 * math.sqrt(ell / (h**3 * L**2 + h * B_F**2 * alpha**2 * d))


def iteration_budget(D_X, h, ell, eps) -> int:
    """Iterations after which some iterate has path increments below ``eps``."""
    _require_positive(D_X=D_X, h=h, ell=ell, eps=eps)
    value = 2 * D_X**2 * h / (ell * eps**2)
    # guard against 38400.000000000004-style round-up
    return int(math.ceil(value - 1e-9 * value))


def gap_bound(d, max_d_zr, eta, ell, h, B_F, eps) -> float:
    """Best-iterate strong-gap bound ``2 d (D/(eta l) + h B_F / l) eps``."""
    return 2 * d * (max_d_zr / (eta * ell) + h * B_F / ell) * eps


def slack_budget(gamma, eta, ell, h, D_X, T) -> float:
    """Iterate-distance level reachable when the Minty sum may dip to ``-gamma T``."""
    if gamma < 0:
        raise InvalidInputError("gamma must be nonnegative")
    _require_positive(eta=eta, ell=ell, h=h, D_X=D_X, T=T)
    return math.sqrt(4 * eta * gamma / ell + 2 * D_X**2 * h / (ell * T))


def path_length_audit(report: SolveReport, D_X, h, ell) -> tuple[float, float, bool]:
    total = report.path_length_sum
    bound = 2 * D_X**2 * h / ell
    return total, bound, total <= bound


def rvu_audit(report: SolveReport, r: int, eta: float, D_Zr: float) -> list[tuple[int, float, float]]:
    """Recompute the RVU inequality for block ``r`` from dense records.

    Returns ``(t, lhs, rhs)`` for every iterate; the bound holds when
    ``lhs <= rhs`` throughout.
    """
    if not report.dense:
        raise InsufficientRecordsError("rvu_audit needs a report recorded at every iterate")
    recs = report.records
    offsets = report.space.offsets
    space_slice = slice(offsets[r], offsets[r + 1])
    u_prev = report.initial_utility[space_slice]
    cum_u = np.zeros_like(u_prev)
    played = var = path = 0.0
    out = []
    for rec in recs:
        z = rec.x[space_slice]
        u = rec.utility[space_slice]
        cum_u = cum_u + u
        played += float(z @ u)
        var += float(np.sum((u - u_prev) ** 2))
        path += float(np.sum((z - rec.x_hat[space_slice]) ** 2) + np.sum((z - rec.x_hat_next[space_slice]) ** 2))
        lhs = float(cum_u.max()) - played
        rhs = D_Zr**2 / (2 * eta) + eta * var - path / (2 * eta)
        out.append((rec.t, lhs, rhs))
        u_prev = u
    return out


def br_gap_bound(record: IterateRecord, eta: float, D_Zr, max_u_norm) -> np.ndarray:
    """Per-block bound ``(D/eta + max ||u||) * s_r`` on the instantaneous gap."""
    return (np.asarray(D_Zr, dtype=float) / eta + np.asarray(max_u_norm, dtype=float)) * record.s_r


def block_gaps(space: BlockSpace, record: IterateRecord) -> np.ndarray:
    """Instantaneous per-block gap ``max_{z*} <z* - z_t, u_t>``."""
    return _block_gaps(space, record.x, record.utility)
