"""Command-line front end: ``mintygym {solve,appendix-c,check,gen}``.

Exit codes: 0 success, 1 failed checks, 2 invalid input, 3 I/O or game-file
error, 4 unsupported game structure, 5 solver or numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import markov as mk
from . import zoo
from .checks import PROPERTY_COUNT, run_checks
from .errors import (
    GameFileError, InvalidInputError, NumericalFailureError, OperatorFailureError,
    UnsupportedStructureError,
)
from .estimators import EstimatedWeights, RolloutEngine
from .io import read_game, write_game
from .vi import SolverConfig, solve

log = logging.getLogger("mintygym")

EXIT_OK, EXIT_CHECKS, EXIT_INPUT, EXIT_IO, EXIT_STRUCTURE, EXIT_SOLVER = 0, 1, 2, 3, 4, 5
SUMMARY_SCHEMA = "mintygym-summary"
SUMMARY_VERSION = 1
CSV_COLUMNS = ("t", "eqgap", "ne_gap", "s_norm", "path_partial", "elapsed_ms")
GENERATORS = ("polymatrix", "zero-sum-sc", "random", "ratio", "minty", "matching-pennies")

FULL_SHAPE = (100, 120, 9)
DESK_SHAPE = (20, 24, 10)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MINTYGYM_THREADS", "1")))
    except ValueError:
        return 1


def _instance_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _parse_counts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(a) for a in text.split(","))
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse action counts {text!r}") from exc


def generate_game(kind: str, seed: int, players=3, states=3, actions="2,2,2", zeta=0.3,
                  controller_mode="single", shape=(3, 4)) -> mk.MarkovGame:
    if kind == "polymatrix":
        counts = _parse_counts(actions)
        if len(counts) == 1:
            counts = counts * players
        return zoo.random_polymatrix_zero_sum(players, states, counts, zeta,
                                              controller_mode=controller_mode, seed=seed)
    if kind == "zero-sum-sc":
        return zoo.two_player_zero_sum_single_controller(states, _parse_counts(actions)[:2], zeta, seed=seed)
    if kind == "random":
        counts = _parse_counts(actions)
        return zoo.random_markov_game(len(counts), states, counts, zeta, seed=seed)
    if kind == "ratio":
        return zoo.ratio_to_markov(zoo.random_ratio_game(shape[0], shape[1], seed))
    if kind == "minty":
        return zoo.ratio_to_markov(zoo.minty_counterexample(0.1, 0.5))
    if kind == "matching-pennies":
        return zoo.matching_pennies(zeta)
    raise InvalidInputError(f"unknown generator {kind!r}; expected one of {GENERATORS}")


# --------------------------------------------------------------------------- config

def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GameFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise GameFileError(f"{path}: config must be a JSON object")
    return doc


def _pick(args, config, name, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


# --------------------------------------------------------------------------- solve

def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _trajectory_rows(game, report, timing, times):
    rows = []
    for rec in report.records:
        ne = mk.ne_gap(game, mk.vector_to_profile(game, rec.x))
        elapsed = _fmt(times.get(rec.t)) if timing else ""
        rows.append((rec.t, _fmt(rec.eqgap), _fmt(ne), _fmt(np.linalg.norm(rec.s_r)),
                     _fmt(report.path_partial[rec.t - 1]), elapsed))
    return rows


def cmd_solve(args) -> int:
    config = load_config(args.config)
    seed = int(_pick(args, config, "seed", 0))
    if args.game or config.get("game"):
        game = read_game(args.game or config["game"])
    else:
        gen = _pick(args, config, "generator", "polymatrix")
        game = generate_game(gen, seed, players=int(_pick(args, config, "players", 3)),
                             states=int(_pick(args, config, "states", 3)),
                             actions=str(_pick(args, config, "actions", "2,2,2")),
                             zeta=float(_pick(args, config, "zeta", 0.3)),
                             controller_mode=_pick(args, config, "controller_mode", "single"))
    mode = str(_pick(args, config, "mode", "vanilla")).replace("-", "_")
    gamma = float(_pick(args, config, "gamma", 0.0))
    eta = float(_pick(args, config, "eta", 0.05))
    T = int(_pick(args, config, "iters", 1000))
    every = int(_pick(args, config, "record_every", max(1, T // 100)))
    noise = config.get("noise")
    estimator = None
    if mode == "weighted_estimated":
        m = int(_pick(args, config, "rollouts", max(1000, T)))
        estimator = EstimatedWeights(RolloutEngine(game, seed=seed), lambda t: m, audit=False)
    # structural errors surface here, before any output is created
    problem = mk.build_operator(game, mode, exploration_gamma=gamma, estimator=estimator)
    cfg = SolverConfig(eta=eta, T=T, record_every=every, seed=seed,
                       noise=None if noise is None else tuple(noise))

    out = Path(_pick(args, config, "out", "mintygym-out"))
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    times = {}

    def stamp(t, x):
        times[t] = (time.perf_counter() - start) * 1000.0

    status, error = EXIT_OK, None
    try:
        report = solve(problem, cfg, callback=stamp if args.timing else None)
    except (OperatorFailureError, NumericalFailureError) as exc:
        report = getattr(exc, "report", None)
        status, error = EXIT_SOLVER, str(exc)
        if report is None:
            raise
    _write_csv(out / "trajectory.csv", _trajectory_rows(game, report, args.timing, times))

    best_profile = mk.vector_to_profile(game, report.best_x)
    summary = {
        "schema": SUMMARY_SCHEMA,
        "version": SUMMARY_VERSION,
        "game": game.name,
        "mode": mode,
        "gamma": gamma,
        "solver": report.config,
        "completed": report.completed,
        "error": error,
        "iterations": report.T_completed,
        "initial_eqgap": report.initial_eqgap,
        "best": {"t": report.best_t, "eqgap": report.best_eqgap,
                 "ne_gap": mk.ne_gap(game, best_profile)},
        "final_eqgap": float(report.eqgaps[-1]) if report.eqgaps.size else None,
        "path_length": report.path_length_sum,
        "constants": problem.metadata.get("constants"),
        "weight_bounds": [problem.ell, problem.h],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if error is not None:
        print(f"solver failed: {error}", file=sys.stderr)
    else:
        print(f"best eqgap {report.best_eqgap:.6e} at t={report.best_t}; wrote {out}")
    return status


# --------------------------------------------------------------------------- ratio-game sweep

def run_ratio_instance(index: int, seed: int, shape, eta: float, T: int, audit: bool = False) -> dict:
    """Vanilla and weighted optimistic descent on one random ratio game.

    With ``audit`` each variant also carries its solve report under ``"report"``.
    """
    game = zoo.random_ratio_game(shape[0], shape[1], _instance_seed(seed, index))
    cfg = SolverConfig(eta=eta, T=T, record_every=T, audit=audit)
    result = {"instance": index}
    for variant, weighted in (("vanilla", False), ("weighted", True)):
        rep = solve(zoo.ratio_problem(game, weighted=weighted), cfg)
        result[variant] = {
            "gaps": np.concatenate([[rep.initial_eqgap], rep.eqgaps]),
            "initial": rep.initial_eqgap,
            "final": float(rep.eqgaps[-1]),
            "best": rep.best_eqgap,
        }
        if audit:
            result[variant]["report"] = rep
    return result


def appendix_c(out: Path, seed: int, shape=FULL_SHAPE[:2], instances=FULL_SHAPE[2], eta=0.1, T=1000,
               audit: bool = False) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)

    def one(k):
        return run_ratio_instance(k, seed, shape, eta, T, audit=audit)

    threads = min(_threads(), instances)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(instances)))
    else:
        results = [one(k) for k in range(instances)]

    for res in results:
        path = out / f"instance_{res['instance']:02d}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("t", "vanilla_eqgap", "weighted_eqgap"))
            for t, (a, b) in enumerate(zip(res["vanilla"]["gaps"], res["weighted"]["gaps"])):
                writer.writerow((t, repr(float(a)), repr(float(b))))
    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("instance", "variant", "initial_gap", "final_gap", "best_gap"))
        for res in results:
            for variant in ("vanilla", "weighted"):
                v = res[variant]
                writer.writerow((res["instance"], variant, repr(v["initial"]), repr(v["final"]), repr(v["best"])))
    summary = {
        "schema": SUMMARY_SCHEMA,
        "version": SUMMARY_VERSION,
        "experiment": "appendix_c",
        "shape": list(shape),
        "instances": instances,
        "eta": eta,
        "T": T,
        "seed": seed,
        "rows": [
            {"instance": r["instance"],
             **{f"{v}_{k}": r[v][k] for v in ("vanilla", "weighted") for k in ("initial", "final", "best")}}
            for r in results
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return results


def cmd_appendix_c(args) -> int:
    config = load_config(args.config)
    m, n, count = DESK_SHAPE if args.desk else FULL_SHAPE
    instances = int(_pick(args, config, "instances", count))
    eta = float(_pick(args, config, "eta", 0.1))
    T = int(_pick(args, config, "iters", 1000))
    seed = int(_pick(args, config, "seed", 0))
    out = Path(_pick(args, config, "out", "appendix-c-out"))
    results = appendix_c(out, seed, (m, n), instances, eta, T)
    for r in results:
        v, w = r["vanilla"], r["weighted"]
        print(f"instance {r['instance']:2d}: initial {v['initial']:.4e}  "
              f"vanilla best {v['best']:.4e}  weighted best {w['best']:.4e}")
    return EXIT_OK


# --------------------------------------------------------------------------- check / gen

def cmd_check(args) -> int:
    results = run_checks(corrupt_gradient=args.corrupt_gradient)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{PROPERTY_COUNT} properties passed")
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECKS
    return EXIT_OK


def cmd_gen(args) -> int:
    config = load_config(args.config)
    seed = int(_pick(args, config, "seed", 0))
    game = generate_game(args.kind, seed, players=args.players, states=args.states, actions=args.actions,
                         zeta=args.zeta, controller_mode=args.controller_mode,
                         shape=_parse_counts(args.shape))
    out = Path(_pick(args, config, "out", f"{args.kind}-{seed}.json"))
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_game(game, out)
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any option")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--out", help="output directory (solve, appendix-c) or file (gen)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mintygym", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="run optimistic descent on a Markov game")
    p.add_argument("--game", help="game file; otherwise a generator is used")
    p.add_argument("--generator", choices=GENERATORS)
    p.add_argument("--players", type=int)
    p.add_argument("--states", type=int)
    p.add_argument("--actions", help="comma-separated action counts")
    p.add_argument("--zeta", type=float)
    p.add_argument("--controller-mode", dest="controller_mode", choices=("single", "switching"))
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--mode", choices=("vanilla", "weighted", "weighted-estimated"))
    p.add_argument("--gamma", type=float, help="exploration mixing weight")
    p.add_argument("--rollouts", type=int, help="rollouts per iterate in weighted-estimated mode")
    p.add_argument("--timing", action="store_true", help="fill the elapsed_ms column")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("appendix-c", parents=[common], help="vanilla vs weighted runs on random ratio games")
    p.add_argument("--desk", action="store_true", help="20x24 games, 10 instances")
    p.add_argument("--instances", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--iters", type=int)
    p.set_defaults(func=cmd_appendix_c)

    p = sub.add_parser("check", parents=[common], help="run the invariant battery")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen", parents=[common], help="write a generated game file")
    p.add_argument("kind", choices=GENERATORS)
    p.add_argument("--players", type=int, default=3)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--actions", default="2,2,2")
    p.add_argument("--zeta", type=float, default=0.3)
    p.add_argument("--controller-mode", dest="controller_mode", choices=("single", "switching"), default="single")
    p.add_argument("--shape", default="3,4", help="ratio game shape for kind=ratio")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnsupportedStructureError as exc:
        print(f"unsupported structure: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except (GameFileError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OperatorFailureError, NumericalFailureError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
