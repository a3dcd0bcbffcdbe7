"""JSON game files.

Layout (schema ``mintygym-game``, version 1)::

    {"schema": "mintygym-game", "version": 1, "name": ...,
     "action_counts": [...], "num_states": S, "zeta": z, "rho": [...],
     "transitions": [...],   # index (s * J + a) * S + s'
     "rewards": [...],       # index (i * S + s) * J + a
     "require_full_support": true}

Joint actions ``a`` are mixed-radix with player 0 most significant. Floats
are written with ``repr``, which round-trips every double exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import GameFileError
from .markov import MarkovGame

SCHEMA = "mintygym-game"
VERSION = 1


def game_to_dict(game: MarkovGame) -> dict:
    return {
        "schema": SCHEMA,
        "version": VERSION,
        "name": game.name,
        "action_counts": list(game.action_counts),
        "num_states": game.num_states,
        "zeta": game.zeta,
        "rho": game.rho.tolist(),
        "transitions": game.transitions.ravel().tolist(),
        "rewards": game.rewards.ravel().tolist(),
        "require_full_support": game.require_full_support,
    }


def _field(doc: dict, key: str, kind):
    if key not in doc:
        raise GameFileError(f"missing field {key!r}")
    value = doc[key]
    if kind is list and not isinstance(value, list):
        raise GameFileError(f"field {key!r} must be a list")
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise GameFileError(f"field {key!r} must be an integer")
    if kind is float and (not isinstance(value, (int, float)) or isinstance(value, bool)):
        raise GameFileError(f"field {key!r} must be a number")
    return value


def _numeric(doc, key, size) -> np.ndarray:
    values = _field(doc, key, list)
    if len(values) != size:
        raise GameFileError(f"field {key!r} has {len(values)} entries, expected {size}")
    for k, v in enumerate(values):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise GameFileError(f"field {key!r} entry {k} is not a number: {v!r}")
    return np.asarray(values, dtype=float)


def game_from_dict(doc) -> MarkovGame:
    """Build a game; structural problems raise ``GameFileError``, invariant
    violations the ``InvalidInputError`` of ``MarkovGame``."""
    if not isinstance(doc, dict):
        raise GameFileError("top level must be an object")
    if doc.get("schema") != SCHEMA:
        raise GameFileError(f"field 'schema' must be {SCHEMA!r}")
    if doc.get("version") != VERSION:
        raise GameFileError(f"unsupported version {doc.get('version')!r}; expected {VERSION}")
    counts = _field(doc, "action_counts", list)
    if not counts or any(not isinstance(a, int) or a < 1 for a in counts):
        raise GameFileError("field 'action_counts' must list positive integers")
    S = _field(doc, "num_states", int)
    if S < 1:
        raise GameFileError("field 'num_states' must be positive")
    n, J = len(counts), int(np.prod(counts))
    zeta = float(_field(doc, "zeta", float))
    rho = _numeric(doc, "rho", S)
    P = _numeric(doc, "transitions", S * J * S).reshape(S, J, S)
    R = _numeric(doc, "rewards", n * S * J).reshape(n, S, J)
    full = doc.get("require_full_support", True)
    if not isinstance(full, bool):
        raise GameFileError("field 'require_full_support' must be a boolean")
    return MarkovGame(tuple(counts), P, R, rho, zeta, require_full_support=full, name=str(doc.get("name", "")))


def write_game(game: MarkovGame, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")


def read_game(path) -> MarkovGame:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return game_from_dict(doc)
    except GameFileError as exc:
        raise GameFileError(f"{path}: {exc}") from exc
