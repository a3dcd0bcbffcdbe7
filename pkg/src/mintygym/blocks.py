"""Products of probability simplices.

A joint strategy lives in ``Z_1 x ... x Z_d`` where every ``Z_r`` is a simplex.
Vectors are stored flat; ``BlockSpace`` keeps the block offsets and groups
equal-sized blocks so that projection runs as one vectorized call per size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

SIMPLEX_TOL = 1e-9


def project_simplex_rows(v: np.ndarray) -> np.ndarray:
    """Project every row of a 2-D array onto the probability simplex.

    Sort-and-threshold: with ``u`` sorted in decreasing order, the threshold
    is ``(cumsum(u)[k] - 1) / (k + 1)`` for the largest ``k`` that keeps
    ``u[k]`` above it.
    """
    v = np.asarray(v, dtype=float)
    n_rows, k = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = u - css / ind > 0
    # cond is True on a prefix; its length picks the threshold index
    rho = cond.sum(axis=1) - 1
    theta = css[np.arange(n_rows), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInputError("project_simplex expects a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("project_simplex received non-finite entries")
    return project_simplex_rows(v[None, :])[0]


@dataclass(frozen=True)
class BlockSpace:
    """Cartesian product of simplices with sizes ``block_dims``."""

    block_dims: tuple[int, ...]
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    _groups: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(k) for k in self.block_dims)
        if len(dims) < 1:
            raise InvalidInputError("a BlockSpace needs at least one block")
        if any(k < 1 for k in dims):
            raise InvalidInputError(f"block dimensions must be positive, got {dims}")
        object.__setattr__(self, "block_dims", dims)
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.intp)
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

        by_size: dict[int, list[int]] = {}
        for r, k in enumerate(dims):
            by_size.setdefault(k, []).append(r)
        groups = []
        for k, blocks in sorted(by_size.items()):
            starts = offsets[blocks]
            idx = starts[:, None] + np.arange(k)[None, :]
            groups.append((k, np.asarray(blocks), idx))
        object.__setattr__(self, "_groups", tuple(groups))

    @property
    def d(self) -> int:
        return len(self.block_dims)

    @property
    def total_dim(self) -> int:
        return int(self.offsets[-1])

    def block(self, v: np.ndarray, r: int) -> np.ndarray:
        return v[self.offsets[r]:self.offsets[r + 1]]

    def split(self, v: np.ndarray) -> list[np.ndarray]:
        return [self.block(v, r) for r in range(self.d)]

    def block_ids(self) -> np.ndarray:
        """Block index of every flat coordinate."""
        return np.repeat(np.arange(self.d), self.block_dims)

    def centroid(self) -> np.ndarray:
        return np.concatenate([np.full(k, 1.0 / k) for k in self.block_dims])

    def block_sums(self, v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(v, self.offsets[:-1])

    def block_mins(self, v: np.ndarray) -> np.ndarray:
        return np.minimum.reduceat(v, self.offsets[:-1])

    def block_maxs(self, v: np.ndarray) -> np.ndarray:
        return np.maximum.reduceat(v, self.offsets[:-1])

    def block_sq_norms(self, v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(v * v, self.offsets[:-1])

    def expand(self, per_block: np.ndarray) -> np.ndarray:
        """Broadcast one scalar per block to a flat vector."""
        return np.repeat(np.asarray(per_block, dtype=float), self.block_dims)

    def check_length(self, v: np.ndarray, name: str = "vector") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.total_dim,):
            raise InvalidInputError(
                f"{name} has shape {v.shape}, expected ({self.total_dim},)"
            )
        return v

    def is_feasible(self, x: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.total_dim,) or not np.all(np.isfinite(x)):
            return False
        if np.any(x < -tol):
            return False
        return bool(np.all(np.abs(self.block_sums(x) - 1.0) <= tol))

    def check_point(self, x: np.ndarray, name: str = "point") -> np.ndarray:
        x = self.check_length(x, name)
        if not self.is_feasible(x):
            raise InvalidInputError(f"{name} is not in the product of simplices")
        return x

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Clip and renormalize a nearly-feasible point (validation helper only)."""
        x = np.maximum(self.check_length(x), 0.0)
        return x / self.expand(self.block_sums(x))

    def project(self, v: np.ndarray) -> np.ndarray:
        v = self.check_length(v)
        out = np.empty_like(v)
        for _, _, idx in self._groups:
            out[idx] = project_simplex_rows(v[idx])
        return out


def project_blockwise(space: BlockSpace, v) -> np.ndarray:
    v = space.check_length(v)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("project_blockwise received non-finite entries")
    return space.project(v)


def diameters(space: BlockSpace) -> tuple[np.ndarray, float]:
    """Per-block l2 diameters and the diameter of the whole product.

    Every block reports sqrt(2), which is exact for simplices with two or more
    vertices and an upper bound for a one-point block.
    """
    per_block = np.full(space.d, math.sqrt(2.0))
    return per_block, math.sqrt(2.0 * space.d)


def hadamard(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"hadamard operands differ in shape: {a.shape} vs {b.shape}")
    return a * b
