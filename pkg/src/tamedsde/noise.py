"""Reproducible Brownian increments on uniform grids.

All randomness in the package flows through this module.  Gaussian increments
are drawn from numpy's PCG64 generator via ``Generator.standard_normal`` (the
ziggurat algorithm); given the same seed the increments are reproduced
bit-exactly.  Ensembles derive one 64-bit seed per path from
``(master_seed, path_index, stream_tag)`` through :func:`stream_seed`, so a
path is a pure function of its index and results do not depend on execution
order or thread count.

Grids are always uniform.  Coarser grids are obtained by summing blocks of
fine increments (:func:`coarsen`), which couples a coarse integration and a
fine reference on the same underlying Brownian path exactly: all grids in a
study are nested dyadic (or integer-factor) refinements, so no bridge
interpolation is needed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DRIVING_STREAM",
    "AUXILIARY_STREAM",
    "TimeGrid",
    "BrownianPath",
    "AuxiliaryNoise",
    "stream_seed",
    "generate_path",
    "driving_path",
    "coarsen",
    "generate_auxiliary",
    "save_path",
    "load_path",
]

#: Stream tag reserved for the Brownian motion that drives the state equation.
DRIVING_STREAM = 0
#: Default stream tag for the independent auxiliary Brownian motion.
AUXILIARY_STREAM = 1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``steps`` intervals on ``[0, horizon]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def step(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        # i * h products, not repeated addition, so grid point i is exact.
        return np.arange(self.steps + 1) * self.step

    def kappa(self, s):
        """Left grid point of the interval containing ``s``: floor(N s / T) T / N."""
        s = np.asarray(s, dtype=float)
        idx = np.floor(self.steps * s / self.horizon)
        return idx * self.step

    def refinement_factor(self, coarse: "TimeGrid") -> int:
        """Integer factor by which this grid refines ``coarse``; raises if not nested."""
        if coarse.horizon != self.horizon:
            raise ValueError("grids must share the same horizon")
        if self.steps % coarse.steps != 0:
            raise ValueError(
                f"{self.steps} steps is not an integer refinement of {coarse.steps}"
            )
        return self.steps // coarse.steps


@dataclass(frozen=True)
class BrownianPath:
    """Increments of an m-dimensional Brownian motion on a uniform grid.

    ``increments[n, k]`` is ``W_k((n+1)h) - W_k(nh)``, i.i.d. Normal(0, h).
    The array is frozen (read-only) so paths can be shared across threads.
    """

    grid: TimeGrid
    dim: int
    increments: np.ndarray
    seed: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.increments.shape != (self.grid.steps, self.dim):
            raise ValueError(
                f"increments shape {self.increments.shape} does not match "
                f"(steps, dim) = ({self.grid.steps}, {self.dim})"
            )
        self.increments.setflags(write=False)

    def cumulative(self) -> np.ndarray:
        """Path values W(i h) for i = 0..N, starting at 0."""
        out = np.zeros((self.grid.steps + 1, self.dim))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


@dataclass(frozen=True)
class AuxiliaryNoise(BrownianPath):
    """Brownian increments independent of the driving path (disjoint stream tag)."""

    stream_tag: int = field(default=AUXILIARY_STREAM)


def stream_seed(master_seed: int, path_index: int, stream_tag: int) -> int:
    """Derive the 64-bit seed for one (path, stream) from a master seed.

    Pure function of its arguments; distinct tuples give statistically
    independent PCG64 streams.
    """
    ss = np.random.SeedSequence((master_seed, path_index, stream_tag))
    return int(ss.generate_state(1, np.uint64)[0])


def generate_path(grid: TimeGrid, dim: int, seed: int) -> BrownianPath:
    """Draw a Brownian path: N x dim Gaussian increments of variance h."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    increments = rng.standard_normal((grid.steps, dim)) * np.sqrt(grid.step)
    return BrownianPath(grid=grid, dim=dim, increments=increments, seed=int(seed))


def driving_path(grid: TimeGrid, dim: int, master_seed: int, path_index: int) -> BrownianPath:
    """Driving path for ensemble member ``path_index`` under ``master_seed``."""
    return generate_path(grid, dim, stream_seed(master_seed, path_index, DRIVING_STREAM))


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Aggregate each block of ``factor`` consecutive increments into one.

    Block sums are accumulated left to right, so summing the coarse increments
    sequentially reproduces the block-ordered sum of the fine increments
    exactly in floating point.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if path.grid.steps % factor != 0:
        raise ValueError(
            f"factor {factor} does not divide the path's {path.grid.steps} steps"
        )
    if factor == 1:
        return path
    n_coarse = path.grid.steps // factor
    blocks = path.increments.reshape(n_coarse, factor, path.dim)
    coarse = blocks[:, 0, :].copy()
    for j in range(1, factor):
        coarse += blocks[:, j, :]
    grid = TimeGrid(horizon=path.grid.horizon, steps=n_coarse)
    return BrownianPath(grid=grid, dim=path.dim, increments=coarse, seed=path.seed)


def generate_auxiliary(
    grid: TimeGrid,
    dim: int,
    master_seed: int,
    stream_tag: int = AUXILIARY_STREAM,
    path_index: int = 0,
) -> AuxiliaryNoise:
    """Auxiliary Brownian increments independent of the driving path.

    Rejects ``stream_tag == DRIVING_STREAM``: under a shared master seed that
    would replay the driving path's stream instead of an independent one.
    """
    if stream_tag == DRIVING_STREAM:
        raise ValueError(
            "stream_tag collides with the driving path's stream; pick a nonzero tag"
        )
    seed = stream_seed(master_seed, path_index, stream_tag)
    rng = np.random.default_rng(seed)
    increments = rng.standard_normal((grid.steps, dim)) * np.sqrt(grid.step)
    return AuxiliaryNoise(
        grid=grid, dim=dim, increments=increments, seed=seed, stream_tag=stream_tag
    )


_HEADER = struct.Struct("<dqqQ")  # T, N, dim, seed; little-endian


def save_path(path: BrownianPath, file) -> None:
    """Binary dump: header ``<dqqQ`` (T, N, dim, seed) then N*dim little-endian float64."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "wb")
        close = True
    try:
        file.write(_HEADER.pack(path.grid.horizon, path.grid.steps, path.dim, path.seed))
        file.write(path.increments.astype("<f8").tobytes())
    finally:
        if close:
            file.close()


def load_path(file) -> BrownianPath:
    """Read a path written by :func:`save_path`."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "rb")
        close = True
    try:
        horizon, steps, dim, seed = _HEADER.unpack(file.read(_HEADER.size))
        body = file.read(steps * dim * 8)
        if len(body) != steps * dim * 8:
            raise ValueError("truncated path dump")
        increments = np.frombuffer(body, dtype="<f8").reshape(steps, dim).copy()
    finally:
        if close:
            file.close()
    grid = TimeGrid(horizon=horizon, steps=steps)
    return BrownianPath(grid=grid, dim=dim, increments=increments, seed=seed)
