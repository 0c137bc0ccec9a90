"""Tamed and standard Euler integrators for multiplicative and additive noise.

The tamed step divides both drift and diffusion by ``1 + (T/N)^alpha |x|^e``
where ``e`` is the taming exponent (``|x|^0`` is taken as 1, so exponent 0
gives the constant denominator ``1 + (T/N)^alpha``).  The standard Euler
variant sets the denominator to 1 and exists to demonstrate blow-up on
super-linear models; an overflow guard freezes any state whose norm exceeds
1e150 (or turns non-finite) and flags the run diverged, so a blown-up path
cannot poison an ensemble with NaNs.

All stepping runs through one batched kernel over a leading path axis; a
single-path call is a batch of one, which makes serial and fan-out ensemble
execution bit-identical per path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .models import AdditiveSdeModel
from .noise import BrownianPath, TimeGrid

__all__ = [
    "OVERFLOW_GUARD",
    "Variant",
    "TamingConfig",
    "effective_exponent",
    "default_taming_exponent",
    "variant_for_model",
    "tame_drift",
    "tame_diffusion",
    "SolverOutput",
    "EnsembleOutput",
    "integrate",
    "integrate_ensemble",
    "reference_solution",
]

#: State norms beyond this freeze the path and flag it diverged.
OVERFLOW_GUARD = 1e150


class Variant(Enum):
    MULTIPLICATIVE_TAMED = "multiplicative-tamed"
    ADDITIVE_TAMED = "additive-tamed"
    STANDARD_EULER = "standard-euler"


def effective_exponent(alpha: float, l: float) -> float:
    """Taming exponent ceil(2 alpha) * l required for regularization rate alpha."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if l < 0:
        raise ValueError("growth exponent must be nonnegative")
    return math.ceil(2.0 * alpha) * l


def default_taming_exponent(variant: Variant, alpha: float, l: float) -> float:
    """Default exponent: max(2l, ceil(2 alpha) l) multiplicative, ceil(2 alpha) l additive."""
    if variant is Variant.MULTIPLICATIVE_TAMED:
        return max(2.0 * l, effective_exponent(alpha, l))
    if variant is Variant.ADDITIVE_TAMED:
        return effective_exponent(alpha, l)
    return 0.0


def variant_for_model(model) -> Variant:
    return Variant.ADDITIVE_TAMED if model.is_additive else Variant.MULTIPLICATIVE_TAMED


@dataclass(frozen=True)
class TamingConfig:
    """Regularization parameters: rate exponent alpha, taming exponent, variant."""

    alpha: float
    taming_exponent: float
    variant: Variant

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.taming_exponent < 0:
            raise ValueError("taming_exponent must be nonnegative")

    @classmethod
    def for_model(cls, model, alpha: float, taming_exponent: Optional[float] = None,
                  variant: Optional[Variant] = None) -> "TamingConfig":
        """Config with the model's default exponent unless one is given."""
        if variant is None:
            variant = variant_for_model(model)
        if taming_exponent is None:
            taming_exponent = default_taming_exponent(variant, alpha, model.growth_exponent)
        return cls(alpha=alpha, taming_exponent=taming_exponent, variant=variant)


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def _denominator(cfg: TamingConfig, grid: TimeGrid, x: np.ndarray) -> np.ndarray:
    """1 + (T/N)^alpha |x|^e for tamed variants, 1 for standard Euler."""
    if cfg.variant is Variant.STANDARD_EULER:
        return np.ones(x.shape[:-1])
    scale = (grid.horizon / grid.steps) ** cfg.alpha
    return 1.0 + scale * _norm(x) ** cfg.taming_exponent


def tame_drift(model, cfg: TamingConfig, grid: TimeGrid, x) -> np.ndarray:
    """f(x) / (1 + (T/N)^alpha |x|^e); the denominator is >= 1."""
    x = np.asarray(x, dtype=float)
    return model.drift(x) / _denominator(cfg, grid, x)[..., None]


def tame_diffusion(model, cfg: TamingConfig, grid: TimeGrid, x, k: int) -> np.ndarray:
    """g_k(x) with the same denominator; additive diffusion is never tamed."""
    x = np.asarray(x, dtype=float)
    if cfg.variant is Variant.ADDITIVE_TAMED:
        return model.diffusion_col(x, k)
    return model.diffusion_col(x, k) / _denominator(cfg, grid, x)[..., None]


@dataclass
class SolverOutput:
    terminal: np.ndarray
    path: Optional[np.ndarray]  # (N+1, d) grid-point states when requested
    diverged: bool
    steps_taken: int


@dataclass
class EnsembleOutput:
    terminal: np.ndarray  # (B, d)
    diverged: np.ndarray  # (B,) bool
    steps_taken: np.ndarray  # (B,) int
    recorded: Optional[np.ndarray]  # (len(record_indices), B, d)
    record_indices: Optional[np.ndarray]


def integrate_ensemble(
    model,
    cfg: TamingConfig,
    grid: TimeGrid,
    x0,
    increments: np.ndarray,
    record_indices=None,
) -> EnsembleOutput:
    """Run the Euler recursion for a batch of paths on one grid.

    ``increments`` has shape (B, N, m).  ``record_indices`` selects grid
    indices 0..N whose states are stored.  Paths whose candidate state
    overflows the guard (or is non-finite) freeze at their last finite state
    and are flagged diverged.
    """
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 3:
        raise ValueError("increments must have shape (paths, steps, dim_noise)")
    B, N, m = increments.shape
    if N != grid.steps:
        raise ValueError(f"increments have {N} steps but the grid has {grid.steps}")
    if m != model.dim_noise:
        raise ValueError(f"model drives {model.dim_noise} noise dims, path has {m}")
    additive = cfg.variant is Variant.ADDITIVE_TAMED
    if additive != model.is_additive:
        raise ValueError("variant does not match the model's noise structure")

    d = model.dim_state
    x = np.broadcast_to(np.asarray(x0, dtype=float).reshape(-1), (B, d)).astype(float)
    h = grid.step
    tamed = cfg.variant is not Variant.STANDARD_EULER
    scale = (grid.horizon / grid.steps) ** cfg.alpha if tamed else 0.0

    active = np.ones(B, dtype=bool)
    steps_taken = np.full(B, N, dtype=np.int64)

    if record_indices is not None:
        record_indices = np.asarray(record_indices, dtype=np.int64)
        recorded = np.empty((len(record_indices), B, d))
        rec_map = {int(idx): j for j, idx in enumerate(record_indices)}
        if 0 in rec_map:
            recorded[rec_map[0]] = x
    else:
        recorded = None
        rec_map = {}

    for n in range(N):
        if tamed:
            denom = 1.0 + scale * _norm(x) ** cfg.taming_exponent
        else:
            denom = None
        drift = model.drift(x)
        step = h * drift
        if denom is not None:
            step = step / denom[..., None]
        if additive:
            diff = np.zeros_like(x)
            for k in range(m):
                diff += model.sigma[:, k] * increments[:, n, k, None]
            step = step + diff
        else:
            diff = np.zeros_like(x)
            for k in range(m):
                gk = model.diffusion_col(x, k)
                if denom is not None:
                    gk = gk / denom[..., None]
                diff += gk * increments[:, n, k, None]
            step = step + diff
        candidate = x + step
        with np.errstate(invalid="ignore"):
            bad = ~np.all(np.isfinite(candidate), axis=-1)
            bad |= _norm(np.where(np.isfinite(candidate), candidate, 0.0)) > OVERFLOW_GUARD
        newly_frozen = active & bad
        steps_taken[newly_frozen] = n
        advance = active & ~bad
        x = np.where(advance[:, None], candidate, x)
        active = advance
        j = rec_map.get(n + 1)
        if j is not None:
            recorded[j] = x

    return EnsembleOutput(
        terminal=x,
        diverged=~active,
        steps_taken=steps_taken,
        recorded=recorded,
        record_indices=record_indices,
    )


def integrate(
    model, cfg: TamingConfig, grid: TimeGrid, x0, path: BrownianPath, keep_path: bool = False
) -> SolverOutput:
    """Single-path Euler recursion; a batch-of-one call into the ensemble kernel."""
    if path.grid != grid:
        raise ValueError("path grid does not match the integration grid")
    record = np.arange(grid.steps + 1) if keep_path else None
    out = integrate_ensemble(model, cfg, grid, x0, path.increments[None, :, :], record)
    return SolverOutput(
        terminal=out.terminal[0],
        path=out.recorded[:, 0, :] if keep_path else None,
        diverged=bool(out.diverged[0]),
        steps_taken=int(out.steps_taken[0]),
    )


def reference_solution(
    model, grid_fine: TimeGrid, x0, path_fine: BrownianPath, alpha_ref: float
) -> SolverOutput:
    """Fine-grid tamed run standing in for the exact solution."""
    cfg = TamingConfig.for_model(model, alpha=alpha_ref)
    return integrate(model, cfg, grid_fine, x0, path_fine)
