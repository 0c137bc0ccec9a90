"""Co-simulation of the error-scaling limit processes.

For the tamed schemes, the normalized terminal error converges in
distribution to the terminal value of a linear SDE driven along the exact
solution path: the original Brownian motion plus independent auxiliary noise.
This module integrates those limit SDEs on a fine grid, with the state
produced by the fine tamed scheme on the same driving path (the best
available proxy for the exact solution, matching the reference-solution
practice of the convergence studies).

Multiplicative case (rate exponent alpha in (0, 1], growth exponent l):

    dU = Df(X) U dt + sum_k Dg_k(X) U dW_k
         - 1{alpha <= 1/2} T^alpha [ f(X)|X|^{2l} dt + sum_k g_k(X)|X|^{2l} dW_k ]
         + 1{alpha >= 1/2} sqrt(2T)/2 sum_{k,u} Dg_k(X) g_u(X) dWtilde_{ku}

with Wtilde an m^2-dimensional Brownian motion independent of W, component
(k, u) stored row-major at index k*m + u.  At alpha = 1/2 both indicator
families are active, exactly as the closed-interval indicators state.

Additive case (alpha > 0, l_alpha = ceil(2 alpha) l):

    dV = Df(Y) V dt - 1{alpha <= 1} T^alpha f(Y)|Y|^{l_alpha} dt
         - 1{alpha >= 1} [ (T/2) Df(Y) f(Y) dt + (T/2) Df(Y) sigma dW
                           + (T/4) sum_k D2f(Y)(sigma_k, sigma_k) dt
                           + (T/sqrt(12)) Df(Y) sigma dWhat ]

with What an m-dimensional Brownian motion independent of W.

The limit SDE itself is discretized by plain Euler with left-endpoint
coefficients: it is linear in the error variable, so no taming is needed.
Auxiliary increments are only generated when their indicator is active, so
output is invariant under the auxiliary seed below the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import AdditiveSdeModel, SdeModel
from .noise import AUXILIARY_STREAM, DRIVING_STREAM, TimeGrid, stream_seed
from .scheme import TamingConfig, effective_exponent

__all__ = [
    "LimitConfig",
    "LimitSample",
    "simulate_limit_multiplicative",
    "simulate_limit_additive",
    "sample_terminal_errors",
    "MeanSquareCurve",
    "limit_mean_square_curve",
]

#: Fewer ensemble members than this flags the CLT half-widths low-confidence.
LOW_CONFIDENCE_ENSEMBLE = 100


@dataclass(frozen=True)
class LimitConfig:
    """Rate exponent, horizon, fine grid, and master seed for limit sampling."""

    alpha: float
    horizon: float
    fine_steps: int = 4096
    master_seed: int = 0
    x0: float = 1.0
    aux_tag: int = AUXILIARY_STREAM

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.fine_steps < 1024:
            # default resolution floor h <= T / 2^10
            raise ValueError("fine_steps must be at least 1024")
        if self.aux_tag == DRIVING_STREAM:
            raise ValueError("aux_tag collides with the driving stream tag")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(horizon=self.horizon, steps=self.fine_steps)


@dataclass
class LimitSample:
    """Terminal value of the limit error process and of the state path."""

    terminal_error: np.ndarray
    terminal_state: np.ndarray
    alpha: float
    path_index: int
    master_seed: int
    terms: Optional[dict] = field(default=None)


def _increments(grid: TimeGrid, dim: int, master_seed: int, indices, tag: int) -> np.ndarray:
    """Stack per-index increment arrays (B, N, dim); pure in (seed, index, tag)."""
    h = grid.step
    out = np.empty((len(indices), grid.steps, dim))
    for j, idx in enumerate(indices):
        rng = np.random.default_rng(stream_seed(master_seed, int(idx), tag))
        out[j] = rng.standard_normal((grid.steps, dim)) * math.sqrt(h)
    return out


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", mat, vec)


def _simulate_mult_batch(model, cfg, indices, initial_error=None, keep_terms=False,
                         record_indices=None):
    if not isinstance(model, SdeModel) or model.is_additive:
        raise TypeError("multiplicative limit needs a state-dependent-diffusion model")
    if cfg.alpha > 1.0:
        raise ValueError("multiplicative limit is stated for alpha in (0, 1]")
    grid = cfg.grid
    B = len(indices)
    d, m = model.dim_state, model.dim_noise
    T, h = cfg.horizon, grid.step
    l = model.growth_exponent
    bias_on = cfg.alpha <= 0.5
    aux_on = cfg.alpha >= 0.5
    t_alpha = T**cfg.alpha
    aux_coef = math.sqrt(2.0 * T) / 2.0

    dW = _increments(grid, m, cfg.master_seed, indices, DRIVING_STREAM)
    dWt = (
        _increments(grid, m * m, cfg.master_seed, indices, cfg.aux_tag)
        if aux_on
        else None
    )

    scheme_cfg = TamingConfig.for_model(model, alpha=cfg.alpha)
    scale = (T / grid.steps) ** scheme_cfg.alpha
    exponent = scheme_cfg.taming_exponent

    x = np.full((B, d), cfg.x0)
    if initial_error is None:
        u = np.zeros((B, d))
    else:
        u = np.broadcast_to(np.asarray(initial_error, dtype=float), (B, d)).copy()
    terms = (
        {name: np.zeros((B, d)) for name in
         ("linear", "bias_drift", "bias_diffusion", "auxiliary")}
        if keep_terms
        else None
    )
    if record_indices is not None:
        rec = np.empty((len(record_indices), B, d))
        rec_map = {int(i): j for j, i in enumerate(record_indices)}
        if 0 in rec_map:
            rec[rec_map[0]] = u
    else:
        rec, rec_map = None, {}

    for n in range(grid.steps):
        jf = model.drift_jacobian(x)
        du = _matvec(jf, u) * h
        for k in range(m):
            du += _matvec(model.diffusion_jacobian(x, k), u) * dW[:, n, k, None]
        if keep_terms:
            terms["linear"] += du
        if bias_on:
            pw = np.sum(x * x, axis=-1) ** l  # |x|^{2l}
            b_drift = -t_alpha * model.drift(x) * pw[:, None] * h
            b_diff = np.zeros((B, d))
            for k in range(m):
                b_diff += -t_alpha * model.diffusion_col(x, k) * pw[:, None] * dW[:, n, k, None]
            du = du + b_drift + b_diff
            if keep_terms:
                terms["bias_drift"] += b_drift
                terms["bias_diffusion"] += b_diff
        if aux_on:
            a = np.zeros((B, d))
            for k in range(m):
                jg = model.diffusion_jacobian(x, k)
                for v in range(m):
                    a += aux_coef * _matvec(jg, model.diffusion_col(x, v)) * dWt[:, n, k * m + v, None]
            du = du + a
            if keep_terms:
                terms["auxiliary"] += a

        # fine tamed step for the state, same driving increments
        denom = 1.0 + scale * np.sqrt(np.sum(x * x, axis=-1)) ** exponent
        dx = h * model.drift(x) / denom[:, None]
        for k in range(m):
            dx += model.diffusion_col(x, k) / denom[:, None] * dW[:, n, k, None]
        u = u + du
        x = x + dx
        j = rec_map.get(n + 1)
        if j is not None:
            rec[j] = u
    return u, x, terms, rec


def _simulate_additive_batch(model, cfg, indices, initial_error=None, keep_terms=False,
                             record_indices=None):
    if not isinstance(model, AdditiveSdeModel):
        raise TypeError("additive limit needs a constant-diffusion model")
    grid = cfg.grid
    B = len(indices)
    d, m = model.dim_state, model.dim_noise
    T, h = cfg.horizon, grid.step
    l_alpha = effective_exponent(cfg.alpha, model.growth_exponent)
    bias_on = cfg.alpha <= 1.0
    high_on = cfg.alpha >= 1.0
    t_alpha = T**cfg.alpha

    dW = _increments(grid, m, cfg.master_seed, indices, DRIVING_STREAM)
    dWh = (
        _increments(grid, m, cfg.master_seed, indices, cfg.aux_tag)
        if high_on
        else None
    )

    scheme_cfg = TamingConfig.for_model(model, alpha=cfg.alpha)
    scale = (T / grid.steps) ** scheme_cfg.alpha
    exponent = scheme_cfg.taming_exponent

    y = np.full((B, d), cfg.x0)
    if initial_error is None:
        v = np.zeros((B, d))
    else:
        v = np.broadcast_to(np.asarray(initial_error, dtype=float), (B, d)).copy()
    names = ("linear", "bias_drift", "drift_correction", "diffusion_correction",
             "hessian_correction", "auxiliary")
    terms = {name: np.zeros((B, d)) for name in names} if keep_terms else None
    if record_indices is not None:
        rec = np.empty((len(record_indices), B, d))
        rec_map = {int(i): j for j, i in enumerate(record_indices)}
        if 0 in rec_map:
            rec[rec_map[0]] = v
    else:
        rec, rec_map = None, {}

    for n in range(grid.steps):
        jf = model.drift_jacobian(y)
        dv = _matvec(jf, v) * h
        if keep_terms:
            terms["linear"] += dv
        if bias_on:
            pw = np.sqrt(np.sum(y * y, axis=-1)) ** l_alpha
            b = -t_alpha * model.drift(y) * pw[:, None] * h
            dv = dv + b
            if keep_terms:
                terms["bias_drift"] += b
        if high_on:
            fy = model.drift(y)
            c_drift = -(T / 2.0) * _matvec(jf, fy) * h
            sig_dW = np.zeros((B, d))
            sig_dWh = np.zeros((B, d))
            for k in range(m):
                sig_dW += model.sigma[:, k] * dW[:, n, k, None]
                sig_dWh += model.sigma[:, k] * dWh[:, n, k, None]
            c_diff = -(T / 2.0) * _matvec(jf, sig_dW)
            c_hess = np.zeros((B, d))
            for k in range(m):
                sk = np.broadcast_to(model.sigma[:, k], (B, d))
                c_hess += -(T / 4.0) * model.drift_hessian_form(y, sk, sk) * h
            c_aux = -(T / math.sqrt(12.0)) * _matvec(jf, sig_dWh)
            dv = dv + c_drift + c_diff + c_hess + c_aux
            if keep_terms:
                terms["drift_correction"] += c_drift
                terms["diffusion_correction"] += c_diff
                terms["hessian_correction"] += c_hess
                terms["auxiliary"] += c_aux

        denom = 1.0 + scale * np.sqrt(np.sum(y * y, axis=-1)) ** exponent
        dy = h * model.drift(y) / denom[:, None]
        for k in range(m):
            dy += model.sigma[:, k] * dW[:, n, k, None]
        v = v + dv
        y = y + dy
        j = rec_map.get(n + 1)
        if j is not None:
            rec[j] = v
    return v, y, terms, rec


def simulate_limit_multiplicative(
    model, cfg: LimitConfig, path_index: int, *, initial_error=None, keep_terms=False
) -> LimitSample:
    """One limit sample for the multiplicative scheme's normalized error."""
    u, x, terms, _ = _simulate_mult_batch(
        model, cfg, [path_index], initial_error=initial_error, keep_terms=keep_terms
    )
    return LimitSample(
        terminal_error=u[0],
        terminal_state=x[0],
        alpha=cfg.alpha,
        path_index=path_index,
        master_seed=cfg.master_seed,
        terms={k: val[0] for k, val in terms.items()} if terms else None,
    )


def simulate_limit_additive(
    model, cfg: LimitConfig, path_index: int, *, initial_error=None, keep_terms=False
) -> LimitSample:
    """One limit sample for the additive scheme's normalized error."""
    v, y, terms, _ = _simulate_additive_batch(
        model, cfg, [path_index], initial_error=initial_error, keep_terms=keep_terms
    )
    return LimitSample(
        terminal_error=v[0],
        terminal_state=y[0],
        alpha=cfg.alpha,
        path_index=path_index,
        master_seed=cfg.master_seed,
        terms={k: val[0] for k, val in terms.items()} if terms else None,
    )


def sample_terminal_errors(model, cfg: LimitConfig, n_samples: int, *, chunk: int = 512,
                           start_index: int = 0) -> np.ndarray:
    """Terminal limit errors for path indices start..start+n-1, shape (n, d)."""
    kernel = _simulate_additive_batch if model.is_additive else _simulate_mult_batch
    out = np.empty((n_samples, model.dim_state))
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        idx = range(start_index + lo, start_index + hi)
        out[lo:hi] = kernel(model, cfg, list(idx))[0]
    return out


@dataclass
class MeanSquareCurve:
    times: np.ndarray
    mean_square: np.ndarray
    half_width: np.ndarray
    ensemble_size: int
    low_confidence: bool


def limit_mean_square_curve(
    model, cfg: LimitConfig, ensemble_size: int, *, n_times: int = 64,
    level: float = 0.95, chunk: int = 512,
) -> MeanSquareCurve:
    """Monte Carlo estimate of E|limit error(t)|^2 on a time subgrid.

    Half-widths are CLT normal-approximation intervals at the given level;
    small ensembles are flagged low-confidence.
    """
    from statistics import NormalDist

    if ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2")
    grid = cfg.grid
    stride = max(1, grid.steps // n_times)
    record = np.arange(0, grid.steps + 1, stride)
    if record[-1] != grid.steps:
        record = np.append(record, grid.steps)
    kernel = _simulate_additive_batch if model.is_additive else _simulate_mult_batch

    sq = np.empty((ensemble_size, len(record)))
    for lo in range(0, ensemble_size, chunk):
        hi = min(lo + chunk, ensemble_size)
        _, _, _, rec = kernel(model, cfg, list(range(lo, hi)), record_indices=record)
        sq[lo:hi] = np.sum(rec**2, axis=-1).T
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    msq = sq.mean(axis=0)
    half = z * sq.std(axis=0, ddof=1) / math.sqrt(ensemble_size)
    return MeanSquareCurve(
        times=record * grid.step,
        mean_square=msq,
        half_width=half,
        ensemble_size=ensemble_size,
        low_confidence=ensemble_size < LOW_CONFIDENCE_ENSEMBLE,
    )
