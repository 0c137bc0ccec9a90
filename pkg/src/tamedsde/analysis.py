"""Statistics and experiment drivers: strong-order regression, error-evolution
curves, and two-sample distributional comparison against limit samples.

Every study couples the coarse scheme and the fine reference on the same
Brownian path (fine increments block-summed), fans path simulation out in
fixed chunks keyed by path index, and excludes diverged paths with a count;
a diverged fraction above 1% aborts the study because tamed runs should never
diverge and a larger fraction signals a misconfiguration.  With the same
master seed, serial and threaded execution produce identical results because
each path's noise is a pure function of its index.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from . import limit as limit_mod
from .noise import DRIVING_STREAM, TimeGrid, stream_seed
from .scheme import TamingConfig, Variant, integrate_ensemble
from .version import __version__

__all__ = [
    "DivergenceError",
    "RegressionResult",
    "linregress",
    "KsResult",
    "two_sample_ks",
    "mc_mean_ci",
    "normalization_rate",
    "ErrorEnsemble",
    "build_error_ensemble",
    "StrongOrderResult",
    "strong_order_study",
    "EvolutionResult",
    "error_evolution_study",
    "DistributionResult",
    "error_distribution_study",
    "metadata_line",
    "write_order_csv",
    "write_evolution_csv",
    "write_distribution_csv",
]

#: Maximum tolerated fraction of diverged paths before a study aborts.
MAX_DIVERGED_FRACTION = 0.01

#: Stream tag that derives the limit-sample master seed from the study seed,
#: keeping the two samples of the distribution study independent.
LIMIT_SEED_TAG = 2


class DivergenceError(RuntimeError):
    """Raised when more than MAX_DIVERGED_FRACTION of an ensemble diverged."""

    def __init__(self, fraction: float, context: str):
        super().__init__(
            f"{fraction:.2%} of paths diverged during {context}; "
            "tamed runs should not diverge - check the configuration"
        )
        self.fraction = fraction


# ---------------------------------------------------------------------------
# small statistics


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    points: tuple


def linregress(points) -> RegressionResult:
    """Ordinary least squares line through (x, y) pairs."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.all(xs == xs[0]):
        raise ValueError("need at least two distinct x values")
    xbar, ybar = xs.mean(), ys.mean()
    sxx = np.sum((xs - xbar) ** 2)
    slope = float(np.sum((xs - xbar) * (ys - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ybar) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RegressionResult(slope=slope, intercept=intercept, r_squared=r2, points=tuple(pts))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n_a: int
    n_b: int
    threshold: Optional[float] = None
    exceeds: Optional[bool] = None


def two_sample_ks(a, b, threshold: Optional[float] = None) -> KsResult:
    """Exact sup-norm distance between the two empirical CDFs.

    Evaluated by scanning both sorted samples at every pooled jump point.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if np.isnan(a).any() or np.isnan(b).any():
        raise ValueError("NaN entries are not allowed")
    a = np.sort(a)
    b = np.sort(b)
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    exceeds = None if threshold is None else stat > threshold
    return KsResult(statistic=stat, n_a=int(a.size), n_b=int(b.size),
                    threshold=threshold, exceeds=exceeds)


def mc_mean_ci(samples, level: float = 0.95):
    """Sample mean and normal-approximation CI half-width."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise ValueError("need at least two samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    mean = float(samples.mean())
    half = float(z * samples.std(ddof=1) / math.sqrt(samples.size))
    return mean, half


def normalization_rate(variant: Variant, alpha: float) -> float:
    """Error-normalization exponent: alpha ^ 1/2 multiplicative, alpha ^ 1 additive."""
    if variant is Variant.MULTIPLICATIVE_TAMED:
        return min(alpha, 0.5)
    if variant is Variant.ADDITIVE_TAMED:
        return min(alpha, 1.0)
    raise ValueError("normalization rate is defined for the tamed variants only")


def _mse_ci(err2: np.ndarray, level: float):
    """CLT interval for a mean of squared errors (NaN entries excluded)."""
    vals = err2[~np.isnan(err2)]
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    if vals.size < 2:
        return float("nan"), float("nan")
    return float(vals.mean()), float(z * vals.std(ddof=1) / math.sqrt(vals.size))


# ---------------------------------------------------------------------------
# coupled ensembles


@dataclass
class ErrorEnsemble:
    """Per-path terminal errors of coarse runs vs the reference, normalized.

    ``normalized_errors[s, p]`` is ``N_s^rate * |X_coarse(T) - X_ref(T)|`` for
    coarse step count ``coarse_steps[s]`` and path ``p``; NaN marks a path
    excluded because either run diverged (counted in ``diverged``).
    """

    alpha: float
    variant: Variant
    coarse_steps: tuple
    ref_steps: int
    rate: float
    normalized_errors: np.ndarray  # (S, P)
    diverged: np.ndarray  # (S,) counts
    master_seed: int


def _chunk_ranges(n: int, chunk: int):
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def _fan_out(worker, ranges, threads: int):
    if threads <= 1:
        return [worker(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def _ensemble_increments(grid: TimeGrid, dim: int, master_seed: int, lo: int, hi: int):
    h = grid.step
    out = np.empty((hi - lo, grid.steps, dim))
    for j, idx in enumerate(range(lo, hi)):
        rng = np.random.default_rng(stream_seed(master_seed, idx, DRIVING_STREAM))
        out[j] = rng.standard_normal((grid.steps, dim)) * math.sqrt(h)
    return out


def _block_sum(increments: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return increments
    B, N, m = increments.shape
    blocks = increments.reshape(B, N // factor, factor, m)
    out = blocks[:, :, 0, :].copy()
    for j in range(1, factor):
        out += blocks[:, :, j, :]
    return out


def build_error_ensemble(
    model,
    variant: Variant,
    alpha: float,
    step_list: Sequence[int],
    ref_steps: int,
    paths: int,
    master_seed: int,
    *,
    horizon: float = 1.0,
    x0: float = 1.0,
    taming_exponent: Optional[float] = None,
    alpha_ref: Optional[float] = None,
    keep_signed: bool = False,
    threads: int = 1,
    chunk: int = 256,
):
    """Couple coarse runs against a fine reference on shared Brownian paths.

    Returns ``(ErrorEnsemble, signed)`` where ``signed`` maps each coarse step
    count to the raw signed terminal difference array (paths, d) when
    ``keep_signed`` is set (diverged rows NaN), else an empty dict.
    """
    step_list = [int(n) for n in step_list]
    if paths < 2:
        raise ValueError("paths must be >= 2")
    for n in step_list:
        if ref_steps % n != 0:
            raise ValueError(f"coarse step count {n} does not divide ref_steps {ref_steps}")
        if ref_steps // n < 16:
            raise ValueError(
                f"reference must refine every coarse grid by a factor >= 16 "
                f"(got {ref_steps}/{n})"
            )
    rate = normalization_rate(variant, alpha)
    if alpha_ref is None:
        alpha_ref = alpha
    cfg = TamingConfig.for_model(model, alpha=alpha, taming_exponent=taming_exponent,
                                 variant=variant)
    ref_cfg = TamingConfig.for_model(model, alpha=alpha_ref)
    ref_grid = TimeGrid(horizon=horizon, steps=ref_steps)
    grids = {n: TimeGrid(horizon=horizon, steps=n) for n in step_list}
    d, m = model.dim_state, model.dim_noise

    def worker(lo, hi):
        fine = _ensemble_increments(ref_grid, m, master_seed, lo, hi)
        ref = integrate_ensemble(model, ref_cfg, ref_grid, x0, fine)
        norms = np.empty((len(step_list), hi - lo))
        divs = np.zeros(len(step_list), dtype=np.int64)
        signed_chunk = {}
        for s, n in enumerate(step_list):
            coarse_inc = _block_sum(fine, ref_steps // n)
            coarse = integrate_ensemble(model, cfg, grids[n], x0, coarse_inc)
            diff = coarse.terminal - ref.terminal
            bad = coarse.diverged | ref.diverged
            diff[bad] = np.nan
            divs[s] = int(bad.sum())
            norms[s] = float(n) ** rate * np.sqrt(np.sum(diff * diff, axis=-1))
            if keep_signed:
                signed_chunk[n] = float(n) ** rate * diff
        return norms, divs, signed_chunk

    results = _fan_out(worker, _chunk_ranges(paths, chunk), threads)
    normalized = np.concatenate([r[0] for r in results], axis=1)
    diverged = np.sum([r[1] for r in results], axis=0)
    signed = {}
    if keep_signed:
        for n in step_list:
            signed[n] = np.concatenate([r[2][n] for r in results], axis=0)

    ensemble = ErrorEnsemble(
        alpha=alpha,
        variant=variant,
        coarse_steps=tuple(step_list),
        ref_steps=ref_steps,
        rate=rate,
        normalized_errors=normalized,
        diverged=diverged,
        master_seed=master_seed,
    )
    return ensemble, signed


# ---------------------------------------------------------------------------
# studies


@dataclass
class StrongOrderResult:
    alpha: float
    rate: float
    regression: RegressionResult
    rows: list  # (steps, h, rmse, ci_half, n_diverged)
    ensemble: ErrorEnsemble


def strong_order_study(
    model,
    variant: Variant,
    alpha: float,
    step_list: Sequence[int],
    ref_steps: int,
    paths: int,
    master_seed: int,
    *,
    horizon: float = 1.0,
    x0: float = 1.0,
    taming_exponent: Optional[float] = None,
    alpha_ref: Optional[float] = None,
    level: float = 0.95,
    threads: int = 1,
    chunk: int = 256,
) -> StrongOrderResult:
    """RMSE of the coupled terminal error per step size, with a log2-log2 fit."""
    ensemble, _ = build_error_ensemble(
        model, variant, alpha, step_list, ref_steps, paths, master_seed,
        horizon=horizon, x0=x0, taming_exponent=taming_exponent,
        alpha_ref=alpha_ref, threads=threads, chunk=chunk,
    )
    frac = float(ensemble.diverged.sum()) / (len(step_list) * paths)
    if frac > MAX_DIVERGED_FRACTION:
        raise DivergenceError(frac, "strong_order_study")

    rows = []
    points = []
    for s, n in enumerate(ensemble.coarse_steps):
        h = horizon / n
        raw = ensemble.normalized_errors[s] * float(n) ** (-ensemble.rate)
        mse, mse_half = _mse_ci(raw**2, level)
        rmse = math.sqrt(mse)
        ci_half = mse_half / (2.0 * rmse) if rmse > 0 else 0.0
        rows.append((n, h, rmse, ci_half, int(ensemble.diverged[s])))
        points.append((math.log2(h), math.log2(rmse)))
    reg = linregress(points)
    return StrongOrderResult(
        alpha=alpha, rate=ensemble.rate, regression=reg, rows=rows, ensemble=ensemble
    )


@dataclass
class EvolutionResult:
    alphas: tuple
    times: np.ndarray  # (K+1,)
    mse: np.ndarray  # (A, K+1)
    half_width: np.ndarray  # (A, K+1)
    diverged: np.ndarray  # (A,)
    h: float
    ref_h: float


def error_evolution_study(
    model,
    variant: Variant,
    alphas: Sequence[float],
    h: float,
    ref_h: float,
    horizon: float,
    paths: int,
    master_seed: int,
    *,
    x0: float = 1.0,
    taming_exponent: Optional[float] = None,
    alpha_ref: Optional[float] = None,
    level: float = 0.95,
    threads: int = 1,
    chunk: int = 256,
) -> EvolutionResult:
    """MSE at every coarse grid time, per alpha, on coupled paths."""
    n_coarse = round(horizon / h)
    if abs(n_coarse * h - horizon) > 1e-9 * horizon or n_coarse < 1:
        raise ValueError("horizon must be an integer multiple of h")
    factor = round(h / ref_h)
    if abs(factor * ref_h - h) > 1e-9 * h or factor < 1:
        raise ValueError("ref_h must divide h evenly")
    n_ref = n_coarse * factor
    coarse_grid = TimeGrid(horizon=horizon, steps=n_coarse)
    ref_grid = TimeGrid(horizon=horizon, steps=n_ref)
    d, m = model.dim_state, model.dim_noise
    coarse_rec = np.arange(n_coarse + 1)
    ref_rec = coarse_rec * factor

    alphas = tuple(float(a) for a in alphas)
    mse = np.empty((len(alphas), n_coarse + 1))
    half = np.empty_like(mse)
    diverged = np.zeros(len(alphas), dtype=np.int64)

    for a_idx, alpha in enumerate(alphas):
        cfg = TamingConfig.for_model(model, alpha=alpha, taming_exponent=taming_exponent,
                                     variant=variant)
        ref_cfg = TamingConfig.for_model(model, alpha=alpha if alpha_ref is None else alpha_ref)

        def worker(lo, hi):
            fine = _ensemble_increments(ref_grid, m, master_seed, lo, hi)
            ref = integrate_ensemble(model, ref_cfg, ref_grid, x0, fine, ref_rec)
            coarse_inc = _block_sum(fine, factor)
            coarse = integrate_ensemble(model, cfg, coarse_grid, x0, coarse_inc, coarse_rec)
            err2 = np.sum((coarse.recorded - ref.recorded) ** 2, axis=-1)  # (K+1, B)
            bad = coarse.diverged | ref.diverged
            err2[:, bad] = np.nan
            return err2, int(bad.sum())

        results = _fan_out(worker, _chunk_ranges(paths, chunk), threads)
        err2 = np.concatenate([r[0] for r in results], axis=1)
        diverged[a_idx] = sum(r[1] for r in results)
        for t_idx in range(n_coarse + 1):
            mse[a_idx, t_idx], half[a_idx, t_idx] = _mse_ci(err2[t_idx], level)
        # t = 0: identical initial condition, zero error without an interval
        mse[a_idx, 0], half[a_idx, 0] = 0.0, 0.0

    frac = float(diverged.sum()) / (len(alphas) * paths)
    if frac > MAX_DIVERGED_FRACTION:
        raise DivergenceError(frac, "error_evolution_study")
    return EvolutionResult(
        alphas=alphas,
        times=coarse_grid.times(),
        mse=mse,
        half_width=half,
        diverged=diverged,
        h=h,
        ref_h=ref_h,
    )


@dataclass
class DistributionResult:
    alpha: float
    rate: float
    coarse_steps: int
    ref_steps: int
    ks: list  # KsResult per state coordinate
    sample_a: np.ndarray  # (paths, d) normalized empirical errors
    sample_b: np.ndarray  # (limit_paths, d) limit-process samples
    mean_a: np.ndarray
    mean_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    se_mean_a: np.ndarray
    se_var_a: np.ndarray
    n_diverged: int

    @property
    def max_ks(self) -> float:
        return max(k.statistic for k in self.ks)


def error_distribution_study(
    model,
    variant: Variant,
    alpha: float,
    coarse_steps: int,
    paths: int,
    limit_paths: int,
    master_seed: int,
    *,
    ref_steps: Optional[int] = None,
    fine_steps: int = 4096,
    horizon: float = 1.0,
    x0: float = 1.0,
    taming_exponent: Optional[float] = None,
    alpha_ref: Optional[float] = None,
    ks_threshold: Optional[float] = None,
    threads: int = 1,
    chunk: int = 256,
) -> DistributionResult:
    """Two-sample comparison of normalized errors against limit samples.

    Sample A uses `paths` coupled coarse/reference runs; sample B uses
    `limit_paths` limit-process runs under an independently derived master
    seed.  The two samples are independent because the weak limit makes
    coupling unnecessary and independence keeps the KS test clean.
    """
    if paths < 100 or limit_paths < 100:
        raise ValueError("paths and limit_paths must both be >= 100")
    if ref_steps is None:
        ref_steps = 64 * coarse_steps
    ensemble, signed = build_error_ensemble(
        model, variant, alpha, [coarse_steps], ref_steps, paths, master_seed,
        horizon=horizon, x0=x0, taming_exponent=taming_exponent,
        alpha_ref=alpha_ref, keep_signed=True, threads=threads, chunk=chunk,
    )
    frac = float(ensemble.diverged.sum()) / paths
    if frac > MAX_DIVERGED_FRACTION:
        raise DivergenceError(frac, "error_distribution_study")

    sample_a = signed[coarse_steps]
    keep = ~np.isnan(sample_a).any(axis=-1)
    sample_a = sample_a[keep]

    limit_cfg = limit_mod.LimitConfig(
        alpha=alpha,
        horizon=horizon,
        fine_steps=fine_steps,
        master_seed=stream_seed(master_seed, 0, LIMIT_SEED_TAG),
        x0=x0,
    )
    sample_b = limit_mod.sample_terminal_errors(model, limit_cfg, limit_paths, chunk=chunk)

    d = model.dim_state
    ks = [
        two_sample_ks(sample_a[:, j], sample_b[:, j], threshold=ks_threshold)
        for j in range(d)
    ]
    n_a = sample_a.shape[0]
    var_a = sample_a.var(axis=0, ddof=1)
    return DistributionResult(
        alpha=alpha,
        rate=ensemble.rate,
        coarse_steps=coarse_steps,
        ref_steps=ref_steps,
        ks=ks,
        sample_a=sample_a,
        sample_b=sample_b,
        mean_a=sample_a.mean(axis=0),
        mean_b=sample_b.mean(axis=0),
        var_a=var_a,
        var_b=sample_b.var(axis=0, ddof=1),
        se_mean_a=sample_a.std(axis=0, ddof=1) / math.sqrt(n_a),
        se_var_a=var_a * math.sqrt(2.0 / (n_a - 1)),
        n_diverged=int(ensemble.diverged.sum()),
    )


# ---------------------------------------------------------------------------
# CSV emission


def metadata_line(config: dict) -> str:
    """Single comment line embedding version, config hash, and the config itself."""
    items = sorted((str(k), repr(v)) for k, v in config.items())
    canon = "|".join(f"{k}={v}" for k, v in items)
    digest = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return f"# tamedsde={__version__} config_sha256={digest} {canon}"


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_order_csv(path, result: StrongOrderResult, config: dict) -> None:
    lines = [metadata_line(config), "h,rmse,ci"]
    for _, h, rmse, ci, _ in result.rows:
        lines.append(f"{_fmt(h)},{_fmt(rmse)},{_fmt(ci)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_evolution_csv(path, result: EvolutionResult, config: dict) -> None:
    lines = [metadata_line(config), "t,alpha,mse,ci"]
    for a_idx, alpha in enumerate(result.alphas):
        for t_idx, t in enumerate(result.times):
            lines.append(
                f"{_fmt(t)},{_fmt(alpha)},{_fmt(result.mse[a_idx, t_idx])},"
                f"{_fmt(result.half_width[a_idx, t_idx])}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_distribution_csv(path, result: DistributionResult, config: dict) -> None:
    lines = [metadata_line(config),
             "coordinate,ks,n_a,n_b,mean_a,mean_b,var_a,var_b"]
    for j, ks in enumerate(result.ks):
        lines.append(
            f"{j},{_fmt(ks.statistic)},{ks.n_a},{ks.n_b},"
            f"{_fmt(result.mean_a[j])},{_fmt(result.mean_b[j])},"
            f"{_fmt(result.var_a[j])},{_fmt(result.var_b[j])}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
