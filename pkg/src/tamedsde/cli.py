"""Command-line front end.

Subcommands: ``converge`` (strong-order study), ``evolve`` (mean-square error
evolution), ``distribution`` (normalized errors vs limit samples), and
``validate`` (sampled structural checks for a model).

Configuration is a flat ``key=value`` text file (``--config``), overridden by
command-line flags; flags always win.  Outputs are CSV tables (canonical) and
standalone SVG plots, every file starting with one metadata comment line
(version, config hash, and the full sorted config including the seed).
Identical configurations produce byte-identical outputs, independent of the
thread count, because all randomness is keyed per path index.

Exit codes: 0 success, 1 validation error, 2 divergence abort, 3 KS threshold
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import analysis, svg
from .models import BUILTIN_NAMES, builtin_model, check_derivatives, validate_monotonicity
from .scheme import variant_for_model

__all__ = ["RunConfig", "main"]

_ENV_THREADS = "TAMEDSDE_THREADS"


@dataclass
class RunConfig:
    model: str = "quintic-mult"
    alphas: tuple = (0.2, 0.4, 0.5, 1.0)
    horizon: float = 1.0
    x0: float = 1.0
    steps: tuple = (256, 512, 1024, 2048, 4096)
    ref_steps: int = 65536
    paths: int = 1000
    limit_paths: int = 1000
    fine_steps: int = 4096
    h: float = 1e-2
    ref_h: float = 1e-4
    seed: int = 12345
    outdir: str = "out"
    threads: int = 0  # 0: take TAMEDSDE_THREADS, else 1
    ks_threshold: float = 0.1
    taming_exponent: float = -1.0  # negative: use the model default
    alpha_ref: float = -1.0  # negative: same alpha as the study
    p0: float = 3.0
    n_samples: int = 2000
    radius: float = 5.0
    a: float = -1.0
    b: tuple = (0.5,)
    sigma: float = 1.0

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(_ENV_THREADS, "")
        return int(env) if env.strip().isdigit() and int(env) > 0 else 1

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_TUPLE_FLOAT = {"alphas", "b"}
_TUPLE_INT = {"steps"}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in _TUPLE_FLOAT:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if name in _TUPLE_INT:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys are an error."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tamedsde",
        description="Tamed Euler schemes for super-linear SDEs: convergence, "
        "error-evolution, and error-distribution studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (
        ("converge", "strong-order study: RMSE vs step size in log-log scale"),
        ("evolve", "evolution of the mean-square error over time"),
        ("distribution", "normalized errors vs co-simulated limit samples"),
        ("validate", "sampled derivative and monotonicity checks for a model"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--model", help=f"built-in model ({', '.join(BUILTIN_NAMES)})")
        p.add_argument("--alphas", help="comma list of regularization exponents")
        p.add_argument("--horizon", help="time horizon T")
        p.add_argument("--x0", help="initial state (scalar, broadcast)")
        p.add_argument("--steps", help="comma list of coarse step counts")
        p.add_argument("--ref-steps", dest="ref_steps", help="reference step count")
        p.add_argument("--paths", help="Monte Carlo sample paths")
        p.add_argument("--limit-paths", dest="limit_paths", help="limit-process samples")
        p.add_argument("--fine-steps", dest="fine_steps", help="limit-process fine grid")
        p.add_argument("--h", help="evolution coarse step size")
        p.add_argument("--ref-h", dest="ref_h", help="evolution reference step size")
        p.add_argument("--seed", help="master seed")
        p.add_argument("--outdir", help="output directory")
        p.add_argument("--threads", help=f"worker threads (default ${_ENV_THREADS} or 1)")
        p.add_argument("--ks-threshold", dest="ks_threshold", help="KS decision threshold")
        p.add_argument("--taming-exponent", dest="taming_exponent",
                       help="override the model's default taming exponent")
        p.add_argument("--alpha-ref", dest="alpha_ref",
                       help="regularization exponent for the reference run")
        p.add_argument("--p0", help="monotonicity parameter (validate)")
        p.add_argument("--n-samples", dest="n_samples", help="validation sample pairs")
        p.add_argument("--radius", help="validation sampling radius")
        p.add_argument("--a", help="linear model drift coefficient")
        p.add_argument("--b", help="linear model diffusion coefficients (comma list)")
        p.add_argument("--sigma", help="additive model diffusion constant")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = replace(cfg, **parse_config_file(args.config))
    overrides = {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            overrides[f.name] = _parse_value(f.name, str(raw))
    return replace(cfg, **overrides)


def _model_from(cfg: RunConfig):
    return builtin_model(cfg.model, a=cfg.a, b=cfg.b, sigma=cfg.sigma)


def _common_kwargs(cfg: RunConfig) -> dict:
    kw = dict(horizon=cfg.horizon, x0=cfg.x0, threads=cfg.resolved_threads())
    if cfg.taming_exponent >= 0:
        kw["taming_exponent"] = cfg.taming_exponent
    if cfg.alpha_ref > 0:
        kw["alpha_ref"] = cfg.alpha_ref
    return kw


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_converge(cfg: RunConfig) -> int:
    model = _model_from(cfg)
    variant = variant_for_model(model)
    out = _outdir(cfg)
    meta = cfg.as_dict()
    series = []
    for alpha in cfg.alphas:
        res = analysis.strong_order_study(
            model, variant, alpha, cfg.steps, cfg.ref_steps, cfg.paths, cfg.seed,
            **_common_kwargs(cfg),
        )
        analysis.write_order_csv(out / f"converge_{alpha:g}.csv", res,
                                 {**meta, "alpha": alpha})
        hs = [row[1] for row in res.rows]
        rmses = [row[2] for row in res.rows]
        series.append(svg.Series(f"alpha={alpha:g} (slope {res.regression.slope:.3f})",
                                 hs, rmses))
        ref = [rmses[0] * (h / hs[0]) ** res.rate for h in hs]
        series.append(svg.Series(f"slope {res.rate:g} reference", hs, ref, dashed=True))
        print(f"alpha={alpha:g}: fitted slope {res.regression.slope:.4f} "
              f"(target {res.rate:g}, R^2 {res.regression.r_squared:.4f})")
    (out / "converge.svg").write_text(svg.line_plot(
        series, title=f"Strong order, {model.name}", xlabel="step size h",
        ylabel="RMSE at T", xlog2=True, ylog2=True,
    ))
    return 0


def cmd_evolve(cfg: RunConfig) -> int:
    model = _model_from(cfg)
    variant = variant_for_model(model)
    out = _outdir(cfg)
    res = analysis.error_evolution_study(
        model, variant, cfg.alphas, cfg.h, cfg.ref_h, cfg.horizon, cfg.paths, cfg.seed,
        x0=cfg.x0, threads=cfg.resolved_threads(),
        **({"taming_exponent": cfg.taming_exponent} if cfg.taming_exponent >= 0 else {}),
        **({"alpha_ref": cfg.alpha_ref} if cfg.alpha_ref > 0 else {}),
    )
    analysis.write_evolution_csv(out / "evolve.csv", res, cfg.as_dict())
    series = [
        svg.Series(f"alpha={alpha:g}", res.times[1:], res.mse[a_idx, 1:])
        for a_idx, alpha in enumerate(res.alphas)
    ]
    (out / "evolve.svg").write_text(svg.line_plot(
        series, title=f"Mean-square error evolution, {model.name} (h={cfg.h:g})",
        xlabel="t", ylabel="MSE",
    ))
    for a_idx, alpha in enumerate(res.alphas):
        print(f"alpha={alpha:g}: MSE(T) = {res.mse[a_idx, -1]:.6g} "
              f"+- {res.half_width[a_idx, -1]:.2g}")
    return 0


def cmd_distribution(cfg: RunConfig) -> int:
    model = _model_from(cfg)
    variant = variant_for_model(model)
    out = _outdir(cfg)
    threshold_hit = False
    for alpha in cfg.alphas:
        for n in cfg.steps:
            res = analysis.error_distribution_study(
                model, variant, alpha, n, cfg.paths, cfg.limit_paths, cfg.seed,
                fine_steps=cfg.fine_steps, ks_threshold=cfg.ks_threshold,
                **_common_kwargs(cfg),
            )
            tag = f"{alpha:g}_N{n}"
            analysis.write_distribution_csv(
                out / f"distribution_{tag}.csv", res,
                {**cfg.as_dict(), "alpha": alpha, "coarse_steps": n},
            )
            (out / f"distribution_{tag}.svg").write_text(svg.histogram_overlay(
                res.sample_a[:, 0], res.sample_b[:, 0],
                labels=("normalized error", "limit sample"),
                title=f"{model.name}, alpha={alpha:g}, N={n}",
                xlabel="terminal error (coordinate 0)",
            ))
            print(f"alpha={alpha:g} N={n}: KS={res.max_ks:.4f} "
                  f"(threshold {cfg.ks_threshold:g}), mean {res.mean_a[0]:+.4f} vs "
                  f"{res.mean_b[0]:+.4f}, var {res.var_a[0]:.4f} vs {res.var_b[0]:.4f}")
            if any(k.exceeds for k in res.ks):
                threshold_hit = True
    return 3 if threshold_hit else 0


def cmd_validate(cfg: RunConfig) -> int:
    model = _model_from(cfg)
    deriv = check_derivatives(model, n_points=100, radius=cfg.radius, rng_seed=cfg.seed)
    report = validate_monotonicity(
        model, p0=cfg.p0, n_samples=cfg.n_samples, radius=cfg.radius, rng_seed=cfg.seed
    )
    print(f"derivative check ({deriv.n_points} points, radius {deriv.radius:g}):")
    for name, err in deriv.max_rel_errors.items():
        print(f"  {name}: max relative deviation {err:.3e}")
    if deriv.fd_fallbacks:
        print(f"  finite-difference fallbacks: {sorted(deriv.fd_fallbacks)}")
    for line in report.lines():
        print(line)
    ok = deriv.passed() and (report.passed is not False)
    print("validation:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


_COMMANDS = {
    "converge": cmd_converge,
    "evolve": cmd_evolve,
    "distribution": cmd_distribution,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return _COMMANDS[args.command](cfg)
    except analysis.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
