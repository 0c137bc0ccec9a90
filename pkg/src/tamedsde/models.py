"""SDE model definitions: coefficients, derivatives, and structural checks.

A model bundles the drift, the diffusion columns, and their first and second
derivatives, because the error-limit simulation needs gradients and Hessian
forms along the state path.  All coefficient callables are vectorized over a
leading batch axis: a state array of shape ``(..., d)`` maps to ``(..., d)``
(coefficients), ``(..., d, d)`` (Jacobians), or ``(..., d)`` (Hessian forms
applied to two direction vectors).  They must be pure, so they are safe to
call from many threads at once.

Built-in models carry exact analytic derivatives.  User models may omit any
derivative; a central finite-difference fallback (step 1e-5) is substituted
and recorded in ``fd_fallbacks`` so validation reports can flag it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "FD_STEP",
    "MonotonicityConstants",
    "SdeModel",
    "AdditiveSdeModel",
    "builtin_quintic_multiplicative",
    "builtin_cubic_additive",
    "builtin_linear_oracle",
    "builtin_linear_additive",
    "builtin_model",
    "BUILTIN_NAMES",
    "build_multiplicative_model",
    "build_additive_model",
    "fd_jacobian",
    "fd_hessian_form",
    "DerivativeCheck",
    "check_derivatives",
    "ValidationReport",
    "validate_monotonicity",
]

#: Central finite-difference step used for fallback derivatives and checks.
FD_STEP = 1e-5


@dataclass(frozen=True)
class MonotonicityConstants:
    """Advisory constants for the coupled one-sided Lipschitz bound (not enforced)."""

    L: float
    p0: float


@dataclass(frozen=True)
class SdeModel:
    """SDE with state-dependent diffusion: dX = f(X) dt + sum_k g_k(X) dW_k."""

    name: str
    dim_state: int
    dim_noise: int
    drift: Callable
    diffusion_col: Callable  # (x, k) -> g_k(x), columns indexed 0..m-1
    drift_jacobian: Callable
    diffusion_jacobian: Callable  # (x, k) -> d x d matrix
    drift_hessian_form: Callable  # (x, u, v) -> vector
    diffusion_hessian_form: Callable  # (x, k, u, v) -> vector
    growth_exponent: float
    monotonicity_constants: Optional[MonotonicityConstants] = None
    fd_fallbacks: frozenset = field(default_factory=frozenset)

    @property
    def is_additive(self) -> bool:
        return False


@dataclass(frozen=True)
class AdditiveSdeModel:
    """SDE with constant diffusion matrix: dY = f(Y) dt + sigma dW."""

    name: str
    dim_state: int
    dim_noise: int
    drift: Callable
    drift_jacobian: Callable
    drift_hessian_form: Callable
    sigma: np.ndarray  # d x m, column k drives W_k
    growth_exponent: float
    monotonicity_constants: Optional[MonotonicityConstants] = None
    fd_fallbacks: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (self.dim_state, self.dim_noise):
            raise ValueError(
                f"sigma shape {sigma.shape} does not match (d, m) = "
                f"({self.dim_state}, {self.dim_noise})"
            )
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must be finite-valued")
        object.__setattr__(self, "sigma", sigma)
        sigma.setflags(write=False)

    def diffusion_col(self, x, k):
        """Constant column sigma_k, broadcast over the batch shape of ``x``."""
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.sigma[:, k], x.shape).copy()

    @property
    def is_additive(self) -> bool:
        return True


def fd_jacobian(func: Callable, step: float = FD_STEP) -> Callable:
    """Central-difference Jacobian of a batched vector field."""

    def jac(x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = np.empty(x.shape + (d,))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            out[..., :, j] = (func(x + e) - func(x - e)) / (2.0 * step)
        return out

    return jac


def fd_hessian_form(func: Callable, step: float = FD_STEP) -> Callable:
    """Second-order central difference for D^2 func(x)(u, v), symmetric in (u, v)."""

    def hess(x, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        pp = func(x + step * u + step * v)
        pm = func(x + step * u - step * v)
        mp = func(x - step * u + step * v)
        mm = func(x - step * u - step * v)
        return (pp - pm - mp + mm) / (4.0 * step * step)

    return hess


def build_multiplicative_model(
    name,
    dim_state,
    dim_noise,
    drift,
    diffusion_col,
    growth_exponent,
    drift_jacobian=None,
    diffusion_jacobian=None,
    drift_hessian_form=None,
    diffusion_hessian_form=None,
    monotonicity_constants=None,
) -> SdeModel:
    """Assemble a user model, substituting finite-difference fallbacks for any
    derivative left unset (recorded in ``fd_fallbacks``)."""
    fallbacks = set()
    if drift_jacobian is None:
        drift_jacobian = fd_jacobian(drift)
        fallbacks.add("drift_jacobian")
    if diffusion_jacobian is None:
        def diffusion_jacobian(x, k, _cols=diffusion_col):
            return fd_jacobian(lambda y: _cols(y, k))(x)
        fallbacks.add("diffusion_jacobian")
    if drift_hessian_form is None:
        drift_hessian_form = fd_hessian_form(drift)
        fallbacks.add("drift_hessian_form")
    if diffusion_hessian_form is None:
        def diffusion_hessian_form(x, k, u, v, _cols=diffusion_col):
            return fd_hessian_form(lambda y: _cols(y, k))(x, u, v)
        fallbacks.add("diffusion_hessian_form")
    return SdeModel(
        name=name,
        dim_state=dim_state,
        dim_noise=dim_noise,
        drift=drift,
        diffusion_col=diffusion_col,
        drift_jacobian=drift_jacobian,
        diffusion_jacobian=diffusion_jacobian,
        drift_hessian_form=drift_hessian_form,
        diffusion_hessian_form=diffusion_hessian_form,
        growth_exponent=growth_exponent,
        monotonicity_constants=monotonicity_constants,
        fd_fallbacks=frozenset(fallbacks),
    )


def builtin_quintic_multiplicative() -> SdeModel:
    """1-d SDE dX = -X^5 dt + X dW_1 + X^2 dW_2, growth exponent 4."""

    def drift(x):
        x = np.asarray(x, dtype=float)
        return -(x**5)

    def diffusion_col(x, k):
        x = np.asarray(x, dtype=float)
        if k == 0:
            return x.copy()
        if k == 1:
            return x**2
        raise IndexError(f"noise column {k} out of range for m=2")

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return (-5.0 * x**4)[..., None]

    def diffusion_jacobian(x, k):
        x = np.asarray(x, dtype=float)
        if k == 0:
            return np.ones_like(x)[..., None]
        if k == 1:
            return (2.0 * x)[..., None]
        raise IndexError(f"noise column {k} out of range for m=2")

    def drift_hessian_form(x, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return -20.0 * x**3 * u * v

    def diffusion_hessian_form(x, k, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if k == 0:
            return np.zeros(np.broadcast_shapes(x.shape, u.shape, v.shape))
        if k == 1:
            return 2.0 * u * v * np.ones_like(x)
        raise IndexError(f"noise column {k} out of range for m=2")

    return SdeModel(
        name="quintic-mult",
        dim_state=1,
        dim_noise=2,
        drift=drift,
        diffusion_col=diffusion_col,
        drift_jacobian=drift_jacobian,
        diffusion_jacobian=diffusion_jacobian,
        drift_hessian_form=drift_hessian_form,
        diffusion_hessian_form=diffusion_hessian_form,
        growth_exponent=4.0,
        monotonicity_constants=MonotonicityConstants(L=4.0, p0=3.0),
    )


def builtin_cubic_additive(sigma: float = 1.0) -> AdditiveSdeModel:
    """1-d SDE dY = -Y^3 dt + sigma dW, growth exponent 2."""
    if not np.isfinite(sigma):
        raise ValueError("sigma must be finite")

    def drift(x):
        x = np.asarray(x, dtype=float)
        return -(x**3)

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return (-3.0 * x**2)[..., None]

    def drift_hessian_form(x, u, v):
        x = np.asarray(x, dtype=float)
        return -6.0 * x * np.asarray(u, dtype=float) * np.asarray(v, dtype=float)

    return AdditiveSdeModel(
        name="cubic-add",
        dim_state=1,
        dim_noise=1,
        drift=drift,
        drift_jacobian=drift_jacobian,
        drift_hessian_form=drift_hessian_form,
        sigma=np.array([[float(sigma)]]),
        growth_exponent=2.0,
        monotonicity_constants=MonotonicityConstants(L=0.5, p0=10.0),
    )


def builtin_linear_oracle(a: float = -1.0, b=(0.5,)) -> SdeModel:
    """Globally Lipschitz 1-d model dX = a X dt + sum_k b_k X dW_k (l = 0).

    Used by oracle tests: moments are available in closed form.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m = len(b)

    def drift(x):
        return a * np.asarray(x, dtype=float)

    def diffusion_col(x, k):
        return b[k] * np.asarray(x, dtype=float)

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), float(a))

    def diffusion_jacobian(x, k):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), b[k])

    def zero_form(x, u, v):
        return np.zeros(
            np.broadcast_shapes(
                np.asarray(x, dtype=float).shape,
                np.asarray(u, dtype=float).shape,
                np.asarray(v, dtype=float).shape,
            )
        )

    return SdeModel(
        name="linear",
        dim_state=1,
        dim_noise=m,
        drift=drift,
        diffusion_col=diffusion_col,
        drift_jacobian=drift_jacobian,
        diffusion_jacobian=diffusion_jacobian,
        drift_hessian_form=zero_form,
        diffusion_hessian_form=lambda x, k, u, v: zero_form(x, u, v),
        growth_exponent=0.0,
        monotonicity_constants=MonotonicityConstants(
            L=2.0 * a + 2.0 * float(np.sum(b**2)), p0=3.0
        ),
    )


def builtin_linear_additive(a: float = -1.0, sigma: float = 1.0) -> AdditiveSdeModel:
    """1-d model dY = a Y dt + sigma dW (l = 0); the additive oracle."""
    if not np.isfinite(sigma):
        raise ValueError("sigma must be finite")

    def drift(x):
        return a * np.asarray(x, dtype=float)

    def drift_jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), float(a))

    def drift_hessian_form(x, u, v):
        return np.zeros(
            np.broadcast_shapes(
                np.asarray(x, dtype=float).shape,
                np.asarray(u, dtype=float).shape,
                np.asarray(v, dtype=float).shape,
            )
        )

    return AdditiveSdeModel(
        name="linear-add",
        dim_state=1,
        dim_noise=1,
        drift=drift,
        drift_jacobian=drift_jacobian,
        drift_hessian_form=drift_hessian_form,
        sigma=np.array([[float(sigma)]]),
        growth_exponent=0.0,
        monotonicity_constants=MonotonicityConstants(L=2.0 * a, p0=10.0),
    )


def build_additive_model(
    name,
    dim_state,
    dim_noise,
    drift,
    sigma,
    growth_exponent,
    drift_jacobian=None,
    drift_hessian_form=None,
    monotonicity_constants=None,
) -> AdditiveSdeModel:
    """Assemble a constant-diffusion user model with derivative fallbacks."""
    fallbacks = set()
    if drift_jacobian is None:
        drift_jacobian = fd_jacobian(drift)
        fallbacks.add("drift_jacobian")
    if drift_hessian_form is None:
        drift_hessian_form = fd_hessian_form(drift)
        fallbacks.add("drift_hessian_form")
    return AdditiveSdeModel(
        name=name,
        dim_state=dim_state,
        dim_noise=dim_noise,
        drift=drift,
        drift_jacobian=drift_jacobian,
        drift_hessian_form=drift_hessian_form,
        sigma=np.asarray(sigma, dtype=float),
        growth_exponent=growth_exponent,
        monotonicity_constants=monotonicity_constants,
        fd_fallbacks=frozenset(fallbacks),
    )


BUILTIN_NAMES = ("quintic-mult", "cubic-add", "linear", "linear-add")


def builtin_model(name: str, **params):
    """Look up a built-in model by CLI name."""
    if name == "quintic-mult":
        return builtin_quintic_multiplicative()
    if name == "cubic-add":
        return builtin_cubic_additive(sigma=params.get("sigma", 1.0))
    if name == "linear":
        return builtin_linear_oracle(a=params.get("a", -1.0), b=params.get("b", (0.5,)))
    if name == "linear-add":
        return builtin_linear_additive(
            a=params.get("a", -1.0), sigma=params.get("sigma", 1.0)
        )
    raise KeyError(f"unknown model {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}")


@dataclass(frozen=True)
class DerivativeCheck:
    """Worst relative deviation of each supplied derivative from finite differences."""

    max_rel_errors: dict
    n_points: int
    radius: float
    rng_seed: int
    fd_fallbacks: frozenset

    def passed(self, tol: float = 1e-4) -> bool:
        return all(v <= tol for v in self.max_rel_errors.values())


def _rel_err(analytic, approx):
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(approx)))
    return float(np.max(np.abs(analytic - approx) / scale))


def check_derivatives(model, n_points: int = 100, radius: float = 5.0, rng_seed: int = 0) -> DerivativeCheck:
    """Compare the model's derivatives against central finite differences.

    Samples ``n_points`` states uniformly in the ball of the given radius and
    random unit directions for the Hessian forms.
    """
    rng = np.random.default_rng(rng_seed)
    d = model.dim_state
    xs = rng.uniform(-radius, radius, size=(n_points, d))
    us = rng.standard_normal((n_points, d))
    vs = rng.standard_normal((n_points, d))
    us /= np.linalg.norm(us, axis=-1, keepdims=True)
    vs /= np.linalg.norm(vs, axis=-1, keepdims=True)

    errs = {}
    errs["drift_jacobian"] = _rel_err(model.drift_jacobian(xs), fd_jacobian(model.drift)(xs))
    errs["drift_hessian_form"] = _rel_err(
        model.drift_hessian_form(xs, us, vs), fd_hessian_form(model.drift)(xs, us, vs)
    )
    if not model.is_additive:
        for k in range(model.dim_noise):
            col = lambda y, _k=k: model.diffusion_col(y, _k)
            errs[f"diffusion_jacobian[{k}]"] = _rel_err(
                model.diffusion_jacobian(xs, k), fd_jacobian(col)(xs)
            )
            errs[f"diffusion_hessian_form[{k}]"] = _rel_err(
                model.diffusion_hessian_form(xs, k, us, vs),
                fd_hessian_form(col)(xs, us, vs),
            )
    return DerivativeCheck(
        max_rel_errors=errs,
        n_points=n_points,
        radius=radius,
        rng_seed=rng_seed,
        fd_fallbacks=model.fd_fallbacks,
    )


@dataclass(frozen=True)
class ValidationReport:
    """Sampled estimates for the structural bounds of a model.

    ``monotonicity_L`` is the largest sampled quotient
    ``(2<x-y, f(x)-f(y)> + (p0-1) |g(x)-g(y)|^2) / |x-y|^2`` and
    ``lipschitz_L`` the largest sampled
    ``|f(x)-f(y)| / ((1 + |x|^l + |y|^l) |x-y|)``.  Sampling only; this is
    evidence, not a proof of the global bounds.
    """

    model_name: str
    p0: float
    n_samples: int
    radius: float
    rng_seed: int
    monotonicity_L: float
    lipschitz_L: float
    declared: Optional[MonotonicityConstants]
    passed: Optional[bool]
    n_degenerate: int
    fd_fallbacks: frozenset

    def lines(self):
        yield f"model {self.model_name}: sampled structural bounds (advisory)"
        yield (
            f"  coupled monotonicity (p0={self.p0:g}): sampled L = "
            f"{self.monotonicity_L:.6g} over {self.n_samples} pairs, radius {self.radius:g}"
        )
        yield f"  polynomial-growth Lipschitz: sampled L = {self.lipschitz_L:.6g}"
        if self.declared is not None:
            status = "PASS" if self.passed else "FAIL"
            yield (
                f"  declared L = {self.declared.L:g} at p0 = {self.declared.p0:g}: {status}"
            )
        if self.n_degenerate:
            yield f"  skipped {self.n_degenerate} degenerate (x = y) pairs"
        if self.fd_fallbacks:
            yield f"  finite-difference fallbacks in use: {sorted(self.fd_fallbacks)}"


def _monotonicity_quotients(model, xs, ys, p0):
    """Per-pair quotients for both structural bounds; x = y pairs are skipped."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    diff = xs - ys
    dist2 = np.sum(diff * diff, axis=-1)
    keep = dist2 > 0
    n_degenerate = int(np.sum(~keep))
    xs, ys, diff, dist2 = xs[keep], ys[keep], diff[keep], dist2[keep]

    fdiff = model.drift(xs) - model.drift(ys)
    inner = 2.0 * np.sum(diff * fdiff, axis=-1)
    gterm = np.zeros_like(dist2)
    if not model.is_additive:
        for k in range(model.dim_noise):
            gd = model.diffusion_col(xs, k) - model.diffusion_col(ys, k)
            gterm += np.sum(gd * gd, axis=-1)
    mono_q = (inner + (p0 - 1.0) * gterm) / dist2

    l = model.growth_exponent
    xn = np.sqrt(np.sum(xs * xs, axis=-1))
    yn = np.sqrt(np.sum(ys * ys, axis=-1))
    lip_q = np.sqrt(np.sum(fdiff * fdiff, axis=-1)) / (
        (1.0 + xn**l + yn**l) * np.sqrt(dist2)
    )
    return mono_q, lip_q, n_degenerate


def validate_monotonicity(
    model, p0: float, n_samples: int, radius: float, rng_seed: int
) -> ValidationReport:
    """Sample the coupled monotonicity and polynomial Lipschitz quotients.

    Requires ``p0 > 2``.  Deterministic given ``rng_seed``.
    """
    if p0 <= 2:
        raise ValueError(f"p0 must be > 2, got {p0}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")

    rng = np.random.default_rng(rng_seed)
    d = model.dim_state
    xs = rng.uniform(-radius, radius, size=(n_samples, d))
    ys = rng.uniform(-radius, radius, size=(n_samples, d))
    mono_q, lip_q, n_degenerate = _monotonicity_quotients(model, xs, ys, p0)
    mono_L = float(np.max(mono_q)) if len(mono_q) else float("-inf")
    lip_L = float(np.max(lip_q)) if len(lip_q) else 0.0

    declared = model.monotonicity_constants
    passed = None
    if declared is not None and declared.p0 == p0:
        slack = 1e-9 * max(1.0, abs(declared.L))
        passed = np.isfinite(mono_L) and mono_L <= declared.L + slack
    return ValidationReport(
        model_name=model.name,
        p0=p0,
        n_samples=n_samples,
        radius=radius,
        rng_seed=rng_seed,
        monotonicity_L=mono_L,
        lipschitz_L=lip_L,
        declared=declared,
        passed=passed,
        n_degenerate=n_degenerate,
        fd_fallbacks=model.fd_fallbacks,
    )
