"""Fractional powers, resolvent, Poisson/extension semigroups and Riesz potentials.

Every operator here is a time integral of the semigroup,

    (-A)^s f    = -s/Γ(1-s) ∫ t^{-1-s} (P_t f - f) dt          (Balakrishnan)
    I_α f       = 1/Γ(α/2) ∫ t^{α/2-1} P_t f dt                 (Riesz potential)
    R(λ) f      = ∫ e^{-λt} P_t f dt                            (resolvent)
    U(X, z)     = ∫ w_a(t; z) P_t f dt,                         (extension, a = 1-2s)
    w_a(t; z)   = z^{1-a} t^{-(3-a)/2} e^{-z²/4t} / (2^{1-a} Γ((1-a)/2)),

evaluated in log-time by :func:`~hypoelliptic.numerics.quad_semiinf`.  For
Gaussian data P_t f is exact and P_t f - f is formed without cancellation, so
the t^{-1-s} singularity costs nothing.  Results are field objects, which lets
operators be composed (e.g. I_{2s}((-A)^s f)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import GuardError, TraceHypothesisWarning
from .flows import CallableField, GaussianField, SubordinatedField, TimeWeight, fd_generator, generator_ratio
from .heat_kernel import (
    ConstantFn,
    GaussianExpFn,
    _points,
    as_field,
    cesaro_average,
    default_gh_order,
    kernel_times,
    require_hypoelliptic,
)
from .numerics import QuadSpec, gauss_legendre, quad_semiinf
from .ou_model import OUSystem

__all__ = [
    "FracSpec",
    "ExtensionPoint",
    "generator_apply",
    "power_field",
    "riesz_field",
    "fractional_power",
    "resolvent_apply",
    "balakrishnan_resolvent",
    "poisson_kernel",
    "poisson_apply",
    "extension_eval",
    "extension_values",
    "extension_neumann",
    "extension_residual",
    "riesz_apply",
    "riesz_poisson_route",
    "poisson_maximal",
    "cesaro_sup",
    "neumann_constant",
    "sobolev_norm",
    "lp_norm_box",
    "DEFAULT_Z_GRID",
    "MAXIMAL_CONSTANT",
]

MAXIMAL_CONSTANT = 3.5
DEFAULT_Z_GRID = np.logspace(-3, 3, 64)
DEFAULT_CESARO_GRID = np.logspace(-6, 4, 81)

MODES = ("oracle-gaussian", "finite-difference")


@dataclass(frozen=True)
class FracSpec:
    """Order of a fractional operator plus its quadrature settings."""

    s: float
    quad: QuadSpec = field(default_factory=QuadSpec)
    small_time_mode: str = "oracle-gaussian"

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("order must be positive")
        if self.small_time_mode not in MODES:
            raise ValueError(f"small_time_mode must be one of {MODES}")


@dataclass(frozen=True)
class ExtensionPoint:
    X: np.ndarray
    z: float
    a: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError("z must be positive")
        if not -1 < self.a < 1:
            raise ValueError("a must lie in (-1, 1)")

    @property
    def s(self) -> float:
        return (1.0 - self.a) / 2.0


def _check_s(s):
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")


def _base(sys, f, spec: Optional[QuadSpec], mode: str):
    """Turn a test function (or an existing field) into a field object."""
    if mode not in MODES:
        raise ValueError(f"small_time_mode must be one of {MODES}")
    if hasattr(f, "increment") and hasattr(f, "flow"):
        return f
    if mode == "finite-difference" and isinstance(f, GaussianExpFn):
        order = spec.gh_order if spec and spec.gh_order else default_gh_order(sys.dim)
        return CallableField(sys, f, order)
    return as_field(sys, f, spec.gh_order if spec else None)


def _eval(field_obj, X):
    X, single = _points(X, field_obj.sys.dim)
    out = field_obj.flow(X, np.zeros(1))[:, 0]
    return float(out[0]) if single else out


def _warn_trace(sys, what):
    if sys.trace_B < -1e-12:
        warnings.warn(f"{what}: tr B = {sys.trace_B:g} < 0, outside the contraction regime",
                      TraceHypothesisWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# generator and fractional powers


def generator_apply(sys: OUSystem, f, X):
    """A f(X); analytic for Gaussian data, central differences for general fields."""
    X, single = _points(X, sys.dim)
    if isinstance(f, ConstantFn):
        out = np.zeros(X.shape[0])
    elif isinstance(f, GaussianExpFn):
        fld = GaussianField(sys, f.M, f.mean, f.logpeak)
        out = fld.gen_flow(X, np.zeros(1), 1)[:, 0]
    elif hasattr(f, "gen_flow"):
        out = f.gen_flow(X, np.zeros(1), 1)[:, 0]
    else:
        out = fd_generator(sys, f, X)
    return float(out[0]) if single else out


def balakrishnan_weight(s):
    return TimeWeight(exponent=-1.0 - s, scale=-s / gamma_fn(1.0 - s), kappa=1)


def riesz_weight(alpha):
    return TimeWeight(exponent=alpha / 2.0 - 1.0, scale=1.0 / gamma_fn(alpha / 2.0))


def extension_weight(a, z):
    scale = z ** (1.0 - a) / (2.0 ** (1.0 - a) * gamma_fn((1.0 - a) / 2.0))
    return TimeWeight(exponent=-(3.0 - a) / 2.0, scale=scale, beta=z * z / 4.0)


def power_field(sys: OUSystem, s: float, f, spec: Optional[QuadSpec] = None,
                mode: str = "oracle-gaussian"):
    """The field (-A)^s f, usable as input to further operators."""
    _check_s(s)
    require_hypoelliptic(sys)
    return SubordinatedField(_base(sys, f, spec, mode), balakrishnan_weight(s), spec)


def fractional_power(sys: OUSystem, s: float, f, X, spec: Optional[QuadSpec] = None,
                     mode: str = "oracle-gaussian"):
    """(-A)^s f(X) by the Balakrishnan integral.

    ``f`` is a GaussianExpFn (exact semigroup), a ConstantFn, a vectorized
    callable (Gauss–Hermite semigroup, finite-difference generator; about
    1e-3 relative once the kernel is much wider than f) or a field returned
    by power_field/riesz_field.
    """
    if isinstance(f, FracSpec):
        raise TypeError("pass the order s and the QuadSpec separately")
    _check_s(s)
    require_hypoelliptic(sys)
    if isinstance(f, ConstantFn):
        X, single = _points(X, sys.dim)
        return 0.0 if single else np.zeros(X.shape[0])
    return _eval(power_field(sys, s, f, spec, mode), X)


def _riesz_guard(sys, alpha, what="Riesz potential"):
    from .dimensions import dinf_estimate

    if sys.trace_B < -1e-12:
        raise GuardError(f"{what} requires tr B >= 0 (got {sys.trace_B:g})")
    est = dinf_estimate(sys)
    if est.marker == "inf":
        return
    if est.marker == "zero":
        raise GuardError(f"{what}: volume is bounded (D_inf = 0), no order alpha > 0 is admissible")
    if alpha > 0.9 * est.value:
        raise GuardError(
            f"{what} of order alpha = {alpha:g} needs alpha < D_inf; the estimate "
            f"D_inf ~ {est.value:.4g} allows alpha <= {0.9 * est.value:.4g}")


def riesz_field(sys: OUSystem, alpha: float, f, spec: Optional[QuadSpec] = None,
                mode: str = "oracle-gaussian", guard: bool = True):
    """The field I_α f.

    With ``guard`` the order is checked against the intrinsic dimension at
    infinity (α <= 0.9·D̂_∞ unless the volume grows exponentially).  Callers
    that know the integral converges for other reasons (e.g. f = (-A)^s g,
    whose semigroup decays faster) may disable it.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    require_hypoelliptic(sys)
    if guard:
        _riesz_guard(sys, alpha)
    if isinstance(f, ConstantFn) and f.value != 0:
        raise GuardError("the Riesz potential of a nonzero constant diverges")
    return SubordinatedField(_base(sys, f, spec, mode), riesz_weight(alpha), spec)


def riesz_apply(sys: OUSystem, alpha: float, f, X, spec: Optional[QuadSpec] = None,
                mode: str = "oracle-gaussian", guard: bool = True):
    """I_α f(X) = Γ(α/2)^{-1} ∫ t^{α/2-1} P_t f(X) dt."""
    if isinstance(f, ConstantFn) and f.value == 0:
        X, single = _points(X, sys.dim)
        return 0.0 if single else np.zeros(X.shape[0])
    return _eval(riesz_field(sys, alpha, f, spec, mode, guard), X)


def resolvent_apply(sys: OUSystem, lam: float, f, X, spec: Optional[QuadSpec] = None,
                    mode: str = "oracle-gaussian"):
    """R(λ, A) f(X) = ∫ e^{-λt} P_t f(X) dt for real λ > 0."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    require_hypoelliptic(sys)
    _warn_trace(sys, "resolvent_apply")
    X, single = _points(X, sys.dim)
    if isinstance(f, ConstantFn):
        out = np.full(X.shape[0], f.value / lam)
        return float(out[0]) if single else out
    fld = SubordinatedField(_base(sys, f, spec, mode), TimeWeight(0.0, 1.0, decay=lam), spec)
    return _eval(fld, X if not single else X[0])


def balakrishnan_resolvent(sys: OUSystem, s: float, f, X, spec: Optional[QuadSpec] = None):
    """(-A)^s f(X) through the resolvent: sin(πs)/π ∫ λ^{s-1}(f - λR(λ)f) dλ.

    f - λR(λ)f = -∫ e^{-r}(P_{r/λ} f - f) dr, so each λ-node needs one inner
    Laplace-type integral of exact semigroup increments.
    """
    _check_s(s)
    require_hypoelliptic(sys)
    spec = spec or QuadSpec()
    base = _base(sys, f, spec, "oracle-gaussian")
    X, single = _points(X, sys.dim)
    zero = np.zeros(1)

    def outer(lams):
        def inner(r):
            taus = (r[None, :] / lams[:, None]).ravel()
            v = base.increment(X, zero, taus)[:, 0, :]
            return -v.reshape(X.shape[0], lams.size, r.size)

        res = quad_semiinf(inner, spec, 0.0, decay_rate=1.0, warn=False)
        return np.asarray(res.value)

    res = quad_semiinf(outer, spec, s - 1.0, warn=False)
    out = math.sin(math.pi * s) / math.pi * np.asarray(res.value)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Poisson and extension


def neumann_constant(a: float) -> float:
    """-2^{-a} Γ((1-a)/2) / Γ((1+a)/2): multiplies lim z^a ∂_z U to give (-A)^s f."""
    return -(2.0 ** (-a)) * gamma_fn((1.0 - a) / 2.0) / gamma_fn((1.0 + a) / 2.0)


def _check_a(a):
    if not -1 < a < 1:
        raise ValueError(f"a must lie in (-1, 1), got {a}")


def poisson_kernel(sys: OUSystem, a: float, X, Y, z: float, spec: Optional[QuadSpec] = None):
    """P^{(a)}(X, Y, z) = ∫ w_a(t; z) p(X, Y, t) dt; X, Y points or paired stacks."""
    _check_a(a)
    if not z > 0:
        raise ValueError("z must be positive")
    require_hypoelliptic(sys)
    X, single = _points(X, sys.dim)
    Y, _ = _points(Y, sys.dim)
    w = extension_weight(a, z)

    def h(ts):
        with np.errstate(under="ignore"):
            return kernel_times(sys, X, Y, ts) * np.exp(-w.beta / ts)

    res = quad_semiinf(h, spec, w.exponent, extra_splits=[w.beta])
    out = w.scale * np.asarray(res.value)
    return float(out[0]) if single else out


def extension_values(sys: OUSystem, s: float, f, X, zs, spec: Optional[QuadSpec] = None,
                     order: int = 0, mode: str = "oracle-gaussian"):
    """U(X, z) (order 0) or A U(X, z) (order 1) for points X and many z at once.

    Returns an array of shape (P, len(zs)).  All z share one adaptive time
    grid; each carries its own weight factor z^{1-a} e^{-z²/4t}.
    """
    _check_s(s)
    require_hypoelliptic(sys)
    a = 1.0 - 2.0 * s
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    if np.any(zs <= 0):
        raise ValueError("z must be positive")
    X, _ = _points(X, sys.dim)
    scale = zs ** (1.0 - a) / (2.0 ** (1.0 - a) * gamma_fn((1.0 - a) / 2.0))
    beta = zs * zs / 4.0
    if isinstance(f, ConstantFn):
        base_vals = lambda ts: np.full((X.shape[0], ts.size), float(f.value) if order == 0 else 0.0)
    else:
        base = _base(sys, f, spec, mode)
        if order == 0:
            base_vals = lambda ts: base.flow(X, ts)
        else:
            base_vals = lambda ts: base.gen_flow(X, ts, order)

    def h(ts):
        with np.errstate(under="ignore"):
            fac = scale[:, None] * np.exp(-beta[:, None] / ts[None, :])
        return base_vals(ts)[:, None, :] * fac[None]

    res = quad_semiinf(h, spec, -(3.0 - a) / 2.0, extra_splits=beta)
    return np.asarray(res.value)


def extension_eval(sys: OUSystem, s: float, f, X, z: float, spec: Optional[QuadSpec] = None,
                   mode: str = "oracle-gaussian"):
    """U(X, z) = ∫ P^{(a)}(X, Y, z) f(Y) dY with a = 1 - 2s (subordination of P_t f)."""
    X, single = _points(X, sys.dim)
    out = extension_values(sys, s, f, X, [z], spec, mode=mode)[:, 0]
    return float(out[0]) if single else out


def poisson_apply(sys: OUSystem, z, f, X, spec: Optional[QuadSpec] = None,
                  mode: str = "oracle-gaussian"):
    """P_z f(X) = (4π)^{-1/2} ∫ z t^{-3/2} e^{-z²/4t} P_t f(X) dt.

    ``z`` may be a scalar or an array; with an array the result has a trailing
    z axis.
    """
    X, single = _points(X, sys.dim)
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    out = extension_values(sys, 0.5, f, X, zs, spec, mode=mode)
    if np.ndim(z) == 0:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


def extension_neumann(sys: OUSystem, s: float, f, X, z: float, spec: Optional[QuadSpec] = None):
    """Neumann quotient neumann_constant(a)·z^a ∂_z U(X, z), which tends to (-A)^s f as z -> 0.

    Since ∫ w_a dt = 1 for every z, ∂_z U = ∫ ∂_z w_a (P_t f - f) dt with
    z^a ∂_z w_a = c_a [(1-a) t^{-(3-a)/2} - (z²/2) t^{-(5-a)/2}] e^{-z²/4t}.
    """
    _check_s(s)
    require_hypoelliptic(sys)
    a = 1.0 - 2.0 * s
    X, single = _points(X, sys.dim)
    base = _base(sys, f, spec, "oracle-gaussian")
    ca = 1.0 / (2.0 ** (1.0 - a) * gamma_fn((1.0 - a) / 2.0))
    beta = z * z / 4.0
    zero = np.zeros(1)

    def h(ts):
        with np.errstate(under="ignore"):
            fac = np.exp(-beta / ts)
        inc = base.increment(X, zero, ts)[:, 0, :] * fac
        # stack the two weights: t^{-(3-a)/2} and t^{-(5-a)/2} = t^{-(3-a)/2} / t
        return np.stack([inc, inc / ts], axis=1)

    res = quad_semiinf(h, spec, -(3.0 - a) / 2.0, extra_splits=[beta])
    I1, I2 = np.asarray(res.value)[:, 0], np.asarray(res.value)[:, 1]
    out = neumann_constant(a) * ca * ((1.0 - a) * I1 - 0.5 * z * z * I2)
    return float(out[0]) if single else out


def extension_residual(sys: OUSystem, s: float, f, X, zs, spec: Optional[QuadSpec] = None,
                       rel_step: float = 1e-2):
    """(residual, local scale) of A U + ∂_zz U + (a/z) ∂_z U at (X, z).

    z-derivatives use second-order central differences with step rel_step·z;
    the scale is the largest magnitude among the three terms.
    """
    a = 1.0 - 2.0 * s
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    X, _ = _points(X, sys.dim)
    hz = rel_step * zs
    zz = np.concatenate([zs - hz, zs, zs + hz])
    U = extension_values(sys, s, f, X, zz, spec)
    n = zs.size
    Um, U0, Up = U[:, :n], U[:, n:2 * n], U[:, 2 * n:]
    AU = extension_values(sys, s, f, X, zs, spec, order=1)
    Uzz = (Up - 2 * U0 + Um) / hz ** 2
    Uz = (Up - Um) / (2 * hz)
    terms = np.stack([AU, Uzz, a / zs * Uz])
    return terms.sum(axis=0), np.abs(terms).max(axis=0)


def riesz_poisson_route(sys: OUSystem, alpha: float, f, X, spec: Optional[QuadSpec] = None):
    """I_α f(X) = Γ(α)^{-1} ∫ z^{α-1} P_z f(X) dz, with P_z f itself subordinated.

    Swapping the two integrals gives ∫ k(t) P_t f dt with
    k(t) = Γ(α)^{-1} (4π)^{-1/2} ∫ z^α t^{-3/2} e^{-z²/4t} dz, evaluated by a
    separate z-quadrature on each t node (no use of the closed form for k).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    require_hypoelliptic(sys)
    base = _base(sys, f, spec, "oracle-gaussian")
    X, single = _points(X, sys.dim)
    spec = spec or QuadSpec()

    # with z = 2√t·y the inner integral is (2√t)^{α+1} ∫ y^α e^{-y²} dy
    moment = quad_semiinf(lambda y: np.exp(-y * y), spec, alpha, warn=False).value

    def kernel(ts):
        return moment * (2.0 * np.sqrt(ts)) ** (alpha + 1.0) * ts ** -1.5 / (
            math.sqrt(4 * math.pi) * gamma_fn(alpha))

    def h(ts):
        return base.flow(X, ts) * kernel(ts)[None, :]

    res = quad_semiinf(h, spec, 0.0)
    out = np.asarray(res.value)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# maximal function


def poisson_maximal(sys: OUSystem, f, X, z_grid: Optional[Sequence[float]] = None,
                    spec: Optional[QuadSpec] = None, return_values: bool = False):
    """Grid maximum of |P_z f(X)| over z (a lower bound for sup_{z>0})."""
    zs = DEFAULT_Z_GRID if z_grid is None else np.asarray(z_grid, dtype=float)
    X, single = _points(X, sys.dim)
    vals = np.empty((X.shape[0], zs.size))
    step = 256
    for i in range(0, X.shape[0], step):
        vals[i:i + step] = poisson_apply(sys, zs, f, X[i:i + step], spec)
    out = np.abs(vals).max(axis=1)
    if return_values:
        return (out[0], vals[0]) if single else (out, vals)
    return float(out[0]) if single else out


def cesaro_sup(sys: OUSystem, f, X, t_grid: Optional[Sequence[float]] = None, spec=None):
    """Grid maximum over t of |(1/t)∫_0^t P_s f(X) ds|."""
    ts = DEFAULT_CESARO_GRID if t_grid is None else np.asarray(t_grid, dtype=float)
    X, single = _points(X, sys.dim)
    vals = np.atleast_2d(cesaro_average(sys, ts, f, X, spec))
    out = np.abs(vals).max(axis=-1)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# norms


def _box(f: GaussianExpFn, width=10.0):
    sd = f.std()
    return f.mean - width * sd, f.mean + width * sd


def lp_norm_box(values, weights, p):
    v = np.abs(values)
    if p == math.inf:
        return float(v.max())
    return float((v ** p @ weights) ** (1.0 / p))


def box_rule(lo, hi, order):
    """Tensor Gauss–Legendre nodes (n, N) and weights on the box [lo, hi]."""
    x, w = gauss_legendre(order)
    axes, wts = [], []
    for a, b in zip(lo, hi):
        axes.append(a + 0.5 * (b - a) * (x + 1))
        wts.append(0.5 * (b - a) * w)
    grids = np.meshgrid(*axes, indexing="ij")
    wg = np.meshgrid(*wts, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    return nodes, weights


def sobolev_norm(sys: OUSystem, s: float, f: GaussianExpFn, p: float,
                 spec: Optional[QuadSpec] = None, order: Optional[int] = None, width: float = 10.0):
    """‖f‖_p + ‖(-A)^s f‖_p with the second norm on the box mean ± width·std.

    Returns a dict with both norms, their sum, and ``edge_ratio``: the
    largest |(-A)^s f| on the outermost nodes relative to the maximum, an
    indicator of how much mass the box truncates.
    """
    N = sys.dim
    if order is None:
        order = 64 if N <= 2 else 32
    lo, hi = _box(f, width)
    nodes, weights = box_rule(lo, hi, order)
    vals = fractional_power(sys, s, f, nodes, spec)
    frac_norm = lp_norm_box(vals, weights, p)
    grid = np.abs(vals).reshape((order,) * N)
    edge = 0.0
    for ax in range(N):
        edge = max(edge, np.take(grid, 0, axis=ax).max(), np.take(grid, -1, axis=ax).max())
    return {
        "f_norm": f.lp_norm(p),
        "frac_norm": frac_norm,
        "sobolev_norm": f.lp_norm(p) + frac_norm,
        "edge_ratio": float(edge / max(grid.max(), 1e-300)),
    }
