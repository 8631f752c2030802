"""Fundamental solution p(X, Y, t) and the semigroup P_t.

p(X, ·, t) is the Gaussian density with mean e^{tB}X and covariance
2tK(t) = 2G(t):

    p(X, Y, t) = (4π)^{-N/2} det(tK)^{-1/2} exp(-¼ <(tK)^{-1} d, d>),
    d = Y - e^{tB} X.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import DimensionGuardError, NotHypoellipticError
from .flows import CallableField, GaussianField, cov_batch
from .numerics import QuadSpec, flow_matrices, gauss_hermite, gauss_legendre, mat_exp, sym_factor
from .ou_model import OUSystem, kalman_check

__all__ = [
    "CovarianceEval",
    "GaussianExpFn",
    "ConstantFn",
    "log_omega",
    "covariance_eval",
    "log_volume",
    "pseudo_distance",
    "ball_volume",
    "kernel_eval",
    "kernel_times",
    "semigroup_apply",
    "semigroup_apply_gaussian",
    "cesaro_average",
    "kernel_mass",
    "kernel_dual_mass",
    "chapman_kolmogorov",
    "slice_norm_constant",
    "slice_norm",
    "default_gh_order",
    "as_field",
]


def log_omega(N: int) -> float:
    """log of the volume of the unit ball in R^N."""
    return 0.5 * N * math.log(math.pi) - float(gammaln(0.5 * N + 1.0))


@lru_cache(maxsize=256)
def _hypo_ok(key, dim, sys):
    return kalman_check(sys)[0]


def require_hypoelliptic(sys: OUSystem):
    if not _hypo_ok(sys.key, sys.dim, sys):
        raise NotHypoellipticError(
            f"system {sys.name!r} is not hypoelliptic: K(t) is singular and no kernel exists")


# ---------------------------------------------------------------------------
# test functions


class GaussianExpFn:
    """f(Y) = exp(-½<MY, Y> + <b, Y> + c) with M symmetric positive definite."""

    def __init__(self, M, b=None, c=0.0):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        N = M.shape[0]
        if M.shape != (N, N):
            raise ValueError("M must be square")
        if np.abs(M - M.T).max() > 1e-12 * max(1.0, np.abs(M).max()):
            raise ValueError("M must be symmetric")
        M = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(M).min() <= 0:
            raise ValueError("M must be positive definite")
        b = np.zeros(N) if b is None else np.asarray(b, dtype=float).reshape(N)
        self.M = M
        self.b = b
        self.c = float(c)
        self.mean = np.linalg.solve(M, b)
        self.logpeak = self.c + 0.5 * float(b @ self.mean)

    @classmethod
    def unit(cls, N: int) -> "GaussianExpFn":
        """e^{-|Y|²/2}."""
        return cls(np.eye(N))

    @classmethod
    def from_mean(cls, M, mean, logpeak=0.0) -> "GaussianExpFn":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        mean = np.asarray(mean, dtype=float)
        b = M @ mean
        return cls(M, b, logpeak - 0.5 * float(mean @ b))

    @classmethod
    def from_dict(cls, d) -> "GaussianExpFn":
        if d.get("kind", "gaussian-exp") != "gaussian-exp":
            raise ValueError(f"unsupported function kind {d.get('kind')!r}")
        return cls(d["M"], d.get("b"), d.get("c", 0.0))

    def to_dict(self) -> dict:
        return {"kind": "gaussian-exp", "M": self.M.tolist(), "b": self.b.tolist(), "c": self.c}

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def log(self, Y):
        Y = np.asarray(Y, dtype=float)
        r = Y - self.mean
        return self.logpeak - 0.5 * np.einsum("...i,ij,...j->...", r, self.M, r)

    def __call__(self, Y):
        with np.errstate(under="ignore"):
            return np.exp(self.log(Y))

    def sup_norm(self) -> float:
        return math.exp(self.logpeak)

    def lp_norm(self, p: float) -> float:
        """‖f‖_p in closed form (p = inf allowed)."""
        if p == math.inf:
            return self.sup_norm()
        N = self.dim
        logdet = np.linalg.slogdet(self.M)[1]
        return math.exp(self.logpeak + (0.5 * N * math.log(2 * math.pi / p) - 0.5 * logdet) / p)

    def std(self) -> np.ndarray:
        """Per-axis standard deviation of the normalized density f/‖f‖_1."""
        return np.sqrt(np.diag(np.linalg.inv(self.M)))

    def scaled(self, lam: float) -> "GaussianExpFn":
        """Y -> f(λY)."""
        return GaussianExpFn(lam * lam * self.M, lam * self.b, self.c)

    def shifted(self, h) -> "GaussianExpFn":
        """Y -> f(Y - h)."""
        h = np.asarray(h, dtype=float)
        return GaussianExpFn.from_mean(self.M, self.mean + h, self.logpeak)


@dataclass(frozen=True)
class ConstantFn:
    """The constant function Y -> value (the M -> 0 limit of the Gaussian family)."""

    value: float = 1.0
    dim: Optional[int] = None

    def __call__(self, Y):
        Y = np.asarray(Y, dtype=float)
        return np.full(Y.shape[:-1], float(self.value))

    def sup_norm(self) -> float:
        return abs(self.value)


def as_field(sys: OUSystem, f, gh_order: Optional[int] = None):
    """Wrap a test function as a field object used by the time-integral engines."""
    if isinstance(f, GaussianExpFn):
        if f.dim != sys.dim:
            raise ValueError(f"function has dimension {f.dim}, system has {sys.dim}")
        return GaussianField(sys, f.M, f.mean, f.logpeak)
    if callable(f):
        return CallableField(sys, f, gh_order or default_gh_order(sys.dim))
    raise TypeError("f must be a GaussianExpFn or a callable on arrays of shape (..., N)")


# ---------------------------------------------------------------------------
# covariance


@dataclass(frozen=True)
class CovarianceEval:
    t: float
    K: np.ndarray
    tK: np.ndarray
    L: np.ndarray  # L Lᵀ = tK
    det_tK: float
    log_det_tK: float
    V: float
    log_V: float
    expB: np.ndarray
    # backward route for growing flows: tK = e^{tB} Lb Lbᵀ e^{tB*}
    expmB: Optional[np.ndarray] = None
    Lb: Optional[np.ndarray] = None

    def whiten(self, d):
        """(tK)^{-1/2}-whitened residuals; d has shape (P, N), result (N, P)."""
        if self.Lb is None:
            return solve_triangular(self.L, d.T, lower=True)
        return solve_triangular(self.Lb, self.expmB @ d.T, lower=True)


_COV_EVAL_CACHE: dict = {}


def _backward(sys: OUSystem) -> bool:
    """True when e^{tB} grows faster than e^{-tB}.

    Then G(t) = e^{tB}G̃(t)e^{tB*} with the backward Gramian
    G̃(t) = ∫_0^t e^{-sB}Qe^{-sB*}ds, which stays well conditioned, and
    log det G = 2t tr B + log det G̃.
    """
    ev = np.linalg.eigvals(sys.B).real if sys.dim else np.zeros(0)
    return bool(ev.size) and ev.max() > 1e-10 and ev.max() > -ev.min()


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _lower_factor(F):
    """Lower-triangular L with L Lᵀ = F Fᵀ, from the QR factorization of Fᵀ."""
    _, R = np.linalg.qr(F.T)
    sgn = np.where(np.diag(R) < 0, -1.0, 1.0)
    return (sgn[:, None] * R).T


def covariance_eval(sys: OUSystem, t: float) -> CovarianceEval:
    """K(t), tK(t), its factor, det(tK) and V(t) = ω_N det(tK)^{1/2}."""
    require_hypoelliptic(sys)
    t = float(t)
    if not t > 0 or not math.isfinite(t):
        raise ValueError("t must be positive and finite")
    key = (sys.key, t)
    hit = _COV_EVAL_CACHE.get(key)
    if hit is not None:
        return hit
    E, _, G = flow_matrices(sys.B, sys.Q, np.array([t]))
    G, E = G[0], E[0]
    if not np.all(np.isfinite(G)):
        raise OverflowError(f"covariance overflows at t = {t}")
    Einv = Lb = None
    try:
        if _backward(sys):
            Einv, _, Gb = flow_matrices(-sys.B, sys.Q, np.array([t]))
            Einv = Einv[0]
            Lb = np.linalg.cholesky(Gb[0])
            log_det = 2.0 * t * float(np.trace(sys.B)) + 2.0 * float(np.log(np.diag(Lb)).sum())
            L = _lower_factor(E @ Lb)
        else:
            L = np.linalg.cholesky(G)
            log_det = 2.0 * float(np.log(np.diag(L)).sum())
    except np.linalg.LinAlgError:
        raise NotHypoellipticError(f"tK({t}) is numerically singular") from None
    N = sys.dim
    log_V = log_omega(N) + 0.5 * log_det
    for a in (G, L, E, Einv, Lb):
        if a is not None:
            a.setflags(write=False)
    K = G / t
    K.setflags(write=False)
    ev = CovarianceEval(t, K, G, L, _exp(log_det), log_det, _exp(log_V), log_V, E, Einv, Lb)
    if len(_COV_EVAL_CACHE) > 4096:
        _COV_EVAL_CACHE.clear()
    _COV_EVAL_CACHE[key] = ev
    return ev


def _logdet_times(sys: OUSystem, ts):
    """log det G(t) for a 1-D array of times; +inf on overflow, nan if singular."""
    if _backward(sys):
        _, _, G = flow_matrices(-sys.B, sys.Q, ts)
        shift = 2.0 * ts * float(np.trace(sys.B))
    else:
        _, _, G = flow_matrices(sys.B, sys.Q, ts)
        shift = np.zeros(ts.size)
    out = np.full(ts.size, np.inf)
    ok = np.all(np.isfinite(G), axis=(-1, -2))
    if np.any(ok):
        sign, ld = np.linalg.slogdet(G[ok])
        out[ok] = np.where(sign > 0, ld + shift[ok], np.nan)
    return out


def log_volume(sys: OUSystem, ts) -> np.ndarray:
    """log V(t) for an array of times; +inf where the covariance overflows."""
    require_hypoelliptic(sys)
    ts = np.asarray(ts, dtype=float)
    return (log_omega(sys.dim) + 0.5 * _logdet_times(sys, ts.ravel())).reshape(ts.shape)


def kernel_times(sys: OUSystem, X, Y, ts):
    """p(X_i, Y_i, t_j) for paired points (P, N) and a 1-D array of times, shape (P, m).

    Entries are 0 where the covariance overflows or t <= 0.
    """
    ts = np.asarray(ts, dtype=float).ravel()
    N = sys.dim
    out = np.zeros((X.shape[0], ts.size))
    back = _backward(sys)
    E, _, G = flow_matrices(sys.B, sys.Q, ts)
    if back:
        Einv, _, G = flow_matrices(-sys.B, sys.Q, ts)
    ok = np.all(np.isfinite(G), axis=(-1, -2)) & np.all(np.isfinite(E), axis=(-1, -2)) & (ts > 0)
    if back:
        ok &= np.all(np.isfinite(Einv), axis=(-1, -2))
    if not np.any(ok):
        return out
    d = Y[:, None, :] - np.einsum("mij,pj->pmi", E[ok], X)
    if back:
        d = np.einsum("mij,pmj->pmi", Einv[ok], d)
    L = np.linalg.cholesky(G[ok])
    z = np.linalg.solve(L[None], d[..., None])[..., 0]
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    if back:
        logdet = logdet + 2.0 * ts[ok] * float(np.trace(sys.B))
    with np.errstate(under="ignore"):
        out[:, ok] = np.exp(-0.5 * N * math.log(4 * math.pi) - 0.5 * logdet[None]
                            - 0.25 * np.sum(z * z, axis=-1))
    return out


def pseudo_distance(sys: OUSystem, t: float, X, Y):
    """m_t(X, Y) = |K(t)^{-1/2}(Y - e^{tB}X)|, via a triangular solve."""
    ce = covariance_eval(sys, t)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d = Y - X @ ce.expB.T
    shp = d.shape
    z = ce.whiten(d.reshape(-1, sys.dim))
    out = math.sqrt(t) * np.linalg.norm(z, axis=0)
    return out.reshape(shp[:-1]) if len(shp) > 1 else float(out[0])


def ball_volume(sys: OUSystem, t: float, r: float) -> float:
    """Vol B_t(X, r) = ω_N r^N det(K(t))^{1/2}."""
    if r <= 0:
        raise ValueError("r must be positive")
    ce = covariance_eval(sys, t)
    N = sys.dim
    return math.exp(log_omega(N) + N * math.log(r) + 0.5 * (ce.log_det_tK - N * math.log(t)))


def kernel_eval(sys: OUSystem, t: float, X, Y):
    """p(X, Y, t); X and Y broadcast over leading axes."""
    ce = covariance_eval(sys, t)
    N = sys.dim
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d = Y - X @ ce.expB.T
    shp = d.shape[:-1]
    z = ce.whiten(d.reshape(-1, N))
    q = np.einsum("ij,ij->j", z, z)
    with np.errstate(under="ignore"):
        val = np.exp(-0.5 * N * math.log(4 * math.pi) - 0.5 * ce.log_det_tK - 0.25 * q)
    return val.reshape(shp) if shp else float(val[0])


# ---------------------------------------------------------------------------
# semigroup


def default_gh_order(N: int) -> int:
    if N > 4:
        raise DimensionGuardError(f"tensor Gauss–Hermite quadrature is limited to N <= 4 (got {N})")
    return 40 if N <= 2 else 20


def _gh(sys, spec):
    order = spec.gh_order if spec is not None and spec.gh_order else default_gh_order(sys.dim)
    return gauss_hermite(sys.dim, order)


def _points(X, N):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = X.reshape(-1, N)
    return X, single


def semigroup_apply(sys: OUSystem, t: float, f: Callable, X, spec: Optional[QuadSpec] = None):
    """P_t f(X) = ∫ p(X, Y, t) f(Y) dY by Gauss–Hermite quadrature.

    Nodes are mapped through Y = e^{tB}X + √2·L ξ with L Lᵀ = 2tK(t).
    ``X`` may be one point (N,) or a stack (P, N).
    """
    require_hypoelliptic(sys)
    N = sys.dim
    nodes, weights = _gh(sys, spec)
    X, single = _points(X, N)
    if t == 0:
        out = np.asarray(f(X), dtype=float)
        return float(out[0]) if single else out
    ce = covariance_eval(sys, t)
    Ls = math.sqrt(2.0) * ce.L  # factor of 2tK
    mu = X @ ce.expB.T
    Y = mu[:, None, :] + math.sqrt(2.0) * (nodes @ Ls.T)[None]
    vals = np.asarray(f(Y), dtype=float)
    out = math.pi ** (-N / 2) * vals @ weights
    return float(out[0]) if single else out


def semigroup_apply_gaussian(sys: OUSystem, t: float, f: GaussianExpFn) -> GaussianExpFn:
    """P_t f in closed form for f in the Gaussian-exponential family.

    Averaging f over N(μ, S) with S = 2tK(t), μ = e^{tB}X gives
        log P_t f(X) = logpeak - ½ log det(I + SM) - ½ (μ - m)ᵀ M_μ (μ - m),
    M_μ = M^{1/2}(I + M^{1/2} S M^{1/2})^{-1} M^{1/2}; expanding in X yields
    M_X = EᵀM_μE, b_X = EᵀM_μ m.
    """
    require_hypoelliptic(sys)
    if t == 0:
        return f
    if t < 0:
        raise ValueError("t must be non-negative")
    fam = GaussianField(sys, f.M, f.mean, f.logpeak).family(np.array([float(t)]))
    E, Mmu = fam.E[0], fam.Mmu[0]
    M_X = E.T @ Mmu @ E
    w = np.linalg.eigvalsh(0.5 * (M_X + M_X.T))
    # rounding in EᵀM_μE is of order eps·|E|²·|M_μ|
    noise = 1e3 * np.finfo(float).eps * np.linalg.norm(E, 2) ** 2 * np.linalg.norm(Mmu, 2)
    if not np.all(np.isfinite(w)) or w[0] <= noise:
        raise OverflowError(f"the precision of P_t f is numerically singular at t = {t}")
    b_X = E.T @ Mmu @ f.mean
    c_X = float(fam.logpeak[0]) - 0.5 * float(f.mean @ Mmu @ f.mean)
    return GaussianExpFn(0.5 * (M_X + M_X.T), b_X, c_X)


@lru_cache(maxsize=8)
def _graded_rule(levels=48, order=12):
    """Nodes/weights on (0, 1] with panels [2^{-j-1}, 2^{-j}], resolving scales down to 2^{-levels}."""
    x, w = gauss_legendre(order)
    us, ws = [], []
    for j in range(levels):
        a, b = 2.0 ** (-j - 1), 2.0 ** (-j)
        us.append(a + 0.5 * (b - a) * (x + 1))
        ws.append(0.5 * (b - a) * w)
    u = np.concatenate(us)
    wt = np.concatenate(ws)
    return u, wt


def cesaro_average(sys: OUSystem, t, f, X, spec: Optional[QuadSpec] = None):
    """(1/t)∫_0^t P_s f(X) ds by graded Gauss–Legendre in s = t·u.

    ``t`` may be a scalar or 1-D array; ``X`` a point or a stack of points.
    The panels refine geometrically toward s = 0, where P_s f -> f(X).
    """
    require_hypoelliptic(sys)
    X, single = _points(X, sys.dim)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts <= 0):
        raise ValueError("t must be positive")
    if isinstance(f, ConstantFn):
        out = np.full((X.shape[0], ts.size), float(f.value))
    else:
        u, w = _graded_rule()
        field = as_field(sys, f, spec.gh_order if spec else None)
        s = (ts[:, None] * u[None, :]).ravel()
        vals = field.flow(X, s).reshape(X.shape[0], ts.size, u.size)
        out = vals @ w
    if np.ndim(t) == 0:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


# ---------------------------------------------------------------------------
# kernel identities


def kernel_mass(sys: OUSystem, t: float, X, spec: Optional[QuadSpec] = None):
    """∫ p(X, Y, t) dY with kernel_eval sampled on Hermite nodes mapped around e^{tB}X."""
    ce = covariance_eval(sys, t)
    N = sys.dim
    nodes, weights = _gh(sys, spec)
    X, single = _points(X, N)
    Ls = math.sqrt(2.0) * ce.L
    jac = math.sqrt(2.0) ** N * float(np.prod(np.diag(Ls)))
    Y = X[:, None, :] @ ce.expB.T + math.sqrt(2.0) * (nodes @ Ls.T)[None]
    p = kernel_eval(sys, t, X[:, None, :], Y)
    out = jac * (p * np.exp(np.sum(nodes ** 2, axis=-1))[None]) @ weights
    return float(out[0]) if single else out


def kernel_dual_mass(sys: OUSystem, t: float, Y, spec: Optional[QuadSpec] = None):
    """∫ p(X, Y, t) dX via X = e^{-tB}(Y - √2 L ξ); the Jacobian is computed numerically."""
    ce = covariance_eval(sys, t)
    N = sys.dim
    nodes, weights = _gh(sys, spec)
    Y, single = _points(Y, N)
    Einv = mat_exp(sys.B, -t)
    Ls = math.sqrt(2.0) * ce.L
    jac = abs(np.linalg.det(Einv)) * math.sqrt(2.0) ** N * float(np.prod(np.diag(Ls)))
    Xn = (Y[:, None, :] - math.sqrt(2.0) * (nodes @ Ls.T)[None]) @ Einv.T
    p = kernel_eval(sys, t, Xn, Y[:, None, :])
    out = jac * (p * np.exp(np.sum(nodes ** 2, axis=-1))[None]) @ weights
    return float(out[0]) if single else out


def chapman_kolmogorov(sys: OUSystem, s: float, t: float, X, Y, spec: Optional[QuadSpec] = None):
    """(∫ p(X, Z, s) p(Z, Y, t) dZ, p(X, Y, s + t)) for paired points X, Y.

    The Hermite nodes are placed on the Gaussian whose precision is the sum
    of the precisions of the two factors in Z, centred at its mode; the
    integrand itself is the product of two kernel_eval calls.
    """
    N = sys.dim
    nodes, weights = _gh(sys, spec)
    X, single = _points(X, N)
    Y, _ = _points(Y, N)
    cs = covariance_eval(sys, s)
    ct = covariance_eval(sys, t)
    # precisions of the two factors as Gaussians in Z: (2G_s)^{-1} and E_tᵀ(2G_t)^{-1}E_t
    Ps = np.linalg.inv(2.0 * cs.tK)
    Pt = ct.expB.T @ np.linalg.inv(2.0 * ct.tK) @ ct.expB
    P = 0.5 * (Ps + Pt + (Ps + Pt).T)
    rhs_vec = X @ (Ps @ cs.expB).T + Y @ (ct.expB.T @ np.linalg.inv(2.0 * ct.tK)).T
    mu = np.linalg.solve(P, rhs_vec.T).T
    L = np.linalg.cholesky(np.linalg.inv(P))
    Ls = math.sqrt(2.0) * L
    jac = float(np.prod(np.diag(Ls)))
    Z = mu[:, None, :] + nodes @ Ls.T
    g = kernel_eval(sys, s, X[:, None, :], Z) * kernel_eval(sys, t, Z, Y[:, None, :])
    lhs = jac * (g * np.exp(np.sum(nodes ** 2, axis=-1))[None]) @ weights
    rhs = kernel_eval(sys, s + t, X, Y)
    if single:
        return float(lhs[0]), float(np.ravel(rhs)[0])
    return lhs, rhs


def slice_norm_constant(N: int, r: float) -> float:
    """c_{N,r} with (∫p(X,Y,t)^r dY)^{1/r} = c_{N,r} / V(t)^{1-1/r}; r = inf gives c_N."""
    lo = log_omega(N)
    if r == math.inf:
        return math.exp(lo - 0.5 * N * math.log(4 * math.pi))
    return math.exp(((r - 1) * lo - 0.5 * N * (r - 1) * math.log(4 * math.pi)
                     - 0.5 * N * math.log(r)) / r)


def slice_norm(sys: OUSystem, t: float, X, r: float, spec: Optional[QuadSpec] = None) -> float:
    """(∫ p(X, Y, t)^r dY)^{1/r} by Hermite quadrature with nodes scaled to p^r."""
    ce = covariance_eval(sys, t)
    N = sys.dim
    nodes, weights = _gh(sys, spec)
    X = np.asarray(X, dtype=float).reshape(N)
    Ls = math.sqrt(2.0) * ce.L / math.sqrt(r)
    jac = math.sqrt(2.0) ** N * float(np.prod(np.diag(Ls)))
    Y = ce.expB @ X + math.sqrt(2.0) * nodes @ Ls.T
    p = kernel_eval(sys, t, X[None, :], Y)
    integral = jac * (p ** r * np.exp(np.sum(nodes ** 2, axis=-1))) @ weights
    return float(integral ** (1.0 / r))
