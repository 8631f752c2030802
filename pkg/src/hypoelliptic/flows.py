"""Batched evaluation of t -> P_t f(X) for Gaussian data and subordinated fields.

A *field* is anything exposing, for points X of shape (P, N) and time arrays:

* ``flow(X, ts)``               -> P_t g(X),                  shape (P, m)
* ``flow2(X, ts, taus)``        -> P_{t+τ} g(X),              shape (P, m, k)
* ``increment(X, ts, taus)``    -> P_{t+τ} g(X) - P_t g(X),   shape (P, m, k)
* ``gen_flow(X, ts, order)``    -> P_t A^order g(X),          shape (P, m)
* ``gen_flow2(X, ts, taus, order)``                           shape (P, m, k)

``increment`` must stay accurate when τ is tiny (no cancellation), which is
what makes the Balakrishnan integrand usable down to t ~ 1e-8.

GaussianField implements these in closed form.  SubordinatedField wraps
another field g into ∫_0^∞ w(ρ) [P_ρ g - κ g] dρ for weights of the form
C ρ^a e^{-λρ - β/ρ}; the result is again a field, so fractional powers and
potentials can be composed.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import QuadSpec, flow_matrices, gauss_hermite, quad_semiinf

# rough cap on the number of doubles held by one intermediate array
_BUDGET = 4_000_000
# time arrays longer than this are not memoized
_CACHE_MAX = 4096


class _LRU(OrderedDict):
    def __init__(self, size):
        super().__init__()
        self.size = size

    def get_or(self, key, make, cache=True):
        if not cache:
            return make()
        if key in self:
            self.move_to_end(key)
            return self[key]
        val = make()
        self[key] = val
        if len(self) > self.size:
            self.popitem(last=False)
        return val


# ---------------------------------------------------------------------------
# covariance batches


@dataclass(frozen=True)
class CovBatch:
    ts: np.ndarray
    E: np.ndarray  # e^{tB}
    D: np.ndarray  # e^{tB} - I
    S: np.ndarray  # 2 G(t), covariance of the kernel
    finite: np.ndarray


_COV_CACHE = _LRU(64)


def cov_batch(sys, ts) -> CovBatch:
    ts = np.ascontiguousarray(np.asarray(ts, dtype=float).ravel())

    def make():
        E, D, G = flow_matrices(sys.B, sys.Q, ts)
        finite = np.all(np.isfinite(G), axis=(-1, -2)) & np.all(np.isfinite(E), axis=(-1, -2))
        S = 2.0 * G
        E = E.copy()
        D = D.copy()
        E[~finite] = np.eye(sys.dim)
        D[~finite] = 0.0
        S[~finite] = 0.0
        for a in (E, D, S):
            a.setflags(write=False)
        return CovBatch(ts, E, D, S, finite)

    return _COV_CACHE.get_or((sys.key, ts.tobytes()), make, ts.size <= _CACHE_MAX)


def _psd_sqrt(M):
    """Symmetric square root of a stack of PSD matrices."""
    w, V = np.linalg.eigh(M)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


def _pushforward(Mh, S):
    """Given Mh = M^{1/2} and covariances S, return (M_mu, log det(I + S M)).

    M_mu = M^{1/2}(I + M^{1/2} S M^{1/2})^{-1} M^{1/2} is the precision of the
    Gaussian f after averaging over N(·, S).  Eigenvalues of the middle matrix
    are clipped at 0 so rounding can never produce an indefinite result.
    """
    C = Mh @ S @ Mh
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    c, V = np.linalg.eigh(C)
    c = np.clip(c, 0.0, None)
    inner = (V / (1.0 + c)[..., None, :]) @ np.swapaxes(V, -1, -2)
    Mmu = Mh @ inner @ Mh
    Mmu = 0.5 * (Mmu + np.swapaxes(Mmu, -1, -2))
    return Mmu, np.log1p(c).sum(axis=-1)


# ---------------------------------------------------------------------------
# Gaussian data


def _mv(A, x):
    """Broadcast matrix-vector product A @ x over leading axes.

    Unrolled over the (small) column index; much faster than reducing a
    length-N trailing axis.
    """
    out = A[..., :, 0] * x[..., None, 0]
    for j in range(1, A.shape[-1]):
        out = out + A[..., :, j] * x[..., None, j]
    return out


def _dot(x, y):
    out = x[..., 0] * y[..., 0]
    for j in range(1, x.shape[-1]):
        out = out + x[..., j] * y[..., j]
    return out


def _quad_features(X):
    """Monomials [X_i X_j (i <= j), X_i, 1] of points X (P, N), shape (P, F)."""
    N = X.shape[-1]
    iu, ju = np.triu_indices(N)
    return np.concatenate([X[:, iu] * X[:, ju], X, np.ones((X.shape[0], 1))], axis=1)


def _quad_coeffs(A, b, c):
    """Coefficients of XᵀAX + bᵀX + c against _quad_features, shape (..., F)."""
    N = A.shape[-1]
    iu, ju = np.triu_indices(N)
    Asym = A + np.swapaxes(A, -1, -2)
    quad = np.where(iu == ju, 0.5 * Asym[..., iu, ju], Asym[..., iu, ju])
    return np.concatenate([quad, b, c[..., None]], axis=-1)


def _eval_quadratic(X, coef):
    """Evaluate quadratics with coefficients coef (..., F) at X (P, N): shape (P, ...)."""
    lead = coef.shape[:-1]
    out = _quad_features(X) @ coef.reshape(-1, coef.shape[-1]).T
    return out.reshape((X.shape[0],) + lead)


class GaussBatch:
    """A batch of Gaussian exponentials written as

        log f_i(X) = logpeak_i - ½ (E_i X - m)ᵀ Mmu_i (E_i X - m).

    The propagated data P_t f has exactly this form with E = e^{tB}, which is
    better conditioned than expanding EᵀMmuE when e^{tB} grows.
    """

    def __init__(self, E, Mmu, m, logpeak):
        self.E = E
        self.Mmu = Mmu
        self.m = m
        self.logpeak = logpeak
        self._M = None

    @property
    def M(self):
        if self._M is None:
            M = np.swapaxes(self.E, -1, -2) @ self.Mmu @ self.E
            self._M = 0.5 * (M + np.swapaxes(M, -1, -2))
        return self._M

    def residual(self, X):
        # E X - m, shape (P, β, N)
        return _mv(self.E[None], X[:, None, :]) - self.m

    @property
    def b(self):
        """Linear coefficient Eᵀ M_mu m, so that ∇ log f = -M X + b."""
        return _mv(np.swapaxes(self.E, -1, -2), _mv(self.Mmu, self.m))

    def log_value(self, X):
        # expanded as a quadratic in X, evaluated for all points with one matmul
        Mm = _mv(self.Mmu, self.m)
        fin = np.isfinite(self.logpeak)
        c = np.where(fin, self.logpeak - 0.5 * _dot(self.m, Mm), 0.0)
        coef = _quad_coeffs(-0.5 * self.M, self.b, c)
        out = _eval_quadratic(X, coef)
        return np.where(fin[None, :], out, -np.inf)

    def grad_log(self, X):
        r = self.residual(X)
        return -_mv(np.swapaxes(self.E, -1, -2)[None], _mv(self.Mmu[None], r))


def generator_ratio(sys, fam: GaussBatch, X, order: int):
    """(A^order f)/f for every member of the batch, shape (P, β)."""
    Q, B = sys.Q, sys.B
    g = fam.grad_log(X)
    M = fam.M
    BX = X @ B.T
    Qg = g @ Q
    trQM = np.einsum("ij,bji->b", Q, M)
    q = _dot(g, Qg) - trQM[None, :] + _dot(BX[:, None, :], g)
    if order == 1:
        return q
    if order != 2:
        raise ValueError("closed-form generator powers are implemented for order 1 and 2")
    grad_q = -2.0 * _mv(M[None], Qg) + g @ B - _mv(M[None], BX[:, None, :])
    hess_q = 2.0 * M @ Q @ M - B.T @ M - M @ B
    Aq = np.einsum("ij,bji->b", Q, hess_q)[None, :] + _dot(BX[:, None, :], grad_q)
    return Aq + q * q + 2.0 * _dot(grad_q, Qg)


class GaussianField:
    """P_t f for f(Y) = exp(logpeak - ½(Y - m)ᵀM(Y - m)), M positive definite."""

    max_order = 2

    def __init__(self, sys, M, m, logpeak):
        self.sys = sys
        self.M0 = np.asarray(M, dtype=float)
        self.m0 = np.asarray(m, dtype=float)
        self.logpeak0 = float(logpeak)
        self.Mh0 = _psd_sqrt(self.M0)
        self._fams = _LRU(16)

    def family(self, ts) -> GaussBatch:
        ts = np.ascontiguousarray(np.asarray(ts, dtype=float).ravel())

        def make():
            cov = cov_batch(self.sys, ts)
            Mmu, ld = _pushforward(self.Mh0, cov.S)
            logpeak = np.where(cov.finite, self.logpeak0 - 0.5 * ld, -np.inf)
            return GaussBatch(cov.E, Mmu, self.m0, logpeak)

        return self._fams.get_or(ts.tobytes(), make, ts.size <= _CACHE_MAX)

    def flow(self, X, ts):
        with np.errstate(under="ignore"):
            return np.exp(self.family(ts).log_value(X))

    def flow2(self, X, ts, taus):
        ts = np.asarray(ts, dtype=float)
        taus = np.asarray(taus, dtype=float)
        P = X.shape[0]
        out = np.empty((P, ts.size, taus.size))
        for sl in _chunks(ts.size, max(1, _BUDGET // max(1, 4 * P * taus.size))):
            tt = (ts[sl, None] + taus[None, :]).ravel()
            out[:, sl, :] = self.flow(X, tt).reshape(P, -1, taus.size)
        return out

    def gen_flow(self, X, ts, order=1):
        fam = self.family(ts)
        with np.errstate(under="ignore"):
            val = np.exp(fam.log_value(X))
        return generator_ratio(self.sys, fam, X, order) * val

    def gen_flow2(self, X, ts, taus, order=1):
        ts = np.asarray(ts, dtype=float)
        taus = np.asarray(taus, dtype=float)
        P = X.shape[0]
        out = np.empty((P, ts.size, taus.size))
        for sl in _chunks(ts.size, max(1, _BUDGET // max(1, 8 * P * taus.size))):
            tt = (ts[sl, None] + taus[None, :]).ravel()
            out[:, sl, :] = self.gen_flow(X, tt, order).reshape(P, -1, taus.size)
        return out

    def increment(self, X, ts, taus):
        ts = np.asarray(ts, dtype=float).ravel()
        taus = np.asarray(taus, dtype=float).ravel()
        P, N = X.shape
        out = np.empty((P, ts.size, taus.size))
        step = max(1, _BUDGET // max(1, 2 * P * taus.size * N))
        for sl in _chunks(ts.size, step):
            out[:, sl, :] = self._increment_block(X, ts[sl], taus)
        return out

    def _increment_block(self, X, ts, taus):
        """P_τ(P_t f) - P_t f by completing the square around X + (e^{τB}-I)X.

        With φ = log P_t f, g = ∇φ(X), δ = (e^{τB} - I)X, h = g - Mδ and
        W = (I + S_τ M)^{-1} S_τ the exact log-ratio is
            gᵀδ - ½δᵀMδ + ½hᵀWh - ½ log det(I + S_τ M),
        and the increment is f_t(X)·expm1(log-ratio).  Where S_τ M is not
        small the plain difference of two values is already accurate and is
        used instead.
        """
        fam = self.family(ts)
        cov = cov_batch(self.sys, taus)
        M = fam.M  # (m, N, N)
        S = cov.S  # (k, N, N)
        Mh = _psd_sqrt(M)
        C = Mh[:, None] @ S[None, :] @ Mh[:, None]
        c = np.linalg.eigvalsh(0.5 * (C + np.swapaxes(C, -1, -2)))
        c = np.clip(c, 0.0, None)
        small = (c.max(axis=-1) <= 1.0) & cov.finite[None, :] & np.isfinite(fam.logpeak)[:, None]
        logdet = np.log1p(c).sum(axis=-1)
        N = M.shape[-1]
        I = np.eye(N)
        R = I + S[None, :] @ M[:, None]
        R[~small] = I
        W = np.linalg.solve(R, np.broadcast_to(S[None, :], R.shape))
        W = 0.5 * (W + np.swapaxes(W, -1, -2))
        # entries that take the direct route below are zeroed so they cannot overflow
        W[~small] = 0.0
        D = np.where(small.any(axis=0)[:, None, None], cov.D, 0.0)  # (k, N, N)
        # With g = -M X + b, δ = D X and h = g - Mδ = -M e^{τB} X + b, the log-ratio
        # is a quadratic in X; its coefficients are formed per (t, τ) pair.
        b = np.where(np.isfinite(fam.logpeak)[:, None], fam.b, 0.0)  # (m, N)
        Mk = M[:, None]  # (m, 1, N, N)
        H = Mk @ (I + D)[None]  # (m, k, N, N)
        WH = W @ H
        Dt = np.swapaxes(D, -1, -2)[None]
        Aq = -Mk @ D[None] - 0.5 * Dt @ Mk @ D[None] + 0.5 * np.swapaxes(H, -1, -2) @ WH
        Wb = _mv(W, b[:, None, :])  # (m, k, N)
        bq = _mv(Dt, b[:, None, :]) - _mv(np.swapaxes(H, -1, -2), Wb)
        cq = 0.5 * _dot(b[:, None, :], Wb) - 0.5 * logdet
        expo = _eval_quadratic(X, _quad_coeffs(Aq, bq, cq))  # (P, m, k)
        with np.errstate(under="ignore"):
            base = np.exp(fam.log_value(X))  # (P, m)
        inc = base[:, :, None] * np.expm1(np.where(small[None], expo, 0.0))
        if not np.all(small):
            direct = self.flow2(X, ts, taus) - base[:, :, None]
            inc = np.where(small[None], inc, direct)
        return inc


class CallableField:
    """P_t f for an arbitrary vectorized scalar field, by Gauss–Hermite quadrature.

    Generator values come from central finite differences, so everything
    derived from this field has an accuracy floor of roughly 1e-5.
    """

    max_order = 1

    def __init__(self, sys, fn, gh_order):
        self.sys = sys
        self.fn = fn
        self.nodes, self.weights = gauss_hermite(sys.dim, gh_order)
        self.norm = math.pi ** (-sys.dim / 2)

    def _average(self, func, X, ts):
        cov = cov_batch(self.sys, ts)
        L = _chol_psd(cov.S)  # (m, N, N)
        mu = _mv(cov.E[None], X[:, None, :])
        Y = mu[:, :, None, :] + math.sqrt(2.0) * np.einsum("mij,kj->mki", L, self.nodes)[None]
        vals = func(Y)
        return self.norm * vals @ self.weights

    def flow(self, X, ts):
        return self._average(self.fn, X, ts)

    def flow2(self, X, ts, taus):
        ts = np.asarray(ts, dtype=float)
        taus = np.asarray(taus, dtype=float)
        tt = (ts[:, None] + taus[None, :]).ravel()
        return self.flow(X, tt).reshape(X.shape[0], ts.size, taus.size)

    def increment(self, X, ts, taus):
        return self.flow2(X, ts, taus) - self.flow(X, ts)[:, :, None]

    def gen_flow(self, X, ts, order=1):
        if order != 1:
            raise NotImplementedError("finite-difference fields support order 1 only")
        return self._average(lambda Y: fd_generator(self.sys, self.fn, Y), X, ts)

    def gen_flow2(self, X, ts, taus, order=1):
        ts = np.asarray(ts, dtype=float)
        taus = np.asarray(taus, dtype=float)
        tt = (ts[:, None] + taus[None, :]).ravel()
        return self.gen_flow(X, tt, order).reshape(X.shape[0], ts.size, taus.size)


def _chol_psd(S):
    """Batched lower factor of PSD matrices, tolerant of exact zeros."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(S)
        F = V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
        # QR of Fᵀ gives a triangular factor with the same Gram matrix
        _, R = np.linalg.qr(np.swapaxes(F, -1, -2))
        return np.swapaxes(R, -1, -2)


def fd_generator(sys, fn, Y):
    """A f(Y) by central differences with step 1e-5·(1 + |Y|); Y has shape (..., N)."""
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[-1]
    h = 1e-5 * (1.0 + np.linalg.norm(Y, axis=-1))[..., None]
    f0 = fn(Y)
    grad = np.zeros(Y.shape)
    hess = np.zeros(Y.shape + (N,))
    eye = np.eye(N)
    for i in range(N):
        ei = eye[i] * h
        fp = fn(Y + ei)
        fm = fn(Y - ei)
        hi = h[..., 0]
        grad[..., i] = (fp - fm) / (2 * hi)
        hess[..., i, i] = (fp - 2 * f0 + fm) / hi ** 2
        for j in range(i + 1, N):
            if sys.Q[i, j] == 0.0:
                continue
            ej = eye[j] * h
            v = (fn(Y + ei + ej) - fn(Y + ei - ej) - fn(Y - ei + ej) + fn(Y - ei - ej)) / (4 * hi ** 2)
            hess[..., i, j] = hess[..., j, i] = v
    BY = Y @ sys.B.T
    return np.einsum("ij,...ji->...", sys.Q, hess) + np.einsum("...i,...i->...", BY, grad)


# ---------------------------------------------------------------------------
# subordination


@dataclass(frozen=True)
class TimeWeight:
    """w(ρ) = scale · ρ^exponent · e^{-decay·ρ - beta/ρ}; kappa=1 integrates P_ρ g - g."""

    exponent: float
    scale: float
    decay: float = 0.0
    beta: float = 0.0
    kappa: int = 0


def _chunks(n, size):
    size = max(1, int(size))
    for i in range(0, n, size):
        yield slice(i, min(n, i + size))


class SubordinatedField:
    """The field X -> ∫_0^∞ w(ρ)[P_ρ g(X) - κ g(X)] dρ for a base field g."""

    def __init__(self, base, weight: TimeWeight, spec: Optional[QuadSpec] = None):
        self.base = base
        self.w = weight
        self.spec = spec or QuadSpec()
        self.max_order = base.max_order
        self.sys = base.sys
        self.unconverged = 0

    # every public method integrates a ρ-indexed array over its last axis
    def _integrate(self, h, series):
        w = self.w
        if w.beta > 0:
            beta = w.beta

            def hh(rho):
                with np.errstate(under="ignore", over="ignore"):
                    fac = np.exp(-beta / rho)
                return h(rho) * fac

            res = quad_semiinf(hh, self.spec, w.exponent, decay_rate=w.decay,
                               extra_splits=[beta], warn=False)
        else:
            res = quad_semiinf(h, self.spec, w.exponent, decay_rate=w.decay,
                               small_time_series=series, warn=False)
        if not res.converged:
            self.unconverged += 1
        return w.scale * np.asarray(res.value)

    def _chunk_size(self, P, k=1):
        return max(1, _BUDGET // max(1, 40 * P * k * 64))

    def flow(self, X, ts):
        ts = np.asarray(ts, dtype=float).ravel()
        P = X.shape[0]
        out = np.empty((P, ts.size))
        base = self.base
        for sl in _chunks(ts.size, self._chunk_size(P)):
            tc = ts[sl]
            if self.w.kappa:
                h = lambda rho, tc=tc: base.increment(X, tc, rho)
                series = (None, base.gen_flow(X, tc, 1)) if self.w.beta == 0 else None
            else:
                h = lambda rho, tc=tc: base.flow2(X, tc, rho)
                series = (base.flow(X, tc), base.gen_flow(X, tc, 1)) if self.w.beta == 0 else None
            out[:, sl] = self._integrate(h, series)
        return out

    def flow2(self, X, ts, taus):
        ts = np.asarray(ts, dtype=float).ravel()
        taus = np.asarray(taus, dtype=float).ravel()
        tt = (ts[:, None] + taus[None, :]).ravel()
        return self.flow(X, tt).reshape(X.shape[0], ts.size, taus.size)

    def increment(self, X, ts, taus):
        ts = np.asarray(ts, dtype=float).ravel()
        taus = np.asarray(taus, dtype=float).ravel()
        P = X.shape[0]
        out = np.empty((P, ts.size, taus.size))
        base = self.base
        kappa = self.w.kappa
        for sl in _chunks(ts.size, 1):
            tc = ts[sl]
            for kl in _chunks(taus.size, self._chunk_size(P)):
                kc = taus[kl]

                def h(rho, tc=tc, kc=kc):
                    tr = (tc[:, None] + rho[None, :]).ravel()
                    v = base.increment(X, tr, kc).reshape(P, tc.size, rho.size, kc.size)
                    v = np.moveaxis(v, 2, -1)
                    if kappa:
                        v = v - base.increment(X, tc, kc)[..., None]
                    return v

                if self.w.beta == 0:
                    h1 = base.gen_flow2(X, tc, kc, 1) - base.gen_flow(X, tc, 1)[:, :, None]
                    h0 = None if kappa else base.increment(X, tc, kc)
                    series = (h0, h1)
                else:
                    series = None
                out[:, sl, kl] = self._integrate(h, series)
        return out

    def gen_flow(self, X, ts, order=1):
        ts = np.asarray(ts, dtype=float).ravel()
        P = X.shape[0]
        out = np.empty((P, ts.size))
        base = self.base
        kappa = self.w.kappa
        for sl in _chunks(ts.size, self._chunk_size(P)):
            tc = ts[sl]
            g0 = base.gen_flow(X, tc, order)

            def h(rho, tc=tc, g0=g0):
                v = base.gen_flow2(X, tc, rho, order)
                return v - g0[..., None] if kappa else v

            series = None
            if self.w.beta == 0 and order + 1 <= base.max_order:
                series = (None if kappa else g0, base.gen_flow(X, tc, order + 1))
            out[:, sl] = self._integrate(h, series)
        return out

    def gen_flow2(self, X, ts, taus, order=1):
        ts = np.asarray(ts, dtype=float).ravel()
        taus = np.asarray(taus, dtype=float).ravel()
        tt = (ts[:, None] + taus[None, :]).ravel()
        return self.gen_flow(X, tt, order).reshape(X.shape[0], ts.size, taus.size)
