"""Verification suites: each runs a family of numerical checks of one analytic identity or bound.

A suite returns a :class:`SuiteResult`; its JSON form is deterministic for a
given (system, seed, quadrature settings), with checks sorted by description
and every float written with 17 significant digits.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dimensions import dinf_estimate, growth_classify
from .errors import GuardError
from .frac_calc import (
    MAXIMAL_CONSTANT,
    box_rule,
    cesaro_sup,
    fractional_power,
    poisson_maximal,
    power_field,
    riesz_apply,
    riesz_field,
)
from .heat_kernel import (
    ConstantFn,
    GaussianExpFn,
    as_field,
    chapman_kolmogorov,
    covariance_eval,
    kernel_dual_mass,
    kernel_mass,
    require_hypoelliptic,
    semigroup_apply,
    slice_norm,
    slice_norm_constant,
)
from .numerics import QuadSpec, gramian, mat_exp
from .ou_model import OUSystem

__all__ = [
    "Check",
    "SuiteResult",
    "DEFAULT_SEED",
    "SUITES",
    "load_function",
    "run_suite",
    "suite_inversion",
    "suite_maximal",
    "suite_sobolev",
    "suite_ultracontractive",
    "suite_core_identities",
    "to_json",
]

DEFAULT_SEED = 0xC0FFEE
NESTED_SPEC = QuadSpec(rel_tol=1e-8)


@dataclass
class Check:
    description: str
    measured: object
    target: object
    tolerance: object
    status: str  # "pass", "fail" or "skip"
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        d = {
            "description": self.description,
            "measured": self.measured,
            "target": self.target,
            "tolerance": self.tolerance,
            "status": self.status,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class SuiteResult:
    suite: str
    system: str
    params: dict
    checks: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, description, measured, target, tolerance, ok, note=""):
        self.checks.append(Check(description, measured, target, tolerance,
                                 "pass" if ok else "fail", note))

    def skip(self, description, note):
        self.checks.append(Check(description, None, None, None, "skip", note))

    def to_dict(self) -> dict:
        # runtime is left out so that repeated runs serialize identically
        return {
            "suite": self.suite,
            "system": self.system,
            "params": dict(sorted(self.params.items())),
            "passed": self.passed,
            "checks": [c.to_dict() for c in sorted(self.checks, key=lambda c: c.description)],
        }


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return {True: "true", False: "false", None: "null"}[x]
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(x, str):
        import json

        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{_fmt(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def to_json(obj) -> str:
    """JSON text with every float written to 17 significant digits; inf/nan become strings."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return _fmt(obj)


def load_function(spec, dim: Optional[int] = None) -> GaussianExpFn:
    """A test function from a dict {"kind": "gaussian-exp", "M", "b", "c"} or a JSON file path."""
    import json

    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    f = GaussianExpFn.from_dict(spec)
    if dim is not None and f.dim != dim:
        raise ValueError(f"function has dimension {f.dim}, system has {dim}")
    return f


def _require_trace(sys, suite):
    if sys.trace_B < -1e-12:
        raise GuardError(f"suite {suite} needs tr B >= 0 (got {sys.trace_B:g})")


def _point_grid(N, k=5, half=2.0):
    """5x5 grid on the first two axes (25 points on a line when N = 1)."""
    if N == 1:
        return np.linspace(-half, half, k * k)[:, None]
    xs = np.linspace(-half, half, k)
    X = np.zeros((k * k, N))
    X[:, 0] = np.repeat(xs, k)
    X[:, 1] = np.tile(xs, k)
    return X


def _rng_points(seed, n, N, half=2.0):
    return np.random.default_rng(seed).uniform(-half, half, size=(n, N))


def _spec(spec, default):
    return spec if spec is not None else default


# ---------------------------------------------------------------------------
# suites


def suite_inversion(sys: OUSystem, s: float = 0.5, f: Optional[GaussianExpFn] = None,
                    spec: Optional[QuadSpec] = None, seed: int = DEFAULT_SEED, tol: float = 1e-3):
    """I_{2s}((-A)^s f) = f and (-A)^s(I_{2s} f) = f on a 5x5 grid.

    The first composition converges whenever tr B >= 0 because P_t (-A)^s f
    decays faster than P_t f; it is always evaluated.  The second needs I_{2s} f
    itself, so it runs only when 2s <= 0.9·D̂_∞ (or the volume grows
    exponentially) and is reported as skipped otherwise.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    require_hypoelliptic(sys)
    _require_trace(sys, "inversion")
    dinf = dinf_estimate(sys)
    if dinf.marker == "zero":
        raise GuardError("suite inversion: bounded volume (D_inf = 0), Riesz potentials undefined")
    f = f or GaussianExpFn.unit(sys.dim)
    spec = _spec(spec, NESTED_SPEC)
    res = SuiteResult("inversion", sys.name, {"s": s, "dim": sys.dim})
    X = _point_grid(sys.dim)
    fx = f(X)
    v = riesz_apply(sys, 2 * s, power_field(sys, s, f, spec), X, spec, guard=False)
    err = float(np.max(np.abs(v - fx)))
    res.add("grid max |I_2s((-A)^s f) - f|", err, 0.0, tol, err <= tol)
    alpha = 2 * s
    if dinf.marker == "inf" or alpha <= 0.9 * dinf.value:
        v2 = fractional_power(sys, s, riesz_field(sys, alpha, f, spec), X, spec)
        err2 = float(np.max(np.abs(v2 - fx)))
        res.add("grid max |(-A)^s(I_2s f) - f|", err2, 0.0, tol, err2 <= tol)
    else:
        res.skip("grid max |(-A)^s(I_2s f) - f|",
                 f"2s = {alpha:g} exceeds 0.9 * D_inf estimate {dinf.value:.6g}; I_2s f is not defined")
    return res


def suite_maximal(sys: OUSystem, f=None, box: Optional[float] = None, grid: int = 41,
                  spec: Optional[QuadSpec] = None, seed: int = DEFAULT_SEED, n_points: int = 10):
    """Pointwise M*f <= 3.5·(Cesàro sup) and the weak-type (1,1) bound on a grid.

    The level-set measure is the number of grid cells (inside a box of
    ±``box`` around the mean of f) where M*f > λ times the cell volume; the
    box truncation can only understate it, so the inequality remains a
    valid check.
    """
    require_hypoelliptic(sys)
    _require_trace(sys, "maximal")
    N = sys.dim
    f = GaussianExpFn.unit(N) if f is None else f
    res = SuiteResult("maximal", sys.name, {"dim": N, "grid": grid})
    A = MAXIMAL_CONSTANT
    if isinstance(f, ConstantFn):
        if f.value != 0:
            raise ValueError("the weak-type check needs an integrable f")
        for lam in (0.1, 0.5, 1.0):
            res.add(f"weak type lambda={lam:g}*sup: level set measure", 0.0, 0.0, 0.0, True,
                    "f = 0: every level set is empty")
        return res
    X = _rng_points(seed, n_points, N)
    mstar = poisson_maximal(sys, f, X, spec=spec)
    ces = cesaro_sup(sys, f, X, spec=spec)
    ratio = float(np.max(mstar / ces))
    res.add("max over points of M*f / Cesaro sup", ratio, A, 0.0, ratio <= A)

    half = 8.0 if box is None else float(box)
    lo = f.mean - half * f.std()
    hi = f.mean + half * f.std()
    axes = [a + (b - a) * (np.arange(grid) + 0.5) / grid for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    G = np.stack([m.ravel() for m in mesh], axis=-1)
    cell = float(np.prod((hi - lo) / grid))
    Mg = poisson_maximal(sys, f, G, spec=spec)
    l1 = f.lp_norm(1)
    sup = f.sup_norm()
    for frac in (0.1, 0.5, 1.0):
        lam = frac * sup
        meas = float(np.count_nonzero(Mg > lam) * cell)
        bound = 2 * A / lam * l1
        res.add(f"weak type lambda={frac:g}*sup: level set measure", meas, bound, 0.0, meas <= bound)
    return res


def _sobolev_family(N):
    base = GaussianExpFn.unit(N)
    fam = []
    shift = np.zeros(N)
    shift[0] = 1.0
    for lam in (0.5, 0.75, 1.0, 1.5, 2.0):
        g = base.scaled(lam)
        fam.append((f"dilation {lam:g}", g))
        fam.append((f"dilation {lam:g} shifted", g.shifted(shift)))
    return fam


def _frac_lp(sys, s, f, p, order, width, spec):
    lo = f.mean - width * f.std()
    hi = f.mean + width * f.std()
    nodes, weights = box_rule(lo, hi, order)
    vals = fractional_power(sys, s, f, nodes, spec)
    v = np.abs(vals)
    return float((v ** p @ weights) ** (1.0 / p))


def suite_sobolev(sys: OUSystem, s: float = 0.5, p: float = 1.5, D: Optional[float] = None,
                  spec: Optional[QuadSpec] = None, seed: int = DEFAULT_SEED, order: Optional[int] = None):
    """Boundedness of r(f) = ‖f‖_q / ‖(-A)^s f‖_p over dilated and translated Gaussians.

    1/q = 1/p - 2s/D with D the structural dimension at zero (which must
    satisfy the volume lower bound).  Passes when the largest ratio is finite
    and moves by at most 20% under one refinement of the spatial rule.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if not p > 1:
        raise ValueError("p must exceed 1")
    require_hypoelliptic(sys)
    _require_trace(sys, "sobolev")
    rep = growth_classify(sys, D)
    D = rep.D_used
    if not rep.gamma_D > 0:
        raise GuardError(f"suite sobolev: volume bound V(t) >= gamma t^(D/2) fails for D = {D:g}")
    if not p < D / (2 * s):
        raise GuardError(f"suite sobolev needs p < D/(2s) = {D / (2 * s):g} (got p = {p:g})")
    q = 1.0 / (1.0 / p - 2 * s / D)
    N = sys.dim
    order = order or (64 if N <= 2 else 32)
    fine = int(round(order * 1.5))
    spec = _spec(spec, QuadSpec())
    res = SuiteResult("sobolev", sys.name, {"s": s, "p": p, "q": q, "D": D, "order": order})
    coarse_r, fine_r = [], []
    for label, f in _sobolev_family(N):
        fq = f.lp_norm(q)
        coarse_r.append(fq / _frac_lp(sys, s, f, p, order, 10.0, spec))
        fine_r.append(fq / _frac_lp(sys, s, f, p, fine, 12.0, spec))
    rmax, rmax_fine = max(coarse_r), max(fine_r)
    res.add("max ratio ||f||_q / ||(-A)^s f||_p is finite", rmax, "finite", 0.0,
            bool(np.isfinite(rmax) and rmax > 0))
    change = abs(rmax_fine / rmax - 1.0)
    res.add("relative change of max ratio under refinement", change, 0.0, 0.2, change <= 0.2)
    dil = [r for (label, _), r in zip(_sobolev_family(N), coarse_r) if "shifted" not in label]
    res.add("unshifted dilation ratios bounded by max ratio", max(dil), rmax, 0.0, max(dil) <= rmax)
    return res


def suite_ultracontractive(sys: OUSystem, p: float = 2.0, f=None, spec: Optional[QuadSpec] = None,
                           seed: int = DEFAULT_SEED, n_points: int = 10):
    """|P_t f(X)| V(t)^{1/p} / ‖f‖_p <= c_{N,p'} (Hölder with the exact kernel-slice norm)."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    require_hypoelliptic(sys)
    N = sys.dim
    f = GaussianExpFn.unit(N) if f is None else f
    pc = math.inf if p == 1 else p / (p - 1)
    c = slice_norm_constant(N, pc)
    res = SuiteResult("ultracontractive", sys.name, {"p": p, "dim": N})
    X = _rng_points(seed, n_points, N)
    ts = (0.1, 1.0, 10.0)
    if isinstance(f, ConstantFn) and f.value == 0:
        for t in ts:
            res.add(f"t={t:g}: max |P_t f| V^(1/p) / c", 0.0, 1.0, 0.0, True, "f = 0")
        return res
    fp = f.lp_norm(p)
    field_ = as_field(sys, f)
    for t in ts:
        V = covariance_eval(sys, t).V
        vals = np.abs(field_.flow(X, np.array([t]))[:, 0])
        r = float(np.max(vals) * V ** (1.0 / p) / fp / c)
        res.add(f"t={t:g}: max |P_t f| V^(1/p) / (c ||f||_p)", r, 1.0, 0.0, r <= 1.0 + 1e-12)
    if pc != math.inf:
        dev = 0.0
        for t in ts:
            V = covariance_eval(sys, t).V
            for x in X[:3]:
                sn = slice_norm(sys, t, x, pc, spec) * V ** (1.0 - 1.0 / pc)
                dev = max(dev, abs(sn / c - 1.0))
        res.add("kernel slice norm matches c_{N,p'} / V^(1/p)", dev, 0.0, 1e-6, dev <= 1e-6)
    rep = growth_classify(sys)
    if rep.gamma_D > 0 and sys.trace_B >= -1e-12:
        from .frac_calc import poisson_apply, DEFAULT_Z_GRID

        zs = DEFAULT_Z_GRID
        Pz = np.abs(poisson_apply(sys, zs, f, X[:3], spec))
        scaled = Pz * zs[None, :] ** (rep.D_used / p) / fp
        top = float(scaled.max())
        res.add("max |P_z f| z^(D/p) / ||f||_p over z grid is finite", top, "finite", 0.0,
                bool(np.isfinite(top)))
    else:
        res.skip("max |P_z f| z^(D/p) / ||f||_p over z grid is finite",
                 "volume lower bound or trace hypothesis not available")
    return res


def suite_core_identities(sys: OUSystem, spec: Optional[QuadSpec] = None, seed: int = DEFAULT_SEED):
    """Mass, dual mass, Chapman–Kolmogorov, generator/semigroup commutation, Gramian composition."""
    require_hypoelliptic(sys)
    N = sys.dim
    res = SuiteResult("core", sys.name, {"dim": N})
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(10, N))
    Y = rng.uniform(-1, 1, size=(10, N))
    for t in (0.1, 1.0, 10.0):
        m = kernel_mass(sys, t, X, spec)
        e = float(np.max(np.abs(m - 1.0)))
        res.add(f"mass t={t:g}", e, 0.0, 1e-8, e <= 1e-8)
        dm = kernel_dual_mass(sys, t, Y, spec)
        target = math.exp(-t * sys.trace_B)
        e = float(np.max(np.abs(dm - target)) / target)
        res.add(f"dual mass t={t:g} (relative to e^(-t tr B))", e, 0.0, 1e-6, e <= 1e-6)
    for s, t in ((0.2, 0.5), (1.0, 1.0)):
        # pair Y with the drifted X so that the kernel values are not negligibly small
        Yc = X @ mat_exp(sys.B, s + t).T + 0.5 * Y
        lhs, rhs = chapman_kolmogorov(sys, s, t, X, Yc, spec)
        e = float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))
        res.add(f"Chapman-Kolmogorov s={s:g} t={t:g}", e, 0.0, 1e-6, e <= 1e-6)
    # commutation: A P_t f = P_t A f, and the centred difference quotient
    f = GaussianExpFn.unit(N)
    fld = as_field(sys, f)
    from .frac_calc import generator_apply

    t = 0.5
    lhs = fld.gen_flow(X, np.array([t]), 1)[:, 0]
    rhs = semigroup_apply(sys, t, lambda Z: generator_apply(sys, f, Z.reshape(-1, N)).reshape(Z.shape[:-1]),
                          X, spec)
    e = float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs))))
    res.add("A P_t f = P_t A f (t=0.5)", e, 0.0, 1e-8, e <= 1e-8)
    errs = []
    for h in (1e-2, 1e-3):
        d = (fld.flow(X, np.array([t + h]))[:, 0] - fld.flow(X, np.array([t - h]))[:, 0]) / (2 * h)
        errs.append(float(np.max(np.abs(d - lhs))))
    order = math.log10(errs[0] / errs[1]) if errs[1] > 0 else math.inf
    res.add("difference quotient order (h = 1e-2, 1e-3)", order, 1.9, 0.0, order >= 1.9)
    worst = 0.0
    for s_, t_ in ((0.3, 0.7), (1.0, 2.0), (0.1, 5.0)):
        Gs = gramian(sys.Q, sys.B, s_)
        Gt = gramian(sys.Q, sys.B, t_)
        Gst = gramian(sys.Q, sys.B, s_ + t_)
        E = mat_exp(sys.B, t_)
        comp = E @ Gs @ E.T + Gt
        worst = max(worst, float(np.abs(comp - Gst).max() / np.abs(Gst).max()))
    res.add("Gramian composition G(s+t) = e^{tB}G(s)e^{tB*} + G(t)", worst, 0.0, 1e-10, worst <= 1e-10)
    return res


SUITES = {
    "inversion": suite_inversion,
    "maximal": suite_maximal,
    "sobolev": suite_sobolev,
    "ultracontractive": suite_ultracontractive,
    "core": suite_core_identities,
}


def run_suite(name: str, sys: OUSystem, **kw) -> SuiteResult:
    """Run a suite by name, timing it; unknown keyword arguments are dropped per suite."""
    import inspect

    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    fn = SUITES[name]
    params = inspect.signature(fn).parameters
    kw = {k: v for k, v in kw.items() if k in params and v is not None}
    t0 = time.perf_counter()
    res = fn(sys, **kw)
    res.runtime = time.perf_counter() - t0
    return res
