"""Acceptance criteria 1-14 at their stated tolerances.

Each test records one or more parts through the ``acceptance`` fixture; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import io
import math

import numpy as np
import pytest

from hypoelliptic.cli import main
from hypoelliptic.dimensions import growth_classify, table_reproduce
from hypoelliptic.frac_calc import (
    extension_neumann,
    extension_residual,
    fractional_power,
    generator_apply,
    poisson_kernel,
    power_field,
)
from hypoelliptic.harness import run_suite
from hypoelliptic.heat_kernel import (
    GaussianExpFn,
    chapman_kolmogorov,
    covariance_eval,
    kernel_dual_mass,
    kernel_eval,
    kernel_mass,
)
from hypoelliptic.numerics import gramian, mat_exp
from hypoelliptic.ou_model import BUILTIN_NAMES, builtin

SEED = 0xC0FFEE
HEAT1 = builtin("heat", dim=1)
KOLM = builtin("kolmogorov")


def test_c01_kolmogorov_covariance(acceptance):
    err = 0.0
    for t in (0.1, 1.0, 10.0):
        ref = np.array([[1.0, t / 2], [t / 2, t * t / 3]])
        err = max(err, float(np.abs(covariance_eval(KOLM, t).K - ref).max()))
    assert acceptance(1, "K(t) entrywise", err <= 1e-10, f"max abs error {err:.2e} <= 1e-10")


def test_c02_table_reproduction(acceptance):
    worst = {}
    ok = True
    for name in BUILTIN_NAMES:
        tab = table_reproduce(name, (0.1, 1.0, 5.0, 10.0))
        exp_row = growth_classify(builtin(name)).growth_class == "exponential"
        tol = np.array([1e-8, 1e-8, 1e-8, 1e-6 if exp_row else 1e-8])
        err = tab.rel_err
        ok &= bool(np.all(err <= tol))
        worst[name] = float(err.max())
    top = max(worst, key=worst.get)
    assert acceptance(2, "V(t) vs closed form", ok, f"worst {top} rel err {worst[top]:.2e}")


def test_c03_explicit_kolmogorov_kernel(acceptance):
    rng = np.random.default_rng(SEED)
    ratios = []
    for _ in range(20):
        t = rng.uniform(0.1, 5.0)
        v, x = rng.uniform(-2, 2, 2)
        w = v + rng.normal() * math.sqrt(t)
        y = x + t * v + rng.normal() * t ** 1.5
        q = ((v - w) ** 2 + (3 / t) * (v - w) * (y - x - t * v) + (3 / t ** 2) * (x - y + t * v) ** 2) / t
        ref = t ** -2 * math.exp(-q)
        ratios.append(kernel_eval(KOLM, t, np.array([v, x]), np.array([w, y])) / ref)
    ratios = np.array(ratios)
    spread = float(np.abs(ratios / ratios.mean() - 1).max())
    # the constant itself is (4π)^{-1} 12^{1/2}
    const = abs(ratios.mean() / (math.sqrt(12) / (4 * math.pi)) - 1)
    ok = spread <= 1e-8
    assert acceptance(3, "ratio constant", ok, f"spread {spread:.2e} <= 1e-8, constant off by {const:.1e}")


def test_c04_mass_and_dual_mass(acceptance):
    rng = np.random.default_rng(SEED)
    em = ed = 0.0
    for name in BUILTIN_NAMES:
        sys = builtin(name)
        X = rng.uniform(-1, 1, (5, sys.dim))
        for t in (0.1, 1.0, 10.0):
            em = max(em, float(np.abs(kernel_mass(sys, t, X) - 1).max()))
            target = math.exp(-t * sys.trace_B)
            ed = max(ed, float(np.abs(kernel_dual_mass(sys, t, X) - target).max() / target))
    ok = em <= 1e-8 and ed <= 1e-6
    assert acceptance(4, "mass / dual mass", ok, f"mass err {em:.1e} <= 1e-8, dual rel err {ed:.1e} <= 1e-6")


def test_c05_chapman_kolmogorov(acceptance):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for sys in (builtin("heat"), KOLM, builtin("kramers")):
        X = rng.uniform(-1, 1, (10, sys.dim))
        for s, t in ((0.2, 0.5), (1.0, 1.0)):
            Y = X @ mat_exp(sys.B, s + t).T + 0.5 * rng.uniform(-1, 1, (10, sys.dim))
            lhs, rhs = chapman_kolmogorov(sys, s, t, X, Y)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / np.abs(rhs))))
    assert acceptance(5, "Chapman-Kolmogorov", worst <= 1e-6, f"max rel err {worst:.1e} <= 1e-6")


def test_c06_gramian_composition(acceptance):
    worst = 0.0
    for name in BUILTIN_NAMES:
        sys = builtin(name)
        for s, t in ((0.3, 0.7), (1.0, 2.0), (0.1, 5.0), (2.5, 0.5)):
            comp = mat_exp(sys.B, t) @ gramian(sys.Q, sys.B, s) @ mat_exp(sys.B, t).T + gramian(sys.Q, sys.B, t)
            ref = gramian(sys.Q, sys.B, s + t)
            worst = max(worst, float(np.abs(comp - ref).max() / np.abs(ref).max()))
    assert acceptance(6, "G(s+t) composition", worst <= 1e-10, f"max rel err {worst:.1e} <= 1e-10")


D0_EXPECTED = {"heat": 2, "ou": 2, "kolmogorov": 4, "kramers": 4, "smoluchowski": 4,
               "friction-kolmogorov": 4, "degenerate-ou": 4}


def test_c07_dimension_report(acceptance):
    fails = []
    for name in BUILTIN_NAMES:
        rep = growth_classify(builtin(name))
        if rep.D0_structural != D0_EXPECTED[name]:
            fails.append(f"{name} structural D0 {rep.D0_structural}")
        if abs(rep.D0_fitted - rep.D0_structural) > 0.05:
            fails.append(f"{name} fitted D0 {rep.D0_fitted:.3f}")
    for N in (1, 3):
        rep = growth_classify(builtin("heat", dim=N))
        if rep.D0_structural != N or abs(rep.Dinf.value - N) > 0.05:
            fails.append(f"heat N={N}")
    checks = {
        "heat": lambda d: d.marker == "finite" and abs(d.value - 2) <= 0.05,
        "kolmogorov": lambda d: d.marker == "finite" and abs(d.value - 4) <= 0.05,
        "kramers": lambda d: d.marker == "finite" and abs(d.value - 2) <= 0.1,
        "friction-kolmogorov": lambda d: d.marker == "inf",
        "ou": lambda d: d.marker == "zero",
        "smoluchowski": lambda d: d.marker == "zero",
    }
    for name, check in checks.items():
        d = growth_classify(builtin(name)).Dinf
        if not check(d):
            fails.append(f"{name} D_inf {d.marker} {d.value:.3f}")
    ok = not fails
    assert acceptance(7, "D0 and D_inf (six rows)", ok, "all match" if ok else ", ".join(fails))


def test_c07_dimension_report_degenerate_ou(acceptance):
    # the target is 2n; the computed volume grows like t^{n/2}
    d = growth_classify(builtin("degenerate-ou")).Dinf
    ok = d.marker == "finite" and abs(d.value - 2) <= 0.1
    assert acceptance(7, "degenerate-ou D_inf", ok, f"D_inf = {d.value:.3f}, target 2n = 2 +- 0.1")


def test_c08_half_space_poisson_kernel(acceptance):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for N in (1, 2):
        sys = builtin("heat", dim=N)
        c = math.gamma((N + 1) / 2) / math.pi ** ((N + 1) / 2)
        for _ in range(10):
            X, Y = rng.uniform(-2, 2, (2, N))
            z = rng.uniform(0.1, 3.0)
            ref = c * z / (z * z + np.sum((X - Y) ** 2)) ** ((N + 1) / 2)
            worst = max(worst, abs(poisson_kernel(sys, 0.0, X, Y, z) / ref - 1))
    assert acceptance(8, "half-space Poisson kernel", worst <= 1e-6, f"max rel err {worst:.1e} <= 1e-6")


@pytest.mark.parametrize("sysname", ["heat1", "kolmogorov"])
def test_c09_inversion(acceptance, sysname):
    sys = HEAT1 if sysname == "heat1" else KOLM
    errs = []
    for s in (0.25, 0.5, 0.75):
        res = run_suite("inversion", sys, s=s)
        chk = next(c for c in res.checks if c.description.startswith("grid max |I_2s"))
        errs.append(chk.measured)
    worst = max(errs)
    assert acceptance(9, sysname, worst <= 1e-3, f"max grid err {worst:.1e} <= 1e-3 over s = 0.25, 0.5, 0.75")


def test_c10_power_composition(acceptance):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for sys in (HEAT1, KOLM):
        f = GaussianExpFn.unit(sys.dim)
        X = rng.uniform(-1.5, 1.5, (5, sys.dim))
        lhs = fractional_power(sys, 0.5, power_field(sys, 0.5, f), X)
        ref = -generator_apply(sys, f, X)
        worst = max(worst, float(np.max(np.abs(lhs - ref) / np.abs(ref))))
    assert acceptance(10, "(-A)^0.5 (-A)^0.5 f = -Af", worst <= 1e-4, f"max rel err {worst:.1e} <= 1e-4")


def test_c11_extension_problem(acceptance):
    zs = np.linspace(0.5, 2.0, 7)
    res_worst = neu_worst = 0.0
    for sys, X in ((HEAT1, np.array([[0.0], [0.7]])), (KOLM, np.array([[0.0, 0.0], [0.5, -0.4]]))):
        f = GaussianExpFn.unit(sys.dim)
        for s in (0.3, 0.5):
            resid, scale = extension_residual(sys, s, f, X, zs)
            res_worst = max(res_worst, float(np.max(np.abs(resid) / scale)))
            ref = fractional_power(sys, s, f, X)
            neu = extension_neumann(sys, s, f, X, 1e-3)
            neu_worst = max(neu_worst, float(np.max(np.abs(neu - ref) / np.abs(ref))))
    ok = res_worst <= 1e-3 and neu_worst <= 1e-2
    assert acceptance(11, "extension", ok,
                      f"PDE residual/scale {res_worst:.1e} <= 1e-3, Neumann rel err {neu_worst:.1e} <= 1e-2")


@pytest.mark.parametrize("sysname", ["heat1", "kolmogorov"])
def test_c12_maximal_bounds(acceptance, sysname):
    res = run_suite("maximal", HEAT1 if sysname == "heat1" else KOLM)
    ratio = next(c for c in res.checks if c.description.startswith("max over points")).measured
    assert acceptance(12, sysname, res.passed, f"max M*f / Cesaro sup {ratio:.3f} <= 3.5, weak type holds")


@pytest.mark.parametrize("case", ["heat2", "kolmogorov"])
def test_c13_sobolev_stability(acceptance, case):
    if case == "heat2":
        res = run_suite("sobolev", builtin("heat"), s=0.5, p=1.5)
    else:
        res = run_suite("sobolev", KOLM, s=0.5, p=2.0)
    change = next(c for c in res.checks if c.description.startswith("relative change")).measured
    assert acceptance(13, case, res.passed, f"ratio change under refinement {change:.1e} <= 0.2")


def test_c13_kramers_vol2(acceptance):
    g = growth_classify(builtin("kramers")).vol2_gamma
    assert acceptance(13, "kramers vol2", g > 0 and math.isfinite(g), f"vol2_gamma {g:.4g} > 0")


def test_c14_determinism(acceptance):
    runs = [("verify", "kolmogorov", "--suite", "core"),
            ("verify", "heat", "--dim", "1", "--suite", "maximal"),
            ("verify", "heat", "--dim", "1", "--suite", "inversion", "--s", "0.25")]
    ok = True
    for argv in runs:
        outs = set()
        for _ in range(2):
            buf = io.StringIO()
            main(list(argv), out=buf)
            outs.add(buf.getvalue())
        ok &= len(outs) == 1
    assert acceptance(14, "verify output", ok, f"{len(runs)} suites byte-identical over repeated runs")
