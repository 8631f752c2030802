import io
import json
import math

import numpy as np
import pytest

from hypoelliptic.cli import main
from hypoelliptic.errors import GuardError
from hypoelliptic.harness import SUITES, load_function, run_suite, to_json
from hypoelliptic.heat_kernel import ConstantFn, GaussianExpFn
from hypoelliptic.ou_model import BUILTIN_NAMES, builtin, structure_report


def run_cli(*argv):
    out = io.StringIO()
    rc = main(list(argv), out=out)
    return rc, out.getvalue()


# ---------------------------------------------------------------------------
# suites


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_core_suite_passes(name):
    res = run_suite("core", builtin(name))
    assert res.passed, [c.to_dict() for c in res.checks if not c.passed]
    assert len(res.checks) >= 10


@pytest.mark.parametrize("name", ["heat", "kolmogorov", "kramers", "ou"])
def test_ultracontractive_suite(name):
    res = run_suite("ultracontractive", builtin(name), p=2.0)
    assert res.passed, [c.to_dict() for c in res.checks if not c.passed]


def test_ultracontractive_zero_function():
    res = run_suite("ultracontractive", builtin("heat"), f=ConstantFn(0.0))
    assert res.passed and all(c.measured == 0.0 for c in res.checks)


def test_maximal_suite_zero_function():
    res = run_suite("maximal", builtin("kolmogorov"), f=ConstantFn(0.0))
    assert res.passed and all(c.measured == 0.0 for c in res.checks)


def test_maximal_suite_nonzero_constant_rejected():
    with pytest.raises(ValueError):
        run_suite("maximal", builtin("heat", dim=1), f=ConstantFn(1.0))


def test_inversion_suite_heat1():
    res = run_suite("inversion", builtin("heat", dim=1), s=0.25)
    first = [c for c in res.checks if c.description.startswith("grid max |I_2s")]
    assert res.passed and first[0].measured <= 1e-3


def test_inversion_guard_on_bounded_volume():
    with pytest.raises(GuardError):
        run_suite("inversion", builtin("ou"), s=0.5)


def test_trace_guard():
    with pytest.raises(GuardError):
        run_suite("maximal", builtin("smoluchowski"))


def test_sobolev_guard_on_exponent():
    # p must stay below D/(2s)
    with pytest.raises(GuardError):
        run_suite("sobolev", builtin("heat"), s=0.5, p=3.0)


def test_run_suite_drops_foreign_kwargs_and_rejects_unknown():
    res = run_suite("core", builtin("heat"), s=0.5, p=2.0)
    assert res.passed
    with pytest.raises(KeyError):
        run_suite("nope", builtin("heat"))
    assert set(SUITES) == {"inversion", "maximal", "sobolev", "ultracontractive", "core"}


def test_suite_json_is_deterministic_and_has_no_runtime():
    a = to_json(run_suite("core", builtin("kramers")))
    b = to_json(run_suite("core", builtin("kramers")))
    assert a == b
    d = json.loads(a)
    assert "runtime" not in d and d["suite"] == "core" and d["passed"] is True


def test_to_json_special_values():
    assert json.loads(to_json({"a": math.inf, "b": math.nan, "c": None})) == {"a": "inf", "b": "nan", "c": None}
    # floats round-trip exactly
    x = 0.1 + 0.2
    assert json.loads(to_json([x]))[0] == x


def test_load_function_round_trip(tmp_path):
    f = GaussianExpFn([[2.0, 0.3], [0.3, 1.0]], [0.1, -0.2], 0.5)
    path = tmp_path / "f.json"
    path.write_text(json.dumps(f.to_dict()))
    g = load_function(str(path), 2)
    np.testing.assert_allclose(g.M, f.M)
    np.testing.assert_allclose(g.b, f.b)
    with pytest.raises(ValueError):
        load_function(str(path), 3)
    with pytest.raises(ValueError):
        load_function({"kind": "polynomial", "M": [[1.0]]})


# ---------------------------------------------------------------------------
# CLI


def test_cli_check_round_trip():
    rc, out = run_cli("check", "kolmogorov")
    assert rc == 0
    d = json.loads(out)
    ref = json.loads(to_json(structure_report(builtin("kolmogorov"))))
    assert d == ref
    assert d["D0_structural"] == 4 and d["trace_B"] == 0


def test_cli_kernel_heat_example():
    rc, out = run_cli("kernel", "heat", "--t", "1", "--x", "0", "--y", "0")
    assert rc == 0
    assert json.loads(out)["p"] == pytest.approx((4 * math.pi) ** -0.5, rel=1e-14)


def test_cli_kernel_csv():
    rc, out = run_cli("kernel", "kolmogorov", "--t", "0.5", "--x", "0,0", "--y", "0.1,0", "--format", "csv")
    lines = out.strip().splitlines()
    assert rc == 0 and lines[0] == "t,p" and len(lines) == 2


def test_cli_volume_and_table():
    rc, out = run_cli("volume", "heat", "--t-min", "1", "--t-max", "4", "--points", "4")
    assert rc == 0 and out.splitlines()[0].startswith("t,V")
    rc, out = run_cli("table", "--id", "kramers", "--format", "json")
    rows = json.loads(out)
    assert rc == 0 and len(rows) == 4 and max(r["rel_err"] for r in rows) < 1e-8


def test_cli_dims():
    rc, out = run_cli("dims", "friction-kolmogorov")
    d = json.loads(out)
    assert rc == 0 and d["Dinf_marker"] == "inf" and d["growth_class"] == "exponential"


def test_cli_apply_with_function_file(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(json.dumps(GaussianExpFn.unit(1).to_dict()))
    rc, out = run_cli("apply", "heat", "--op", "heat", "--param", "1", "--fn", str(path), "--at", "0;1")
    vals = json.loads(out)["values"]
    # P_t e^{-x²/2} = (1 + 2t)^{-1/2} exp(-x²/(2(1 + 2t)))
    np.testing.assert_allclose(vals, [3 ** -0.5, 3 ** -0.5 * math.exp(-1 / 6)], rtol=1e-12)
    assert rc == 0


def test_cli_apply_ops():
    for op, param in (("poisson", "1"), ("frac", "0.5"), ("riesz", "1")):
        rc, out = run_cli("apply", "kolmogorov", "--op", op, "--param", param, "--at", "0,0;0.5,0.5",
                          "--format", "csv")
        assert rc == 0 and len(out.strip().splitlines()) == 3


def test_cli_exit_codes():
    assert run_cli("check", "no-such-system")[0] == 2
    assert run_cli("kernel", "heat", "--t", "-1", "--x", "0", "--y", "0")[0] == 2
    assert run_cli("apply", "kolmogorov", "--op", "heat", "--param", "1", "--at", "0,0,0")[0] == 2
    assert run_cli("bogus")[0] == 2
    assert run_cli("verify", "ou", "--suite", "inversion")[0] == 3
    assert run_cli("apply", "kolmogorov", "--op", "riesz", "--param", "5", "--at", "0,0")[0] == 3
    assert run_cli("verify", "heat", "--suite", "core")[0] == 0


def test_cli_verify_failure_exit_code(monkeypatch):
    from hypoelliptic import cli, harness

    def failing(sys, **kw):
        res = harness.SuiteResult("core", sys.name, {})
        res.add("always fails", 1.0, 0.0, 0.0, False)
        return res

    monkeypatch.setattr(cli, "run_suite", lambda name, sys, **kw: failing(sys))
    rc, out = run_cli("verify", "heat", "--suite", "core")
    assert rc == 1 and json.loads(out)["passed"] is False


def test_cli_verify_byte_identical():
    argv = ("verify", "kolmogorov", "--suite", "core", "--seed", "0x1234")
    outs = {run_cli(*argv)[1] for _ in range(3)}
    assert len(outs) == 1
    rc, csv_out = run_cli(*argv, "--format", "csv")
    assert rc == 0 and csv_out.splitlines()[0] == "description,measured,target,status"


def test_cli_seed_changes_points():
    a = run_cli("verify", "heat", "--suite", "ultracontractive", "--seed", "1")[1]
    b = run_cli("verify", "heat", "--suite", "ultracontractive", "--seed", "2")[1]
    assert a != b
