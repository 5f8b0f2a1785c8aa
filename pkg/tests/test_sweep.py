import io

import numpy as np
import pytest

from augsolve.grid import Contingency, build_dc, parse_matpower
from augsolve.ldl import ZeroPivot, factorize, solve
from augsolve.ordering import fill_reducing_order
from augsolve.sweep import (CSV_HEADER, ContingencyResult, MethodResult,
                            SweepConfig, SweepConfigError,
                            baseline_refactor_solve, run_sweep, summarize,
                            write_results_csv)

# triangle 1-2-3 with a spur bus 4 hanging off bus 3: removing the spur
# branch islands bus 4, removing any triangle branch keeps connectivity
CASE4 = """\
function mpc = case4
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0   0 0 0 1 1.0 0 230 1 1.1 0.9;
 2 1 50  0 0 0 1 1.0 0 230 1 1.1 0.9;
 3 1 100 0 0 0 1 1.0 0 230 1 1.1 0.9;
 4 1 30  0 0 0 1 1.0 0 230 1 1.1 0.9;
];
mpc.gen = [
 1 180 0 0 0 1.0 100 1 250 0;
];
mpc.branch = [
 1 2 0 0.1  0 0 0 0 0 0 1;
 2 3 0 0.2  0 0 0 0 0 0 1;
 1 3 0 0.25 0 0 0 0 0 0 1;
 3 4 0 0.5  0 0 0 0 0 0 1;
];
"""


@pytest.fixture(scope="module")
def prepared():
    case = parse_matpower(CASE4)
    model = build_dc(case)
    perm = fill_reducing_order(model.B)
    F = factorize(model.B, perm)
    x_orig = solve(F, model.p)
    return model, F, x_orig


def _sweep(prepared, **kw):
    model, F, x_orig = prepared
    kw.setdefault("repetitions", 1)
    cfg = SweepConfig(**kw)
    return run_sweep(model, F, x_orig, cfg)


def test_exhaustive_enumerates_every_live_branch(prepared):
    results = _sweep(prepared, selector="exhaustive", k=1)
    assert [r.id for r in results] == [0, 1, 2, 3]
    assert [r.branches for r in results] == [(0,), (1,), (2,), (3,)]
    statuses = {r.branches: r.status for r in results}
    assert statuses[(3,)] == "islanded"
    assert all(statuses[b] == "ok" for b in [(0,), (1,), (2,)])


def test_ok_results_have_all_methods_and_small_residuals(prepared):
    results = _sweep(prepared, selector="exhaustive", k=1)
    for r in results:
        if r.status != "ok":
            assert r.methods == {}
            continue
        assert set(r.methods) == {"direct", "gmres", "refactor"}
        for mr in r.methods.values():
            assert mr.residual <= 1e-8
            assert mr.time_us > 0
        assert r.methods["gmres"].iterations >= 1
        assert r.methods["direct"].rho >= r.m


def test_islanded_result_still_reports_update_size(prepared):
    results = _sweep(prepared, selector="exhaustive", k=1)
    spur = next(r for r in results if r.branches == (3,))
    assert spur.m == 2  # buses 3 and 4 are both non-slack endpoints
    assert spur.attempted == ("direct", "gmres", "refactor")


def test_baseline_rebuild_matches_update_path(prepared):
    model, F, x_orig = prepared
    from augsolve.engine import build_schur, solve_direct
    from augsolve.grid import contingency_update
    c = Contingency((1,))
    u = contingency_update(model, c)
    xd, _ = solve_direct(F, x_orig, u, model.p, model.p)
    xb, wall = baseline_refactor_solve(model, c, model.p)
    assert wall > 0
    assert np.linalg.norm(xd - xb) <= 1e-10 * np.linalg.norm(xb)


def test_baseline_raises_zero_pivot_on_islanding(prepared):
    model, _, _ = prepared
    with pytest.raises(ZeroPivot):
        baseline_refactor_solve(model, Contingency((3,)), model.p)


def test_random_selector_is_deterministic(prepared):
    a = _sweep(prepared, selector="random", k=2, samples=6, seed=42)
    b = _sweep(prepared, selector="random", k=2, samples=6, seed=42)
    assert [r.branches for r in a] == [r.branches for r in b]
    assert [r.status for r in a] == [r.status for r in b]


def test_random_selector_resamples_islanding_draws(prepared):
    # the spur branch islands; with resampling almost every k=1 sample
    # should land on a triangle branch
    results = _sweep(prepared, selector="random", k=1, samples=20, seed=0)
    ok = [r for r in results if r.status == "ok"]
    assert len(ok) == 20
    assert all((3,) != r.branches for r in ok)


def test_random_selector_records_islanded_when_unavoidable():
    # chain grid: every single-branch outage islands
    chain = CASE4.replace(" 1 3 0 0.25 0 0 0 0 0 0 1;\n", "")
    case = parse_matpower(chain)
    model = build_dc(case)
    perm = fill_reducing_order(model.B)
    F = factorize(model.B, perm)
    x_orig = solve(F, model.p)
    cfg = SweepConfig(selector="random", k=1, samples=3, seed=1, repetitions=1)
    results = run_sweep(model, F, x_orig, cfg)
    assert [r.status for r in results] == ["islanded"] * 3


def test_list_selector_runs_exactly_the_given_sets(prepared):
    results = _sweep(prepared, selector="list", explicit=((0, 1), (2,)))
    assert [r.branches for r in results] == [(0, 1), (2,)]
    # removing branches 0 and 1 leaves 1-3-4 and strands bus 2
    assert results[0].status == "islanded"
    assert results[1].status == "ok"


def test_config_validation():
    with pytest.raises(SweepConfigError):
        SweepConfig(k=0)
    with pytest.raises(SweepConfigError):
        SweepConfig(selector="random", samples=0)
    with pytest.raises(SweepConfigError):
        SweepConfig(selector="exhaustive", k=2)
    with pytest.raises(SweepConfigError):
        SweepConfig(selector="list")
    with pytest.raises(SweepConfigError):
        SweepConfig(selector="everything")
    with pytest.raises(SweepConfigError):
        SweepConfig(methods=("direct", "magic"))
    with pytest.raises(SweepConfigError):
        SweepConfig(methods=())
    with pytest.raises(SweepConfigError):
        SweepConfig(tol=0.0)
    with pytest.raises(SweepConfigError):
        SweepConfig(repetitions=0)
    with pytest.raises(SweepConfigError):
        SweepConfig(jobs=0)


def test_exhaustive_cap_is_enforced(prepared):
    with pytest.raises(SweepConfigError):
        _sweep(prepared, selector="exhaustive", k=1, exhaustive_cap=2)


def test_k_larger_than_live_branch_count(prepared):
    with pytest.raises(SweepConfigError):
        _sweep(prepared, selector="random", k=10, samples=1)


def test_parallel_jobs_match_serial_results(prepared):
    serial = _sweep(prepared, selector="exhaustive", k=1, jobs=1)
    parallel = _sweep(prepared, selector="exhaustive", k=1, jobs=3)
    assert [r.branches for r in serial] == [r.branches for r in parallel]
    assert [r.status for r in serial] == [r.status for r in parallel]


def test_csv_layout(prepared):
    results = _sweep(prepared, selector="exhaustive", k=1)
    buf = io.StringIO()
    write_results_csv(results, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[0] == "id,branches,status,method,residual,time_us,iterations,rho,m"
    # one row per (contingency, attempted method)
    assert len(lines) == 1 + 4 * 3
    islanded_rows = [ln for ln in lines[1:] if ",islanded," in ln]
    assert len(islanded_rows) == 3
    for ln in islanded_rows:
        fields = ln.split(",")
        assert fields[1] == "3"
        assert fields[4] == "" and fields[5] == ""  # no residual, no time
        assert fields[8] == "2"  # m is still known
    ok_row = next(ln for ln in lines[1:] if ln.startswith("0,"))
    fields = ok_row.split(",")
    assert len(fields) == 9
    assert float(fields[4]) <= 1e-8


def test_csv_joins_multibranch_ids_with_semicolons(prepared):
    results = _sweep(prepared, selector="list", explicit=((0, 2),))
    buf = io.StringIO()
    write_results_csv(results, buf)
    row = buf.getvalue().splitlines()[1]
    assert row.split(",")[1] == "0;2"


def _manual_result(cid, status, residuals=None, times=None, k=1):
    methods = {}
    if residuals is not None:
        for name, res, t in zip(("direct", "refactor"), residuals, times):
            methods[name] = MethodResult(residual=res, time_us=t,
                                         time_us_mean=t, iterations=0, rho=5)
    return ContingencyResult(id=cid, branches=tuple(range(k)), status=status,
                             m=k, attempted=("direct", "refactor"),
                             methods=methods)


def test_summary_aggregates_mean_residual_and_speedup():
    results = [
        _manual_result(0, "ok", residuals=(1e-13, 1e-14), times=(10.0, 100.0)),
        _manual_result(1, "ok", residuals=(3e-13, 1e-14), times=(10.0, 100.0)),
    ]
    s = summarize(results)
    assert s.total == 2
    assert s.by_status == {"ok": 2}
    assert s.methods["direct"]["residual_mean"] == pytest.approx(2e-13)
    assert s.methods["direct"]["speedup_vs_refactor"] == pytest.approx(10.0)
    assert s.methods["refactor"]["speedup_vs_refactor"] == pytest.approx(1.0)
    assert s.warnings == []


def test_summary_identical_times_give_unit_speedup():
    results = [_manual_result(0, "ok", residuals=(1e-13, 1e-13),
                              times=(50.0, 50.0))]
    s = summarize(results)
    assert s.methods["direct"]["speedup_vs_refactor"] == pytest.approx(1.0)


def test_summary_flags_empty_ok_subset():
    results = [_manual_result(0, "islanded"), _manual_result(1, "singular")]
    s = summarize(results)
    assert "no successful contingencies" in s.warnings
    assert s.methods == {}
    assert s.rho is None
    assert s.by_status == {"islanded": 1, "singular": 1}


def test_summary_groups_time_by_contingency_size():
    results = [
        _manual_result(0, "ok", residuals=(1e-13, 1e-13), times=(10.0, 80.0), k=1),
        _manual_result(1, "ok", residuals=(1e-13, 1e-13), times=(30.0, 90.0), k=2),
    ]
    s = summarize(results)
    direct_rows = {e["k"]: e["median_time_us"] for e in s.time_vs_k
                   if e["method"] == "direct"}
    assert direct_rows == {1: 10.0, 2: 30.0}


def test_summary_rejects_empty_input():
    with pytest.raises(ValueError):
        summarize([])


def test_summary_round_trips_to_json(prepared):
    import json
    results = _sweep(prepared, selector="exhaustive", k=1)
    s = summarize(results)
    blob = json.dumps(s.to_json())
    back = json.loads(blob)
    assert back["total"] == 4
    assert back["by_status"]["ok"] == 3
    assert back["methods"]["direct"]["count"] == 3
