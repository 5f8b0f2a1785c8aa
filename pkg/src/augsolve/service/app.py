"""FastAPI application exposing the update engine.

Registering a case runs the one-time work (parse or generate, order,
factorize, base solve); every later query reuses that read-only state.
Error bodies carry a machine-readable ``kind`` in ``detail`` so clients
can map failures without parsing prose:

    parse_error / config_error   bad input (HTTP 400)
    not_found                    unknown case id (HTTP 404)
    singular_base                base system cannot be factorized (HTTP 409)
    islanded                     contingency disconnects the grid (HTTP 409)
    singular_update              modified system is singular (HTTP 409)
    no_convergence               iteration stalled above tolerance (HTTP 409)
"""

from __future__ import annotations

import io
import secrets
import threading
import time
import warnings

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..engine import (NoConvergence, SingularOperator, SingularSchur,
                      solve_direct, solve_iterative)
from ..grid import (Contingency, DisconnectedBase, GridCase, GridError,
                    check_connectivity, contingency_update, build_dc,
                    outage_injections, parse_matpower, reduced_system,
                    synthetic_grid)
from ..ldl import ZeroPivot, estimate_condition, factorize, solve
from ..ordering import fill_reducing_order
from ..selftest import run_selftest
from ..sparse import SparseFormatError
from ..sweep import (SweepConfig, SweepConfigError, run_sweep, summarize,
                     write_results_csv)
from .schemas import (CaseInfo, CaseSource, ContingencyRequest,
                      ContingencyResponse, SelftestRequest, SelftestResponse,
                      SolveResponse, SweepRequest, SweepResponse)


def _error(status: int, kind: str, message: str) -> HTTPException:
    return HTTPException(status_code=status,
                         detail={"kind": kind, "message": message})


class _Prepared:
    """A registered case with its shared factorization."""

    __slots__ = ("case", "model", "F", "x_orig", "info", "condition")

    def __init__(self, case: GridCase, name: str, case_id: str):
        self.case = case
        try:
            self.model = build_dc(case)
        except DisconnectedBase as exc:
            raise _error(409, "singular_base",
                         f"base grid is disconnected: {exc}")
        t0 = time.perf_counter()
        perm = fill_reducing_order(self.model.B)
        try:
            self.F = factorize(self.model.B, perm)
        except ZeroPivot as exc:
            raise _error(409, "singular_base", str(exc))
        self.x_orig = solve(self.F, self.model.p)
        factor_us = (time.perf_counter() - t0) * 1e6
        r = self.model.B.matvec(self.x_orig) - self.model.p
        denom = np.linalg.norm(self.model.p) or 1.0
        self.condition: float | None = None
        self.info = CaseInfo(
            case_id=case_id,
            name=name,
            n_buses=len(case.buses),
            n_branches=len(case.branches),
            in_service=len(case.in_service_branches()),
            slack_bus=case.slack_bus,
            nnz_factor=self.F.nnz_L,
            factor_time_us=factor_us,
            base_residual=float(np.linalg.norm(r) / denom),
        )

    def angles(self, x: np.ndarray) -> tuple[list[int], list[float]]:
        bus_ids = [b.id for b in self.case.buses]
        slack = self.model.slack_bus
        idx = self.model.bus_index
        return bus_ids, [0.0 if bid == slack else float(x[idx[bid]])
                         for bid in bus_ids]


def create_app() -> FastAPI:
    app = FastAPI(title="augsolve", version=__version__)
    registry: dict[str, _Prepared] = {}
    lock = threading.Lock()

    def _get(case_id: str) -> _Prepared:
        with lock:
            p = registry.get(case_id)
        if p is None:
            raise _error(404, "not_found", f"no case {case_id!r}")
        return p

    @app.get("/health")
    def health():
        with lock:
            count = len(registry)
        return {"status": "ok", "version": __version__, "cases": count}

    @app.post("/cases", response_model=CaseInfo, status_code=201)
    def register_case(source: CaseSource):
        try:
            if source.text is not None:
                case = parse_matpower(source.text)
                name = "text"
            else:
                s = source.synthetic
                case = synthetic_grid(s.n, avg_degree=s.avg_degree, seed=s.seed)
                name = f"synthetic(n={s.n},deg={s.avg_degree},seed={s.seed})"
        except (GridError, SparseFormatError) as exc:
            raise _error(400, "parse_error", str(exc))
        case_id = "case-" + secrets.token_hex(4)
        prepared = _Prepared(case, name, case_id)
        with lock:
            registry[case_id] = prepared
        return prepared.info

    @app.get("/cases", response_model=list[CaseInfo])
    def list_cases():
        with lock:
            return [p.info for p in registry.values()]

    @app.post("/cases/{case_id}/solve", response_model=SolveResponse)
    def solve_base(case_id: str):
        p = _get(case_id)
        t0 = time.perf_counter()
        x = solve(p.F, p.model.p)
        solve_us = (time.perf_counter() - t0) * 1e6
        if p.condition is None:
            p.condition = estimate_condition(p.model.B, p.F)
        bus_ids, angles = p.angles(x)
        return SolveResponse(
            case_id=case_id, bus_ids=bus_ids, angles=angles,
            solve_time_us=solve_us, residual=p.info.base_residual,
            condition_estimate=p.condition, nnz_factor=p.info.nnz_factor,
            factor_time_us=p.info.factor_time_us)

    @app.post("/cases/{case_id}/contingency", response_model=ContingencyResponse)
    def contingency(case_id: str, req: ContingencyRequest):
        p = _get(case_id)
        try:
            c = Contingency(tuple(req.branches))
            conn = check_connectivity(p.case, c)
            if not conn.connected:
                raise _error(409, "islanded",
                             f"outage splits the grid into "
                             f"{len(conn.components)} components")
            u = contingency_update(p.model, c)
            b_hat = (outage_injections(p.model, req.gen_buses)
                     if req.gen_buses else p.model.p)
        except GridError as exc:
            raise _error(400, "config_error", str(exc))
        b = p.model.p
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                t0 = time.perf_counter()
                if req.method == "direct":
                    xhat, rep = solve_direct(p.F, p.x_orig, u, b, b_hat)
                else:
                    xhat, rep = solve_iterative(p.F, p.x_orig, u, b, b_hat,
                                                tol=req.tol, max_it=req.max_it)
                time_us = (time.perf_counter() - t0) * 1e6
        except (SingularSchur, SingularOperator) as exc:
            raise _error(409, "singular_update", str(exc))
        except NoConvergence as exc:
            raise _error(409, "no_convergence",
                         f"stopped after {exc.iterations} iterations at "
                         f"residual {exc.residual:.3e}")
        Bhat, _, _, _, _ = reduced_system(p.case, exclude_branches=c.branch_ids)
        denom = np.linalg.norm(b_hat) or 1.0
        residual = float(np.linalg.norm(Bhat.matvec(xhat) - b_hat) / denom)
        bus_ids, angles = p.angles(xhat)
        return ContingencyResponse(
            case_id=case_id, branches=sorted(req.branches), method=req.method,
            bus_ids=bus_ids, angles=angles, residual=residual,
            time_us=time_us, iterations=rep.iterations, rho=rep.rho, m=u.m)

    @app.post("/cases/{case_id}/sweep", response_model=SweepResponse)
    def sweep(case_id: str, req: SweepRequest):
        p = _get(case_id)
        try:
            cfg = SweepConfig(
                k=req.k, selector=req.selector, samples=req.samples,
                seed=req.seed,
                explicit=tuple(tuple(c) for c in req.explicit),
                methods=tuple(req.methods), tol=req.tol, max_it=req.max_it,
                repetitions=req.repetitions, jobs=req.jobs)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                results = run_sweep(p.model, p.F, p.x_orig, cfg)
        except (SweepConfigError, GridError) as exc:
            raise _error(400, "config_error", str(exc))
        buf = io.StringIO()
        write_results_csv(results, buf)
        return SweepResponse(case_id=case_id,
                             results=[r.to_json() for r in results],
                             summary=summarize(results).to_json(),
                             csv=buf.getvalue())

    @app.post("/selftest", response_model=SelftestResponse)
    def selftest(req: SelftestRequest):
        try:
            report = run_selftest(n_max=req.n_max, seed=req.seed)
        except ValueError as exc:
            raise _error(400, "config_error", str(exc))
        return SelftestResponse(**report.to_json())

    return app


app = create_app()
