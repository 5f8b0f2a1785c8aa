"""N-k contingency sweep driver.

Enumerates or samples branch-outage contingencies, runs the requested
methods (closure-based direct, GMRES on the small symmetric system, and
the refactorization baseline), and collects residuals and timings.  The
base factorization is shared and read-only; each contingency is an
independent work item.

Timing protocol: every method is measured over the complete work it
would do for one query arriving at a live system.  The update methods
therefore include closure construction and Schur preparation but not the
base factorization; the baseline includes matrix rebuild, ordering,
factorization, and solve.  Both use the same monotonic clock and the
same repetition/median scheme.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import (NoConvergence, SingularOperator, SingularSchur,
                     build_schur, solve_direct, solve_iterative)
from .grid import Contingency, DcModel, check_connectivity, contingency_update, \
    reduced_system
from .ldl import LdlFactorization, ZeroPivot, factorize, solve
from .ordering import fill_reducing_order

VALID_METHODS = ("direct", "gmres", "refactor")
VALID_SELECTORS = ("exhaustive", "random", "list")


class SweepConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    k: int = 1
    selector: str = "random"
    samples: int = 100
    seed: int = 0
    explicit: tuple[tuple[int, ...], ...] = ()
    methods: tuple[str, ...] = ("direct", "gmres", "refactor")
    tol: float = 1e-12
    max_it: int | None = None
    repetitions: int = 20
    jobs: int = 1
    exhaustive_cap: int = 10 ** 6

    def __post_init__(self):
        if self.k < 1:
            raise SweepConfigError("k must be at least 1")
        if self.selector not in VALID_SELECTORS:
            raise SweepConfigError(f"unknown selector {self.selector!r}")
        if self.selector == "random" and self.samples < 1:
            raise SweepConfigError("samples must be at least 1")
        if self.selector == "exhaustive" and self.k != 1:
            raise SweepConfigError("exhaustive enumeration is limited to k = 1")
        if self.selector == "list" and not self.explicit:
            raise SweepConfigError("list selector requires explicit contingencies")
        if not self.methods:
            raise SweepConfigError("no methods enabled")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise SweepConfigError(f"unknown method {m!r}")
        if self.tol <= 0:
            raise SweepConfigError("tol must be positive")
        if self.repetitions < 1:
            raise SweepConfigError("repetitions must be at least 1")
        if self.jobs < 1:
            raise SweepConfigError("jobs must be at least 1")


@dataclass
class MethodResult:
    residual: float
    time_us: float  # median over repetitions
    time_us_mean: float
    iterations: int
    rho: int

    def to_json(self) -> dict:
        return {"residual": self.residual, "time_us": self.time_us,
                "time_us_mean": self.time_us_mean,
                "iterations": self.iterations, "rho": self.rho}


@dataclass
class ContingencyResult:
    id: int
    branches: tuple[int, ...]
    status: str  # ok | islanded | singular | no_convergence
    m: int
    attempted: tuple[str, ...]
    methods: dict[str, MethodResult] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "branches": list(self.branches),
                "status": self.status, "m": self.m,
                "attempted": list(self.attempted),
                "methods": {k: v.to_json() for k, v in self.methods.items()}}


def baseline_refactor_solve(model: DcModel, c: Contingency,
                            b_hat: np.ndarray) -> tuple[np.ndarray, float]:
    """Rebuild the post-outage matrix from scratch, order, factorize, solve.

    Returns (solution, wall_time_seconds).  Raises ZeroPivot when the
    contingency islands the grid (singular reduced Laplacian).
    """
    t0 = time.perf_counter()
    B, _, _, _, _ = reduced_system(model.case, exclude_branches=c.branch_ids)
    perm = fill_reducing_order(B)
    F = factorize(B, perm)
    xhat = solve(F, b_hat)
    return xhat, time.perf_counter() - t0


def _post_outage_matrix(model: DcModel, c: Contingency):
    B, _, _, _, _ = reduced_system(model.case, exclude_branches=c.branch_ids)
    return B


def _select(model: DcModel, cfg: SweepConfig) -> list[tuple[int, ...]]:
    live = model.case.in_service_branches()
    if cfg.selector == "exhaustive":
        count = math.comb(len(live), cfg.k)
        if count > cfg.exhaustive_cap:
            raise SweepConfigError(
                f"exhaustive selection would enumerate {count} contingencies, "
                f"over the cap of {cfg.exhaustive_cap}")
        return [(i,) for i in live]
    if cfg.selector == "list":
        return [tuple(sorted(int(b) for b in c)) for c in cfg.explicit]
    if cfg.k > len(live):
        raise SweepConfigError(f"k={cfg.k} exceeds the {len(live)} live branches")
    rng = np.random.default_rng(cfg.seed)
    picks = []
    for _ in range(cfg.samples):
        chosen = None
        for _ in range(2000):
            cand = tuple(sorted(int(b) for b in
                                rng.choice(live, size=cfg.k, replace=False)))
            if check_connectivity(model.case, Contingency(cand)).connected:
                chosen = cand
                break
            chosen = cand  # remember the last islanding draw
        picks.append(chosen)
    return picks


def _evaluate(model: DcModel, F: LdlFactorization, x_orig: np.ndarray,
              cid: int, branches: tuple[int, ...], cfg: SweepConfig) -> ContingencyResult:
    c = Contingency(branches)
    u = contingency_update(model, c)
    result = ContingencyResult(id=cid, branches=branches, status="ok",
                               m=u.m, attempted=cfg.methods)
    if not check_connectivity(model.case, c).connected:
        result.status = "islanded"
        return result

    b = model.p
    b_hat = b  # pure branch outage leaves injections unchanged
    per_method: dict[str, MethodResult] = {}
    for method in cfg.methods:
        times = []
        xhat = None
        iterations = 0
        rho = 0
        try:
            for _ in range(cfg.repetitions):
                t0 = time.perf_counter()
                if method == "direct":
                    schur = build_schur(F, u)
                    xhat, rep = solve_direct(F, x_orig, u, b, b_hat, schur=schur)
                    rho = rep.rho
                elif method == "gmres":
                    xhat, rep = solve_iterative(F, x_orig, u, b, b_hat,
                                                tol=cfg.tol, max_it=cfg.max_it)
                    iterations = rep.iterations
                    rho = rep.rho
                else:
                    xhat, _ = baseline_refactor_solve(model, c, b_hat)
                times.append((time.perf_counter() - t0) * 1e6)
        except (SingularSchur, SingularOperator, ZeroPivot):
            result.status = "singular"
            return result
        except NoConvergence:
            result.status = "no_convergence"
            return result
        Bhat = _post_outage_matrix(model, c)
        denom = np.linalg.norm(b_hat)
        residual = float(np.linalg.norm(Bhat.matvec(xhat) - b_hat) / (denom or 1.0))
        per_method[method] = MethodResult(
            residual=residual,
            time_us=float(statistics.median(times)),
            time_us_mean=float(statistics.fmean(times)),
            iterations=iterations,
            rho=rho)
    result.methods = per_method
    return result


def run_sweep(model: DcModel, F: LdlFactorization, x_orig: np.ndarray,
              cfg: SweepConfig) -> list[ContingencyResult]:
    """Evaluate the selected contingencies; failures land in result.status,
    never abort the sweep."""
    picks = _select(model, cfg)
    if cfg.jobs == 1:
        return [_evaluate(model, F, x_orig, cid, branches, cfg)
                for cid, branches in enumerate(picks)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futs = [pool.submit(_evaluate, model, F, x_orig, cid, branches, cfg)
                for cid, branches in enumerate(picks)]
        return [f.result() for f in futs]


# -- aggregation --------------------------------------------------------------


def _stats(values) -> dict:
    vs = sorted(values)
    return {"mean": float(statistics.fmean(vs)),
            "median": float(statistics.median(vs)),
            "p95": float(vs[min(len(vs) - 1, int(math.ceil(0.95 * len(vs))) - 1)])}


@dataclass
class SweepSummary:
    total: int
    by_status: dict[str, int]
    methods: dict[str, dict]
    rho: dict | None
    time_vs_k: list[dict]
    warnings: list[str]

    def to_json(self) -> dict:
        return {"total": self.total, "by_status": self.by_status,
                "methods": self.methods, "rho": self.rho,
                "time_vs_k": self.time_vs_k, "warnings": self.warnings}


def summarize(results: list[ContingencyResult]) -> SweepSummary:
    """Aggregate per-method timing/residual statistics and speedups."""
    if not results:
        raise ValueError("no results to summarize")
    by_status: dict[str, int] = {}
    for r in results:
        by_status[r.status] = by_status.get(r.status, 0) + 1
    ok = [r for r in results if r.status == "ok"]
    warnings = []
    if not ok:
        warnings.append("no successful contingencies")
        return SweepSummary(total=len(results), by_status=by_status, methods={},
                            rho=None, time_vs_k=[], warnings=warnings)
    method_names: list[str] = []
    for r in ok:
        for name in r.methods:
            if name not in method_names:
                method_names.append(name)
    methods = {}
    medians = {}
    for name in method_names:
        rows = [r.methods[name] for r in ok if name in r.methods]
        tstats = _stats([mr.time_us for mr in rows])
        medians[name] = tstats["median"]
        methods[name] = {
            "count": len(rows),
            "time_us": tstats,
            "residual_mean": float(statistics.fmean(mr.residual for mr in rows)),
        }
        if name == "gmres":
            methods[name]["iterations"] = _stats([mr.iterations for mr in rows])
    if "refactor" in medians:
        for name in method_names:
            methods[name]["speedup_vs_refactor"] = medians["refactor"] / medians[name]
    rho_values = [mr.rho for r in ok for nm, mr in r.methods.items()
                  if nm in ("direct", "gmres")]
    rho = _stats(rho_values) if rho_values else None
    time_vs_k: list[dict] = []
    ks = sorted({len(r.branches) for r in ok})
    for k in ks:
        sub = [r for r in ok if len(r.branches) == k]
        for name in method_names:
            rows = [r.methods[name].time_us for r in sub if name in r.methods]
            if rows:
                time_vs_k.append({"k": k, "method": name,
                                  "median_time_us": float(statistics.median(rows)),
                                  "count": len(rows)})
    return SweepSummary(total=len(results), by_status=by_status, methods=methods,
                        rho=rho, time_vs_k=time_vs_k, warnings=warnings)


# -- serialization -------------------------------------------------------------

CSV_HEADER = "id,branches,status,method,residual,time_us,iterations,rho,m"


def write_results_csv(results: list[ContingencyResult], fh) -> None:
    """One row per (contingency, attempted method); full float precision.

    Rows of contingencies that did not reach status ok carry the status
    but no residual or timing fields.
    """
    fh.write(CSV_HEADER + "\n")
    for r in results:
        for method in r.attempted:
            mr = r.methods.get(method)
            if mr is None:
                fh.write(f"{r.id},{';'.join(map(str, r.branches))},{r.status},"
                         f"{method},,,,,{r.m}\n")
            else:
                fh.write(f"{r.id},{';'.join(map(str, r.branches))},{r.status},"
                         f"{method},{mr.residual:.17g},{mr.time_us:.17g},"
                         f"{mr.iterations},{mr.rho},{r.m}\n")
