"""Command line front end.

Every command is a thin client of the HTTP service: by default an
in-process application instance, with ``--server URL`` to talk to a
running one instead.  Numeric output is printed with 17 significant
digits so values round-trip exactly.

Exit codes: 0 success, 1 parse or configuration error, 2 numerically
singular or non-converging base computation, 3 islanding (the modified
grid is disconnected, equivalently the updated matrix is singular),
4 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import sys

KIND_EXIT = {
    "parse_error": 1,
    "config_error": 1,
    "not_found": 1,
    "singular_base": 2,
    "no_convergence": 2,
    "islanded": 3,
    "singular_update": 3,
}


class _CliExit(Exception):
    def __init__(self, code: int):
        self.code = code


def _fail(message: str, code: int = 1):
    print(f"error: {message}", file=sys.stderr)
    raise _CliExit(code)


def _make_client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # test-client import warns on some builds
        from fastapi.testclient import TestClient

    from .service.app import create_app
    return TestClient(create_app())


def _check(resp) -> dict:
    if resp.status_code < 400:
        return resp.json()
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict) and "kind" in detail:
        kind = detail["kind"]
        _fail(f"{kind}: {detail.get('message', '')}", KIND_EXIT.get(kind, 1))
    _fail(f"request failed with status {resp.status_code}: {detail}")


def _parse_gen_spec(spec: str) -> dict:
    """``n=<N>,deg=<D>,seed=<S>`` with deg and seed optional."""
    out = {"avg_degree": 3.0, "seed": 0}
    for part in spec.split(","):
        if "=" not in part:
            _fail(f"bad generator spec field {part!r}")
        key, _, val = part.partition("=")
        try:
            if key == "n":
                out["n"] = int(val)
            elif key == "deg":
                out["avg_degree"] = float(val)
            elif key == "seed":
                out["seed"] = int(val)
            else:
                _fail(f"unknown generator spec key {key!r}")
        except ValueError:
            _fail(f"bad generator spec value {part!r}")
    if "n" not in out:
        _fail("generator spec needs n=<buses>")
    return out


def _case_source(args) -> dict:
    if args.case is not None:
        try:
            with open(args.case) as fh:
                return {"text": fh.read()}
        except OSError as exc:
            _fail(f"cannot read case file: {exc}")
    return {"synthetic": _parse_gen_spec(args.gen)}


def _register(client, args) -> dict:
    return _check(client.post("/cases", json=_case_source(args)))


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        _fail(f"bad {what} list {text!r}")


def _write_angles(path: str | None, bus_ids, angles):
    lines = [f"{bid} {ang:.17g}" for bid, ang in zip(bus_ids, angles)]
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_solve(args) -> int:
    client = _make_client(args.server)
    info = _register(client, args)
    body = _check(client.post(f"/cases/{info['case_id']}/solve"))
    print(f"case {info['case_id']}: {info['n_buses']} buses, "
          f"{info['n_branches']} branches, slack {info['slack_bus']}")
    print(f"factor: nnz(L) {info['nnz_factor']}, "
          f"time {info['factor_time_us']:.17g} us")
    print(f"solve: time {body['solve_time_us']:.17g} us, "
          f"residual {body['residual']:.17g}, "
          f"condition estimate {body['condition_estimate']:.17g}")
    _write_angles(args.out, body["bus_ids"], body["angles"])
    return 0


def cmd_contingency(args) -> int:
    client = _make_client(args.server)
    info = _register(client, args)
    req = {"branches": _int_list(args.branches, "branch"),
           "method": args.method, "tol": args.tol}
    if args.gens:
        req["gen_buses"] = _int_list(args.gens, "generator bus")
    if args.max_it is not None:
        req["max_it"] = args.max_it
    body = _check(client.post(f"/cases/{info['case_id']}/contingency",
                              json=req))
    print(f"contingency branches={','.join(map(str, body['branches']))} "
          f"method={body['method']} m={body['m']} rho={body['rho']}")
    print(f"time {body['time_us']:.17g} us, iterations {body['iterations']}, "
          f"residual {body['residual']:.17g}")
    _write_angles(args.out, body["bus_ids"], body["angles"])
    return 0


def _selector_args(args) -> dict:
    sel = args.selector
    if sel.startswith("list:"):
        path = sel[len("list:"):]
        explicit = []
        try:
            with open(path) as fh:
                for line in fh:
                    line = line.split("#", 1)[0].strip()
                    if line:
                        explicit.append(_int_list(line.replace(" ", ","),
                                                  "branch"))
        except OSError as exc:
            _fail(f"cannot read contingency list: {exc}")
        if not explicit:
            _fail(f"contingency list {path!r} is empty")
        return {"selector": "list", "explicit": explicit}
    if sel in ("exhaustive", "random"):
        return {"selector": sel}
    _fail(f"unknown selector {sel!r}")


def cmd_sweep(args) -> int:
    client = _make_client(args.server)
    info = _register(client, args)
    req = {"k": args.k, "samples": args.samples, "seed": args.seed,
           "methods": [m for m in args.methods.split(",") if m],
           "tol": args.tol, "repetitions": args.reps, "jobs": args.jobs}
    req.update(_selector_args(args))
    if args.max_it is not None:
        req["max_it"] = args.max_it
    body = _check(client.post(f"/cases/{info['case_id']}/sweep", json=req))
    summary = body["summary"]
    if args.out is None:
        sys.stdout.write(body["csv"])
    else:
        with open(args.out, "w") as fh:
            fh.write(body["csv"])
        with open(args.out + ".summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    counts = " ".join(f"{k}={v}" for k, v in sorted(summary["by_status"].items()))
    print(f"sweep: {summary['total']} contingencies, {counts}", file=sys.stderr)
    for name, stats in summary["methods"].items():
        line = (f"  {name}: median {stats['time_us']['median']:.17g} us, "
                f"mean residual {stats['residual_mean']:.17g}")
        if "speedup_vs_refactor" in stats:
            line += f", speedup {stats['speedup_vs_refactor']:.17g}x"
        print(line, file=sys.stderr)
    for warning in summary["warnings"]:
        print(f"  warning: {warning}", file=sys.stderr)
    return 0


def cmd_selftest(args) -> int:
    client = _make_client(args.server)
    body = _check(client.post("/selftest",
                              json={"n_max": args.n_max, "seed": args.seed}))
    for suite in body["suites"]:
        if suite["failures"]:
            print(f"suite {suite['name']}: {suite['cases']} cases, "
                  f"{len(suite['failures'])} FAILED")
            for f in suite["failures"]:
                print(f"  {f}")
        else:
            print(f"suite {suite['name']}: {suite['cases']} cases, ok")
    if not body["ok"]:
        print("selftest FAILED", file=sys.stderr)
        return 4
    print("selftest ok")
    return 0


def cmd_gen(args) -> int:
    from .grid import GridError, synthetic_grid, write_matpower
    spec = _parse_gen_spec(args.gen)
    try:
        case = synthetic_grid(spec["n"], avg_degree=spec["avg_degree"],
                              seed=spec["seed"])
    except GridError as exc:
        _fail(str(exc))
    with open(args.out, "w") as fh:
        fh.write(write_matpower(case))
    print(f"wrote {len(case.buses)} buses, {len(case.branches)} branches "
          f"to {args.out}")
    return 0


def _add_case_source(p: argparse.ArgumentParser):
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--case", metavar="PATH", help="case file to load")
    group.add_argument("--gen", metavar="n=<N>,deg=<D>,seed=<S>",
                       help="generate a synthetic case instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augsolve",
        description="DC grid solver with fast post-outage updates")
    parser.add_argument("--server", metavar="URL", default=None,
                        help="use a running service instead of in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="factorize and solve the base case")
    _add_case_source(p)
    p.add_argument("--out", metavar="PATH",
                   help="write 'bus_id angle' lines here instead of stdout")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("contingency", help="solve one branch/generator outage")
    _add_case_source(p)
    p.add_argument("--branches", required=True, metavar="I,J,...",
                   help="branch indices to remove (0-based positions)")
    p.add_argument("--gens", metavar="BUS,...", default="",
                   help="buses whose generation is also lost")
    p.add_argument("--method", choices=("direct", "gmres"), default="direct")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-it", type=int, default=None)
    p.add_argument("--out", metavar="PATH",
                   help="write 'bus_id angle' lines here instead of stdout")
    p.set_defaults(fn=cmd_contingency)

    p = sub.add_parser("sweep", help="run many contingencies and compare methods")
    _add_case_source(p)
    p.add_argument("--k", type=int, default=1,
                   help="branches removed per contingency")
    p.add_argument("--selector", default="random",
                   metavar="exhaustive|random|list:PATH")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="direct,gmres,refactor",
                   metavar="CSV", help="subset of direct,gmres,refactor")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--max-it", type=int, default=None)
    p.add_argument("--reps", type=int, default=20,
                   help="timing repetitions per contingency")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", metavar="PATH",
                   help="CSV output path; summary JSON lands next to it")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("selftest", help="run the built-in property suites")
    p.add_argument("--n-max", type=int, default=60,
                   help="largest random instance size")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("gen", help="write a synthetic case file")
    p.add_argument("--gen", metavar="n=<N>,deg=<D>,seed=<S>", required=True)
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(fn=cmd_gen)

    return parser


def main(argv=None) -> int:
    import httpx
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits; fold usage errors into code 1
        return 0 if not exc.code else 1
    try:
        return args.fn(args)
    except _CliExit as exc:
        return exc.code
    except (ConnectionError, httpx.HTTPError) as exc:
        print(f"error: cannot reach server: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
