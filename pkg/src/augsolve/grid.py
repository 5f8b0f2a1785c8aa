"""DC power-grid modeling: MATPOWER-subset ingestion, reduced susceptance
Laplacian assembly, and translation of branch outages into principal-
submatrix updates.

The DC model solves B d = p on the non-slack buses, where B is the
branch-susceptance-weighted graph Laplacian with the slack row and
column deleted and p holds per-unit net injections.  Removing branches
subtracts a sum of edge Laplacians, which is exactly a principal-
submatrix update confined to the endpoints of the removed branches.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .engine import UpdateSpec
from .sparse import SparseMatrix


class GridError(ValueError):
    """Base class for case-level errors."""


class MissingSection(GridError):
    def __init__(self, section: str):
        self.section = section
        super().__init__(f"case text lacks required section {section}")


class MalformedRow(GridError):
    def __init__(self, line_no: int, text: str, why: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {why}: {text.strip()!r}")


class MultipleSlack(GridError):
    pass


class NoSlack(GridError):
    pass


class ZeroReactance(GridError):
    pass


class DisconnectedBase(GridError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        super().__init__(
            f"base grid splits into {len(components)} components; "
            f"smallest: {min(components, key=len)}")


class OutOfServiceBranch(GridError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    type: int  # 1 PQ, 2 PV, 3 slack
    pd_mw: float


@dataclass(frozen=True)
class Gen:
    bus: int
    pg_mw: float
    status: int


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float
    tap: float
    status: int


@dataclass(frozen=True)
class GridCase:
    """Parsed case.  Bus ids are preserved verbatim (gaps allowed)."""

    base_mva: float
    buses: tuple[Bus, ...]
    gens: tuple[Gen, ...]
    branches: tuple[Branch, ...]

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise GridError("duplicate bus ids")
        slacks = [b.id for b in self.buses if b.type == 3]
        if len(slacks) > 1:
            raise MultipleSlack(f"buses {slacks} are all marked slack")
        if not slacks:
            raise NoSlack("no slack bus in case")
        known = set(ids)
        for i, br in enumerate(self.branches):
            if br.from_bus not in known or br.to_bus not in known:
                raise GridError(f"branch {i} references unknown bus "
                                f"({br.from_bus}, {br.to_bus})")
            if br.from_bus == br.to_bus:
                raise GridError(f"branch {i} is a self-loop at bus {br.from_bus}")
        for g in self.gens:
            if g.bus not in known:
                raise GridError(f"generator references unknown bus {g.bus}")

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.type == 3)

    def in_service_branches(self) -> list[int]:
        return [i for i, br in enumerate(self.branches) if br.status != 0]


@dataclass(frozen=True)
class Contingency:
    """A set of branch indices (positions in the case branch list)."""

    branch_ids: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.branch_ids)) != len(self.branch_ids):
            raise GridError("contingency lists a branch twice")

    @property
    def k(self) -> int:
        return len(self.branch_ids)


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    components: tuple[tuple[int, ...], ...]  # bus ids per component


@dataclass(frozen=True)
class DcModel:
    """Reduced DC system B d = p over non-slack buses."""

    case: GridCase
    B: SparseMatrix
    p: np.ndarray
    slack_bus: int
    bus_ids: np.ndarray  # reduced index -> bus id
    bus_index: dict[int, int] = field(repr=False)  # bus id -> reduced index
    branch_b: np.ndarray = field(repr=False)  # susceptance, 0 where out of service

    @property
    def n(self) -> int:
        return self.B.n


# -- parsing -----------------------------------------------------------------

_BASE_RE = re.compile(r"mpc\.baseMVA\s*=\s*([^;\s]+)\s*;")
_MAT_RE = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[")


def _parse_matrices(text: str):
    """Collect numeric matrix rows for each mpc.<name> = [ ... ]; block."""
    rows: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%")[0]
        if current is None:
            m = _MAT_RE.search(line)
            if m:
                current = m.group(1)
                rows[current] = []
                line = line[m.end():]
            else:
                continue
        # inside a matrix: rows end at newlines or ';', block ends at ']'
        closed = "]" in line
        body = line.split("]")[0]
        for piece in body.replace(";", "\n").splitlines():
            toks = piece.split()
            if not toks:
                continue
            try:
                rows[current].append((line_no, [float(t) for t in toks]))
            except ValueError:
                raise MalformedRow(line_no, piece, "non-numeric token") from None
        if closed:
            current = None
    return rows


def parse_matpower(text: str) -> GridCase:
    """Parse the MATPOWER function-file subset.

    Required: ``mpc.baseMVA``, ``mpc.bus``, ``mpc.branch``; ``mpc.gen`` is
    optional.  Columns follow the MATPOWER convention (bus: id, type, Pd;
    gen: bus, Pg, col 8 status; branch: endpoints, col 4 x, col 9 tap,
    col 11 status).  ``%`` comments and unknown assignments are ignored.
    """
    base_m = _BASE_RE.search(text)
    if not base_m:
        raise MissingSection("mpc.baseMVA")
    try:
        base_mva = float(base_m.group(1))
    except ValueError:
        raise MissingSection("mpc.baseMVA") from None
    mats = _parse_matrices(text)
    for required in ("bus", "branch"):
        if required not in mats:
            raise MissingSection(f"mpc.{required}")

    buses = []
    for line_no, row in mats["bus"]:
        if len(row) < 3:
            raise MalformedRow(line_no, " ".join(map(str, row)),
                               "bus row needs at least 3 columns")
        buses.append(Bus(id=int(row[0]), type=int(row[1]), pd_mw=row[2]))

    gens = []
    for line_no, row in mats.get("gen", []):
        if len(row) < 2:
            raise MalformedRow(line_no, " ".join(map(str, row)),
                               "gen row needs at least 2 columns")
        status = int(row[7]) if len(row) > 7 else 1
        gens.append(Gen(bus=int(row[0]), pg_mw=row[1], status=status))

    branches = []
    for line_no, row in mats["branch"]:
        if len(row) < 4:
            raise MalformedRow(line_no, " ".join(map(str, row)),
                               "branch row needs at least 4 columns")
        tap = row[8] if len(row) > 8 else 0.0
        status = int(row[10]) if len(row) > 10 else 1
        branches.append(Branch(from_bus=int(row[0]), to_bus=int(row[1]),
                               x=row[3], tap=tap, status=status))
    return GridCase(base_mva=base_mva, buses=tuple(buses), gens=tuple(gens),
                    branches=tuple(branches))


# -- model assembly ----------------------------------------------------------


def _susceptances(case: GridCase) -> np.ndarray:
    b = np.zeros(len(case.branches))
    for i, br in enumerate(case.branches):
        if br.status == 0:
            continue
        if br.x == 0.0:
            raise ZeroReactance(f"in-service branch {i} has x = 0")
        tap = br.tap if br.tap != 0.0 else 1.0
        b[i] = 1.0 / (br.x * tap)
    return b


def _components(case: GridCase, exclude: frozenset[int] = frozenset()):
    adj: dict[int, list[int]] = {bus.id: [] for bus in case.buses}
    for i, br in enumerate(case.branches):
        if br.status != 0 and i not in exclude:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    unseen = {bus.id for bus in case.buses}
    comps = []
    while unseen:
        start = min(unseen)
        stack = [start]
        unseen.discard(start)
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if w in unseen:
                    unseen.discard(w)
                    stack.append(w)
        comps.append(tuple(sorted(comp)))
    return comps


def check_connectivity(case: GridCase, c: Contingency | None = None) -> ConnectivityReport:
    """Breadth-first connectivity of the in-service grid minus a contingency."""
    exclude = frozenset(c.branch_ids) if c is not None else frozenset()
    comps = _components(case, exclude)
    return ConnectivityReport(connected=len(comps) == 1, components=tuple(comps))


def reduced_system(case: GridCase, exclude_branches=()):
    """Reduced Laplacian and injection vector, no connectivity check.

    Returns (B, p, bus_ids, bus_index, branch_b).  Used both by build_dc
    (after its connectivity check) and by the refactorization baseline,
    which must be allowed to run into the singular factorization.
    """
    branch_b = _susceptances(case)
    slack = case.slack_bus
    nonslack = [bus.id for bus in case.buses if bus.id != slack]
    bus_index = {bid: i for i, bid in enumerate(nonslack)}
    nred = len(nonslack)
    excl = frozenset(exclude_branches)
    entries = []
    for i, br in enumerate(case.branches):
        if br.status == 0 or i in excl:
            continue
        b = branch_b[i]
        fi = bus_index.get(br.from_bus)
        ti = bus_index.get(br.to_bus)
        if fi is not None:
            entries.append((fi, fi, b))
        if ti is not None:
            entries.append((ti, ti, b))
        if fi is not None and ti is not None:
            entries.append((max(fi, ti), min(fi, ti), -b))
    B = SparseMatrix.from_triplets(entries, nred)
    pg = np.zeros(nred)
    for g in case.gens:
        if g.status != 0 and g.bus != slack:
            pg[bus_index[g.bus]] += g.pg_mw
    pd = np.array([bus.pd_mw for bus in case.buses if bus.id != slack])
    p = (pg - pd) / case.base_mva
    return B, p, np.array(nonslack, dtype=np.int64), bus_index, branch_b


def build_dc(case: GridCase) -> DcModel:
    """Assemble the reduced DC model; the in-service grid must be connected.

    Raises
    ------
    DisconnectedBase
        With the component list, when the base grid is split.
    ZeroReactance
        For an in-service branch with x = 0.
    """
    report = check_connectivity(case)
    if not report.connected:
        raise DisconnectedBase([list(c) for c in report.components])
    B, p, bus_ids, bus_index, branch_b = reduced_system(case)
    return DcModel(case=case, B=B, p=p, slack_bus=case.slack_bus,
                   bus_ids=bus_ids, bus_index=bus_index, branch_b=branch_b)


def contingency_update(model: DcModel, c: Contingency) -> UpdateSpec:
    """Express branch removals as the principal-submatrix update
    B_new = B - H E H^T.

    S is the union of non-slack endpoints of the removed branches; each
    branch contributes its edge Laplacian b [[1,-1],[-1,1]] restricted to
    the non-slack rows (a slack endpoint leaves only the diagonal term).
    """
    case = model.case
    for i in c.branch_ids:
        if not (0 <= i < len(case.branches)):
            raise GridError(f"branch index {i} out of range")
        if case.branches[i].status == 0:
            raise OutOfServiceBranch(f"branch {i} is out of service in the base case")
    S: set[int] = set()
    for i in c.branch_ids:
        br = case.branches[i]
        for bus in (br.from_bus, br.to_bus):
            if bus != model.slack_bus:
                S.add(model.bus_index[bus])
    if not S:
        raise GridError("contingency touches only the slack bus")
    idx = np.array(sorted(S), dtype=np.int64)
    pos = {int(v): t for t, v in enumerate(idx)}
    m = idx.size
    E = np.zeros((m, m))
    for i in c.branch_ids:
        br = case.branches[i]
        b = model.branch_b[i]
        fi = pos[model.bus_index[br.from_bus]] \
            if br.from_bus != model.slack_bus else None
        ti = pos[model.bus_index[br.to_bus]] \
            if br.to_bus != model.slack_bus else None
        if fi is not None:
            E[fi, fi] += b
        if ti is not None:
            E[ti, ti] += b
        if fi is not None and ti is not None:
            E[fi, ti] -= b
            E[ti, fi] -= b
    return UpdateSpec(idx, E)


def outage_injections(model: DcModel, gen_buses) -> np.ndarray:
    """Injection vector with all in-service generation at the given buses
    removed (generator-outage contingencies change p, not B)."""
    p_hat = model.p.copy()
    for bus in gen_buses:
        if bus == model.slack_bus:
            raise GridError("cannot outage generation at the slack bus")
        if bus not in model.bus_index:
            raise GridError(f"unknown bus id {bus}")
        lost = sum(g.pg_mw for g in model.case.gens
                   if g.bus == bus and g.status != 0)
        p_hat[model.bus_index[bus]] -= lost / model.case.base_mva
    return p_hat


# -- synthetic grids ----------------------------------------------------------


def synthetic_grid(n: int, avg_degree: float = 3.0, seed: int = 0,
                   x_range: tuple[float, float] = (0.01, 0.1)) -> GridCase:
    """Seeded random connected grid with geometric locality.

    Buses are points in the unit square; a spanning tree connects each
    bus to its nearest already-placed neighbour, and extra chords connect
    near neighbours until the average degree is reached.  Locality keeps
    the graph grid-like (small separators), which is what makes sparse
    factorization and closure sizes behave like real networks; a uniform
    random graph would behave like an expander instead.
    """
    if n < 2:
        raise GridError("need at least 2 buses")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    ncell = max(1, int(math.sqrt(n)))
    buckets: dict[tuple[int, int], list[int]] = {}

    def cell_of(i):
        return (min(int(pts[i, 0] * ncell), ncell - 1),
                min(int(pts[i, 1] * ncell), ncell - 1))

    def near(i, placed_only=True, limit=8):
        """Indices of placed points near i, by expanding bucket rings."""
        cx, cy = cell_of(i)
        found: list[int] = []
        for radius in range(ncell + 1):
            ring = []
            for dx in range(-radius, radius + 1):
                for dy in range(-radius, radius + 1):
                    if max(abs(dx), abs(dy)) != radius:
                        continue
                    ring.extend(buckets.get((cx + dx, cy + dy), ()))
            found.extend(ring)
            if len(found) >= limit and radius >= 1:
                break
        return found

    edges: set[tuple[int, int]] = set()

    def add_edge(a, b):
        if a != b:
            edges.add((min(a, b), max(a, b)))

    buckets[cell_of(0)] = [0]
    for i in range(1, n):
        cand = near(i)
        d2 = [(np.sum((pts[j] - pts[i]) ** 2), j) for j in cand]
        _, j = min(d2)
        add_edge(i, j)
        buckets.setdefault(cell_of(i), []).append(i)

    target = max(n - 1, int(round(avg_degree * n / 2.0)))
    attempts = 0
    while len(edges) < target and attempts < 20 * n:
        attempts += 1
        u = int(rng.integers(0, n))
        cand = sorted((np.sum((pts[j] - pts[u]) ** 2), j) for j in near(u, limit=12))
        for _, j in cand:
            if j != u and (min(u, j), max(u, j)) not in edges:
                add_edge(u, j)
                break

    xs = rng.uniform(x_range[0], x_range[1], size=len(edges))
    branches = tuple(Branch(from_bus=a + 1, to_bus=b + 1, x=float(x),
                            tap=0.0, status=1)
                     for (a, b), x in zip(sorted(edges), xs))
    pd = rng.uniform(20.0, 120.0, size=n)
    buses = tuple(Bus(id=i + 1, type=3 if i == 0 else 1, pd_mw=float(pd[i]))
                  for i in range(n))
    ngen = max(1, n // 8)
    gen_buses = rng.choice(n, size=ngen, replace=False)
    weights = rng.uniform(0.5, 1.5, size=ngen)
    pg = weights * (pd.sum() / weights.sum())
    gens = tuple(Gen(bus=int(b) + 1, pg_mw=float(g), status=1)
                 for b, g in zip(gen_buses, pg))
    return GridCase(base_mva=100.0, buses=buses, gens=gens, branches=branches)


def write_matpower(case: GridCase, name: str = "case_synth") -> str:
    """Emit the case in the MATPOWER function-file subset this package reads."""
    out = [f"function mpc = {name}", "mpc.version = '2';",
           f"mpc.baseMVA = {case.base_mva:.17g};", "", "mpc.bus = ["]
    for b in case.buses:
        out.append(f"\t{b.id}\t{b.type}\t{b.pd_mw:.17g}\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;")
    out.append("];")
    out.append("")
    out.append("mpc.gen = [")
    for g in case.gens:
        out.append(f"\t{g.bus}\t{g.pg_mw:.17g}\t0\t0\t0\t1\t{case.base_mva:.17g}"
                   f"\t{g.status}\t{g.pg_mw * 1.5:.17g}\t0;")
    out.append("];")
    out.append("")
    out.append("mpc.branch = [")
    for br in case.branches:
        out.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.x:.17g}\t0\t0\t0\t0"
                   f"\t{br.tap:.17g}\t0\t{br.status}\t-360\t360;")
    out.append("];")
    return "\n".join(out) + "\n"
