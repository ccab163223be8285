"""Affine dependence analysis and legality predicates.

Edges are oriented in execution order: ``src`` runs before ``dst``.  Each
edge carries one entry per loop common to both computations (outermost
first) holding a set of possible directions and, when known, the exact
distance ``iter(dst) - iter(src)``.  Entries before ``loop_carried_at`` are
exactly ``=`` and the entry at that level is exactly ``<``; deeper entries
may be any non-empty subset of ``{<, =, >}``.

Subscript tests: ZIV and strong SIV are exact, GCD disproves the rest where
it can.  Pairs where a common loop iterator appears in any other subscript
shape are *inexact*; when every parameter is bound and the iteration space is
small enough they are refined by the brute-force oracle and flagged
``concrete-exact``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import networkx as nx

from .domain import IterationCapError, domain_size, env_cap
from .ir import (Access, Computation, IdiomCall, Loop, Node, Path, Program, node_at, row_major_strides, walk)

__all__ = [
    "DepEntry", "DependenceEdge", "DependenceGraph", "OracleCapError", "analyze",
    "dependence_edges", "brute_force_oracle", "is_permutation_legal", "perfect_band",
    "bounds_respect_order", "fission_partition", "carried_at", "covers", "ORACLE_CAP",
]

ALL_DIRS = frozenset("<=>")
ORACLE_CAP = 10 ** 6
_FLIP = {"<": ">", ">": "<", "=": "="}


@dataclass(frozen=True)
class DepEntry:
    iterator: str
    distance: Optional[int]
    dirs: frozenset

    @property
    def direction(self) -> str:
        return next(iter(self.dirs)) if len(self.dirs) == 1 else "*"

    def __str__(self) -> str:
        if self.distance is not None:
            return str(self.distance)
        return "".join(d for d in "<=>" if d in self.dirs) if len(self.dirs) < 3 else "*"


@dataclass(frozen=True)
class DependenceEdge:
    src: str
    dst: str
    kind: str  # flow | anti | output
    entries: tuple[DepEntry, ...]
    array: str = ""
    exactness: str = "static"  # static | concrete-exact | oracle

    @property
    def loop_carried_at(self) -> Optional[int]:
        for k, e in enumerate(self.entries):
            if e.dirs != frozenset("="):
                return k
        return None

    @property
    def distances(self) -> tuple[Optional[int], ...]:
        return tuple(e.distance for e in self.entries)

    @property
    def directions(self) -> tuple[str, ...]:
        return tuple(e.direction for e in self.entries)

    def __str__(self) -> str:
        vec = ", ".join(f"{e.iterator}:{e}" for e in self.entries)
        return f"{self.src} -> {self.dst} {self.kind} on {self.array} ({vec})"


@dataclass(frozen=True)
class DependenceGraph:
    nodes: tuple[str, ...]
    edges: tuple[DependenceEdge, ...]

    def between(self, a: Iterable[str], b: Iterable[str]) -> list[DependenceEdge]:
        a, b = set(a), set(b)
        return [e for e in self.edges if e.src in a and e.dst in b]


# ---------------------------------------------------------------------------
# Program layout: computations, their loops and textual order
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Site:
    comp: Computation
    order: int  # textual (pre-order) position
    loops: tuple[Loop, ...]
    loop_paths: tuple[Path, ...]


def _sites(body: Sequence[Node]) -> list[_Site]:
    out = []
    loop_path: dict[int, Path] = {}
    for path, node, outer in walk(body):
        if isinstance(node, Loop):
            loop_path[id(node)] = path
        elif isinstance(node, Computation):
            out.append(_Site(node, len(out), outer, tuple(loop_path[id(l)] for l in outer)))
    return out


def _n_common(a: _Site, b: _Site) -> int:
    n = 0
    for pa, pb in zip(a.loop_paths, b.loop_paths):
        if pa != pb:
            break
        n += 1
    return n


# ---------------------------------------------------------------------------
# Static subscript tests
# ---------------------------------------------------------------------------


class _Independent(Exception):
    pass


def _test_pair(x: Access, sx: _Site, y: Access, sy: _Site, n: int, params: set[str]):
    """Per-common-loop ``(dirs, distance)`` for accesses x (in sx) and y (in sy),
    or ``None`` if independent.  Second result: whether the test was exact."""
    common = [l.iterator for l in sx.loops[:n]]
    own_x = {l.iterator for l in sx.loops[n:]}
    own_y = {l.iterator for l in sy.loops[n:]}
    dirs = {it: set(ALL_DIRS) for it in common}
    dist: dict[str, Optional[int]] = {it: None for it in common}
    exact = True
    for fx, gy in zip(x.indices, y.indices):
        # variables: common iterators (separate copies for x and y), private
        # iterators, parameters (shared)
        cx = {v: c for v, c in fx.terms if v in common}
        cy = {v: c for v, c in gy.terms if v in common}
        px = {v: c for v, c in fx.terms if v in own_x}
        py = {v: c for v, c in gy.terms if v in own_y}
        sym = {v: fx.coeff(v) - gy.coeff(v) for v in (fx.vars | gy.vars) & params}
        sym = {v: c for v, c in sym.items() if c}
        rhs = gy.const - fx.const
        coeffs = list(cx.values()) + list(cy.values()) + list(px.values()) + \
            list(py.values()) + list(sym.values())
        if not coeffs:  # ZIV
            if rhs != 0:
                return None, True
            continue
        g = functools.reduce(math.gcd, (abs(c) for c in coeffs))
        if rhs % g:
            return None, True
        if (not px and not py and not sym and len(cx) == 1 and cx.keys() == cy.keys()
                and next(iter(cx.values())) == next(iter(cy.values()))):
            (it, a), = cx.items()
            # a*i_x + c_x = a*i_y + c_y  ->  i_y - i_x = (c_x - c_y) / a
            num = fx.const - gy.const
            if num % a:
                return None, True
            d = num // a
            if dist[it] is not None and dist[it] != d:
                return None, True
            dist[it] = d
            dirs[it] &= {"<" if d > 0 else ">" if d < 0 else "="}
            if not dirs[it]:
                return None, True
        elif cx or cy:
            exact = False
    # tile loops move with their point loops
    for l in sx.loops[:n]:
        if l.tile_of and l.tile_of in dirs:
            induced = set()
            for d in dirs[l.tile_of]:
                induced |= {"=", d}
            dirs[l.iterator] &= induced
    if any(not d for d in dirs.values()):
        return None, True
    return [(it, frozenset(dirs[it]), dist[it]) for it in common], exact


def _kind(src: Access, dst: Access) -> str:
    if src.kind == "write":
        return "flow" if dst.kind == "read" else "output"
    return "anti"


def _split(x: Access, sx: _Site, y: Access, sy: _Site,
           vec: list[tuple[str, frozenset, Optional[int]]]) -> list[DependenceEdge]:
    """Turn a per-loop direction vector for (x, y) into execution-ordered edges."""
    out = []
    prefix: list[DepEntry] = []
    for k, (it, ds, d) in enumerate(vec):
        rest = vec[k + 1:]
        if "<" in ds:
            ents = prefix + [DepEntry(it, d if d and d > 0 else None, frozenset("<"))]
            ents += [DepEntry(i2, d2, s2) for i2, s2, d2 in rest]
            out.append(DependenceEdge(sx.comp.id, sy.comp.id, _kind(x, y), tuple(ents), x.array))
        if ">" in ds:
            ents = prefix + [DepEntry(it, -d if d and d < 0 else None, frozenset("<"))]
            ents += [DepEntry(i2, None if d2 is None else -d2,
                              frozenset(_FLIP[c] for c in s2)) for i2, s2, d2 in rest]
            out.append(DependenceEdge(sy.comp.id, sx.comp.id, _kind(y, x), tuple(ents), x.array))
        if "=" not in ds:
            return out
        prefix.append(DepEntry(it, 0, frozenset("=")))
    if sx.order < sy.order:
        out.append(DependenceEdge(sx.comp.id, sy.comp.id, _kind(x, y), tuple(prefix), x.array))
    elif sy.order < sx.order:
        out.append(DependenceEdge(sy.comp.id, sx.comp.id, _kind(y, x), tuple(prefix), x.array))
    return out


def _access_sites(site: _Site):
    return [(k, a) for k, a in enumerate(site.comp.accesses)]


def _pairs(sites: list[_Site]):
    for i, sx in enumerate(sites):
        for sy in sites[i:]:
            for kx, x in _access_sites(sx):
                for ky, y in _access_sites(sy):
                    if x.array != y.array or (x.kind == "read" and y.kind == "read"):
                        continue
                    if sx is sy and ky < kx:
                        continue
                    yield sx, kx, x, sy, ky, y


@functools.lru_cache(maxsize=512)
def _edges_cached(program: Program, bindings: tuple, refine: bool) -> tuple[DependenceEdge, ...]:
    sites = _sites(program.top)
    params = set(program.param_names)
    edges: list[DependenceEdge] = []
    inexact: list[tuple] = []
    for sx, kx, x, sy, ky, y in _pairs(sites):
        n = _n_common(sx, sy)
        vec, exact = _test_pair(x, sx, y, sy, n, params)
        if vec is None:
            continue
        if not exact:
            inexact.append(((sx.comp.id, kx), (sy.comp.id, ky)))
        edges.extend((e, (sx.comp.id, kx), (sy.comp.id, ky)) for e in _split(x, sx, y, sy, vec))
    result = {(e, a, b) for e, a, b in edges}
    if refine and inexact:
        bound = dict(bindings)
        refined = _refine(program, bound, sites, inexact)
        if refined is not None:
            drop = {frozenset(p) for p in inexact}
            result = {t for t in result if frozenset((t[1], t[2])) not in drop}
            result |= refined
    return tuple(sorted({t[0] for t in result}, key=_edge_key))


def _edge_key(e: DependenceEdge):
    return (e.src, e.dst, e.kind, e.array, e.loop_carried_at if e.loop_carried_at is not None else -1,
            str(e))


def _refine(program: Program, bindings: dict, sites: list[_Site], pairs: list[tuple]):
    if any(p not in bindings for p in program.param_names):
        return None
    try:
        total = sum(domain_size(s.loops, bindings, ORACLE_CAP) for s in sites)
    except IterationCapError:
        return None
    if total > ORACLE_CAP:
        return None
    wanted = {frozenset(p) for p in pairs}
    arrays = set()
    by_id = {s.comp.id: s for s in sites}
    for (a, ka), _ in pairs:
        arrays.add(by_id[a].comp.accesses[ka].array)
    raw = _oracle_raw(program, bindings, "all", frozenset(arrays))
    out = set()
    for (src, ks, dst, kd), vecs in raw.items():
        if frozenset(((src, ks), (dst, kd))) not in wanted:
            continue
        for e in _aggregate(program, src, ks, dst, kd, vecs, by_id, "concrete-exact"):
            out.add((e, (src, ks), (dst, kd)))
    return out


def _aggregate(program, src, ks, dst, kd, vecs, by_id, exactness) -> list[DependenceEdge]:
    """Collapse concrete distance vectors into one edge per carried level."""
    s, d = by_id[src], by_id[dst]
    n = _n_common(s, d)
    names = [l.iterator for l in s.loops[:n]]
    kind = _kind(s.comp.accesses[ks], d.comp.accesses[kd])
    array = s.comp.accesses[ks].array
    groups: dict[Optional[int], list[tuple[int, ...]]] = {}
    for v in vecs:
        lvl = next((k for k, x in enumerate(v) if x), None)
        groups.setdefault(lvl, []).append(v)
    out = []
    for lvl, vs in groups.items():
        ents = []
        for k, it in enumerate(names):
            col = {v[k] for v in vs}
            dirs = frozenset("<" if x > 0 else ">" if x < 0 else "=" for x in col)
            ents.append(DepEntry(it, col.pop() if len(col) == 1 else None, dirs))
        out.append(DependenceEdge(src, dst, kind, tuple(ents), array, exactness))
    return out


def dependence_edges(program: Program, bindings: Mapping[str, int] | None = None,
                     refine: bool = True) -> tuple[DependenceEdge, ...]:
    """All dependence edges of a program (sorted, deduplicated)."""
    b = program.bindings(bindings)
    return _edges_cached(program, tuple(sorted(b.items())), refine)


def analyze(program: Program, bindings: Mapping[str, int] | None = None,
            refine: bool = True) -> dict[Path, DependenceGraph]:
    """Dependence graph per body scope: ``()`` for the top level and each
    loop's path for its body.  Nodes are the computations inside the scope."""
    edges = dependence_edges(program, bindings, refine)
    scopes: dict[Path, list[str]] = {(): []}
    for path, node, outer in walk(program.top):
        if isinstance(node, Loop):
            scopes[path] = []
    for path, node, outer in walk(program.top):
        if isinstance(node, Computation):
            for k in range(len(path)):
                if path[:k] in scopes:
                    scopes[path[:k]].append(node.id)
    out = {}
    for path, ids in scopes.items():
        members = set(ids)
        out[path] = DependenceGraph(tuple(ids), tuple(e for e in edges
                                                      if e.src in members and e.dst in members))
    return out


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


class OracleCapError(RuntimeError):
    pass


def _execute_accesses(program: Program, bindings: Mapping[str, int], arrays=None):
    """Yield ``(comp_id, site_index, access, cell, iteration vector)`` in execution order."""
    strides = {a.name: row_major_strides(a.extents(bindings)) for a in program.arrays}

    def visit(body, env, vec):
        for node in body:
            if isinstance(node, IdiomCall):
                yield from visit((node.reference,), env, vec)
            elif isinstance(node, Loop):
                lo = node.lower.evaluate(env)
                hi = node.upper.evaluate(env)
                if node.upper_div != 1:
                    hi = -((-hi) // node.upper_div)
                for m in node.upper_min:
                    hi = min(hi, m.evaluate(env))
                for v in range(lo, hi):
                    env[node.iterator] = v
                    yield from visit(node.body, env, vec + (v,))
                env.pop(node.iterator, None)
            else:
                # reads happen before the write within one instance
                accs = list(enumerate(node.accesses))
                for k, acc in accs[1:] + accs[:1]:
                    if arrays is not None and acc.array not in arrays:
                        continue
                    st = strides[acc.array]
                    cell = sum(s * e.evaluate(env) for s, e in zip(st, acc.indices))
                    yield node.id, k, acc, (acc.array, cell), vec
    yield from visit(program.top, dict(bindings), ())


def _oracle_raw(program, bindings, mode, arrays=None):
    by_id = {s.comp.id: s for s in _sites(program.top)}
    ncommon: dict[tuple[str, str], int] = {}
    raw: dict[tuple, set] = {}
    hist: dict[tuple, list] = {}

    def add(p, q):
        (ca, ka, _, va), (cb, kb, _, vb) = p, q
        key = (ca, cb)
        if key not in ncommon:
            ncommon[key] = _n_common(by_id[ca], by_id[cb])
        n = ncommon[key]
        if ca == cb and va == vb:
            return  # same instance
        raw.setdefault((ca, ka, cb, kb), set()).add(tuple(b - a for a, b in zip(va[:n], vb[:n])))

    count = 0
    for cid, k, acc, cell, vec in _execute_accesses(program, bindings, arrays):
        count += 1
        if count > 8 * ORACLE_CAP:
            raise OracleCapError("too many dynamic accesses for the oracle")
        cur = (cid, k, acc, vec)
        h = hist.setdefault(cell, [] if mode == "all" else [None, []])
        if mode == "all":
            for prev in h:
                if prev[2].kind == "write" or acc.kind == "write":
                    add(prev, cur)
            h.append(cur)
        else:
            last_w, reads = h
            if acc.kind == "read":
                if last_w is not None:
                    add(last_w, cur)
                reads.append(cur)
            else:
                if last_w is not None:
                    add(last_w, cur)
                for r in reads:
                    add(r, cur)
                h[0], h[1] = cur, []
    return raw


def brute_force_oracle(program: Program, bindings: Mapping[str, int] | None = None,
                       mode: str = "all") -> DependenceGraph:
    """Exact dependences by enumerating dynamic accesses in execution order.

    ``mode="all"`` relates every conflicting pair of accesses to a cell;
    ``mode="direct"`` only consecutive ones (last writer / intervening reads).
    One edge per distinct distance vector.
    """
    b = program.bindings(bindings)
    sites = _sites(program.top)
    cap = env_cap(ORACLE_CAP)
    try:
        total = sum(domain_size(s.loops, b, cap) for s in sites)
    except IterationCapError:
        total = cap + 1
    if total > cap:
        raise OracleCapError(f"iteration space exceeds the oracle cap of {cap}")
    by_id = {s.comp.id: s for s in sites}
    edges = set()
    for (src, ks, dst, kd), vecs in _oracle_raw(program, b, mode).items():
        s, d = by_id[src], by_id[dst]
        names = [l.iterator for l in s.loops[:_n_common(s, d)]]
        kind = _kind(s.comp.accesses[ks], d.comp.accesses[kd])
        for v in vecs:
            ents = tuple(DepEntry(it, x, frozenset("<" if x > 0 else ">" if x < 0 else "="))
                         for it, x in zip(names, v))
            edges.add(DependenceEdge(src, dst, kind, ents, s.comp.accesses[ks].array, "oracle"))
    return DependenceGraph(tuple(s.comp.id for s in sites), tuple(sorted(edges, key=_edge_key)))


def covers(static: DependenceEdge, concrete: DependenceEdge) -> bool:
    """Whether a static edge implies a concrete (oracle) edge."""
    if (static.src, static.dst, static.kind, static.array) != (
            concrete.src, concrete.dst, concrete.kind, concrete.array):
        return False
    if len(static.entries) != len(concrete.entries):
        return False
    for s, c in zip(static.entries, concrete.entries):
        if not c.dirs <= s.dirs:
            return False
        if s.distance is not None and c.distance is not None and s.distance != c.distance:
            return False
    return True


# ---------------------------------------------------------------------------
# Legality
# ---------------------------------------------------------------------------


def perfect_band(program: Program, path: Path) -> list[Path]:
    """Paths of the perfectly nested loop chain starting at ``path``."""
    node = node_at(program.top, path)
    if not isinstance(node, Loop):
        raise ValueError(f"no loop at {path}")
    band = [path]
    while len(node.body) == 1 and isinstance(node.body[0], Loop):
        node = node.body[0]
        band.append(band[-1] + (0,))
    return band


def _edges_under(program: Program, path: Path, edges) -> list[DependenceEdge]:
    ids = {c.id for _, c, _ in walk((node_at(program.top, path),)) if isinstance(c, Computation)}
    return [e for e in edges if e.src in ids and e.dst in ids]


def bounds_respect_order(loops: Sequence[Loop], order: Sequence[str]) -> bool:
    """A band order is expressible only if each loop's bounds use loops
    placed outside it."""
    by_name = {l.iterator: l for l in loops}
    seen: set[str] = set()
    names = set(by_name)
    for it in order:
        for e in by_name[it].bound_exprs:
            if (e.vars & names) - seen:
                return False
        seen.add(it)
    return True


def _resolve_order(program: Program, path: Path, perm: Sequence) -> tuple[list[Loop], list[str], int]:
    band = perfect_band(program, path)
    loops = [node_at(program.top, p) for p in band]
    names = [l.iterator for l in loops]
    order = [names[p] if isinstance(p, int) else p for p in perm]
    if sorted(order) != sorted(names[:len(order)]):
        raise ValueError(f"permutation {list(perm)} is not a permutation of the perfect "
                         f"band {names[:len(order)]} at {path}")
    depth = len([p for p in range(len(path))
                 if isinstance(node_at(program.top, path[:p + 1]), Loop)]) - 1
    return loops[:len(order)], order, depth


def is_permutation_legal(program: Program, path: Path, perm: Sequence,
                         edges: Sequence[DependenceEdge] | None = None,
                         bindings: Mapping[str, int] | None = None) -> bool:
    """Whether reordering the perfect band at ``path`` to ``perm`` (iterator
    names or band positions, outermost first) keeps every dependence
    lexicographically non-negative.  Raises ``ValueError`` if ``perm`` reaches
    outside the perfect band."""
    loops, order, depth = _resolve_order(program, path, perm)
    if edges is None:
        edges = dependence_edges(program, bindings)
    band = [l.iterator for l in loops]
    for e in _edges_under(program, path, edges):
        lvl = e.loop_carried_at
        if lvl is None or lvl < depth:
            continue  # loop-independent or carried outside the band
        ents = {ent.iterator: ent.dirs for ent in e.entries[depth:depth + len(band)]}
        for it in order:
            ds = ents[it]
            if ds == {"="}:
                continue
            if ">" in ds:
                return False
            if "=" not in ds:
                break
    return True


def carried_at(program: Program, path: Path, edges: Sequence[DependenceEdge] | None = None,
               bindings: Mapping[str, int] | None = None) -> list[DependenceEdge]:
    """Edges carried by the loop at ``path``."""
    if edges is None:
        edges = dependence_edges(program, bindings)
    loop = node_at(program.top, path)
    depth = sum(isinstance(node_at(program.top, path[:k + 1]), Loop) for k in range(len(path))) - 1
    out = []
    for e in _edges_under(program, path, edges):
        if e.loop_carried_at is not None and e.loop_carried_at <= depth < len(e.entries):
            if e.entries[depth].iterator == loop.iterator and "<" in e.entries[depth].dirs:
                out.append(e)
    return out


def fission_partition(program: Program, path: Path,
                      edges: Sequence[DependenceEdge] | None = None,
                      bindings: Mapping[str, int] | None = None) -> list[list[int]]:
    """Partition the children of the loop at ``path`` into atomic groups.

    Groups are the strongly connected components of the dependence graph
    restricted to edges carried by this loop or independent of it, emitted
    in a topological order that prefers original textual order.
    """
    loop = node_at(program.top, path)
    if not isinstance(loop, Loop):
        raise ValueError(f"no loop at {path}")
    if edges is None:
        edges = dependence_edges(program, bindings)
    depth = sum(isinstance(node_at(program.top, path[:k + 1]), Loop) for k in range(len(path))) - 1
    owner: dict[str, int] = {}
    for k, child in enumerate(loop.body):
        for _, n, _ in walk((child,)):
            if isinstance(n, Computation):
                owner[n.id] = k
    g = nx.DiGraph()
    g.add_nodes_from(range(len(loop.body)))
    for e in edges:
        a, b = owner.get(e.src), owner.get(e.dst)
        if a is None or b is None or a == b:
            continue
        lvl = e.loop_carried_at
        if lvl is None or lvl >= depth:
            g.add_edge(a, b)
    cond = nx.condensation(g)
    members = {c: sorted(cond.nodes[c]["members"]) for c in cond.nodes}
    order = nx.lexicographical_topological_sort(cond, key=lambda c: members[c][0])
    return [members[c] for c in order]
