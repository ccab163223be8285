"""Normalization: maximal loop fission followed by stride minimization.

The stride of a nest (``distance`` mode) is, for every access site, the sum
of ``|addr(t+1) - addr(t)|`` over consecutive executions of that site, where
``addr`` is the row-major element offset.  ``ooo`` mode counts accesses whose
outer iterators index less significant dimensions than inner ones.

Permutations of each perfect band are enumerated (up to ``PERM_CAP`` loops),
filtered for legality and ranked by ``(stride, canonical text)``; the
canonical text makes the winner independent of the starting loop order.
Bands are revisited until no band changes, so every band is optimal given
the others.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .canonical import text_key
from .deps import (bounds_respect_order, dependence_edges, fission_partition,
                   is_permutation_legal, perfect_band)
from .domain import IterationCapError, affine_values, domain_size, enumerate_domain, env_cap
from .ir import (Computation, Loop, Node, Path, Program, fresh_name,
                 node_at, program_names, rename_node, replace_at, row_major_strides,
                 validate, walk)

__all__ = [
    "StrideMetric", "NormalizationReport", "BandReport", "max_fission", "stride",
    "out_of_order_count", "minimize_strides", "normalize_program", "permute_band",
    "shrink_bindings", "PERM_CAP", "STRIDE_CAP", "NormalizationError",
]

PERM_CAP = 6
STRIDE_CAP = 10 ** 6


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class StrideMetric:
    mode: str = "distance"  # distance | ooo
    bindings: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("distance", "ooo"):
            raise ValueError(f"metric mode must be 'distance' or 'ooo', not {self.mode!r}")
        object.__setattr__(self, "bindings", dict(self.bindings))

    def __hash__(self):
        return hash((self.mode, tuple(sorted(self.bindings.items()))))


@dataclass
class BandReport:
    path: Path
    band: tuple[str, ...]
    considered: int
    legal: int
    chosen: tuple[str, ...]
    stride: int
    candidates: list[tuple[tuple[str, ...], int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"path": list(self.path), "band": list(self.band), "considered": self.considered,
                "legal": self.legal, "chosen": list(self.chosen), "stride": self.stride,
                "legal_candidates": [{"order": list(o), "stride": s} for o, s in self.candidates]}


@dataclass
class NormalizationReport:
    metric: str = "distance"
    bindings: dict = field(default_factory=dict)
    shrunk: bool = False
    fission_steps: list[Path] = field(default_factory=list)
    bands: list[BandReport] = field(default_factory=list)
    passes: int = 0

    def to_json(self) -> dict:
        return {"version": 1, "metric": self.metric, "bindings": dict(self.bindings),
                "bindings_shrunk": self.shrunk,
                "fission_steps": {"count": len(self.fission_steps),
                                  "scopes": [list(p) for p in self.fission_steps]},
                "bands": [b.to_json() for b in self.bands], "passes": self.passes}


# ---------------------------------------------------------------------------
# Maximal fission
# ---------------------------------------------------------------------------


def _split_loop(program: Program, path: Path, groups: list[list[int]]) -> Program:
    loop = node_at(program.top, path)
    taken = program_names(program)
    new = []
    for k, g in enumerate(groups):
        body = tuple(loop.body[c] for c in g)
        if k == 0:
            new.append(loop.with_body(body))
        else:
            name = fresh_name(loop.iterator, taken)
            new.append(rename_node(loop.with_body(body), {loop.iterator: name}))
    return program.with_top(replace_at(program.top, path, new))


def _fission_once(program: Program, report: Optional[NormalizationReport],
                  bindings: Mapping[str, int]) -> Optional[Program]:
    edges = dependence_edges(program, bindings)
    for path, node, _ in walk(program.top):
        if isinstance(node, Loop) and len(node.body) > 1:
            groups = fission_partition(program, path, edges)
            if len(groups) > 1:
                if report is not None:
                    report.fission_steps.append(path)
                return _split_loop(program, path, groups)
    return None


def max_fission(program: Program, bindings: Mapping[str, int] | None = None,
                report: Optional[NormalizationReport] = None) -> Program:
    """Distribute every loop over its atomic groups until nothing splits."""
    bindings = program.bindings(bindings)
    while True:
        nxt = _fission_once(program, report, bindings)
        if nxt is None:
            return program
        program = nxt


# ---------------------------------------------------------------------------
# Stride metrics
# ---------------------------------------------------------------------------


def shrink_bindings(program: Program, nest: Node, bindings: Mapping[str, int],
                    cap: int | None = None) -> tuple[dict[str, int], bool]:
    """Scale parameters down proportionally until the nest has ``<= cap``
    iterations per computation."""
    cap = env_cap(STRIDE_CAP) if cap is None else cap
    b = dict(bindings)
    shrunk = False
    for _ in range(64):
        try:
            for _, node, outer in walk((nest,)):
                if isinstance(node, Computation):
                    domain_size(outer, b, cap)
            return b, shrunk
        except IterationCapError:
            shrunk = True
            b = {k: max(1, int(v * 0.75)) for k, v in b.items()}
    raise NormalizationError("cannot shrink bindings under the stride cap")


def _sites(nest: Node):
    for _, node, outer in walk((nest,)):
        if isinstance(node, Computation):
            yield node, outer


def stride(nest: Node, program: Program, metric: StrideMetric = StrideMetric()) -> int:
    """Stride of one nest (a node of ``program``) under ``metric``."""
    if metric.mode == "ooo":
        return out_of_order_count(nest)
    bindings = program.bindings(metric.bindings)
    missing = [p for p in program.param_names if p not in bindings]
    if missing:
        raise NormalizationError(f"stride needs bindings for {', '.join(missing)}")
    total = 0
    for comp, outer in _sites(nest):
        pts = enumerate_domain(outer, bindings, env_cap(STRIDE_CAP))
        if pts.shape[0] < 2:
            continue
        cols = {l.iterator: k for k, l in enumerate(outer)}
        for acc in comp.accesses:
            decl = program.array(acc.array)
            st = row_major_strides(decl.extents(bindings))
            addr = np.zeros(pts.shape[0], dtype=np.int64)
            for s, e in zip(st, acc.indices):
                addr += s * affine_values(e, pts, cols, bindings)
            total += int(np.abs(np.diff(addr)).sum())
    return total


def out_of_order_count(nest: Node) -> int:
    """Count (loop, access, dimension) triples where the loop indexes
    dimension ``d`` of the access while a loop nested inside it indexes a
    more significant dimension of the same access."""
    count = 0
    for comp, outer in _sites(nest):
        for acc in comp.accesses:
            for depth, loop in enumerate(outer):
                inner = {l.iterator for l in outer[depth + 1:]}
                for d, e in enumerate(acc.indices):
                    if loop.iterator not in e.vars:
                        continue
                    if any(inner & acc.indices[d2].vars for d2 in range(d)):
                        count += 1
    return count


# ---------------------------------------------------------------------------
# Band permutation
# ---------------------------------------------------------------------------


def permute_band(program: Program, path: Path, order: Sequence[str]) -> Program:
    """Reorder the perfect band at ``path`` (outermost first, by iterator).

    ``order`` may cover a prefix of the band.  Raises ``ValueError`` when the
    new order would make a bound reference a loop nested inside it.
    """
    band = perfect_band(program, path)
    loops = [node_at(program.top, p) for p in band][:len(order)]
    by_name = {l.iterator: l for l in loops}
    if sorted(order) != sorted(by_name):
        raise ValueError(f"{list(order)} is not a permutation of {sorted(by_name)}")
    if not bounds_respect_order(loops, order):
        raise ValueError(f"order {list(order)} breaks loop bounds")
    body = loops[-1].body
    for it in reversed(order):
        body = (by_name[it].with_body(body),)
    return program.with_top(replace_at(program.top, path, body))


def _bands(program: Program) -> list[Path]:
    """Top loops of every maximal perfect band, in pre-order."""
    out = []
    for path, node, outer in walk(program.top):
        if not isinstance(node, Loop):
            continue
        parent = node_at(program.top, path[:-1]) if len(path) > 1 else None
        if isinstance(parent, Loop) and len(parent.body) == 1:
            continue
        out.append(path)
    return out


def _significance(loops: Sequence[Loop], nest: Node) -> dict[str, int]:
    """Largest row-major significance among dimensions an iterator indexes
    (0 = contiguous); iterators indexing nothing rank highest."""
    sig = {l.iterator: -1 for l in loops}
    for comp, _ in _sites(nest):
        for acc in comp.accesses:
            rank = len(acc.indices)
            for d, e in enumerate(acc.indices):
                for v in e.vars & sig.keys():
                    sig[v] = max(sig[v], rank - 1 - d)
    return {k: (10 ** 6 if v < 0 else v) for k, v in sig.items()}


def _candidates(loops: Sequence[Loop], nest: Node) -> list[tuple[str, ...]]:
    names = [l.iterator for l in loops]
    if len(names) <= PERM_CAP:
        return list(itertools.permutations(names))
    # deep band: group iterators by the significance of the dimensions they
    # index and order groups from most to least significant
    sig = _significance(loops, nest)
    grouped = tuple(sorted(names, key=lambda n: -sig[n]))
    return [tuple(names)] + ([grouped] if grouped != tuple(names) else [])


def _top_index(path: Path) -> int:
    return path[0]


def _minimize_band(program: Program, path: Path, metric: StrideMetric,
                   edges, report: Optional[NormalizationReport]) -> Program:
    band = perfect_band(program, path)
    loops = [node_at(program.top, p) for p in band]
    names = tuple(l.iterator for l in loops)
    top = _top_index(path)
    best = None
    considered = legal = 0
    table = []
    for order in _candidates(loops, node_at(program.top, band[0])):
        considered += 1
        if not bounds_respect_order(loops, order):
            continue
        if not is_permutation_legal(program, path, order, edges):
            continue
        legal += 1
        cand = permute_band(program, path, order) if order != names else program
        nest = cand.top[top]
        key = (stride(nest, cand, metric), text_key(cand, nest))
        table.append((order, key[0]))
        if best is None or key < best[0]:
            best = (key, order, cand)
    if report is not None:
        report.bands.append(BandReport(path, names, considered, legal, best[1], best[0][0], table))
    return best[2]


def minimize_strides(program: Program, metric: StrideMetric = StrideMetric(),
                     report: Optional[NormalizationReport] = None, max_passes: int = 16) -> Program:
    """Replace every perfect band by its legal permutation of least stride."""
    bindings = program.bindings(metric.bindings)
    for n_pass in range(max_passes):
        changed = False
        edges = dependence_edges(program, bindings)
        pass_reports = NormalizationReport() if report is not None else None
        for path in _bands(program):
            nxt = _minimize_band(program, path, metric, edges, pass_reports)
            if nxt is not program and nxt != program:
                program = nxt
                changed = True
                edges = dependence_edges(program, bindings)
        if report is not None:
            report.passes = n_pass + 1
            report.bands = pass_reports.bands
        if not changed:
            return program
    return program


def normalize_program(program: Program, metric: StrideMetric | None = None
                      ) -> tuple[Program, NormalizationReport]:
    """Maximal fission, then stride minimization; the result is re-validated."""
    metric = metric or StrideMetric()
    bindings = program.bindings(metric.bindings)
    report = NormalizationReport(metric.mode)
    if metric.mode == "distance":
        shrunk_all = dict(bindings)
        for nest in program.top:
            b, s = shrink_bindings(program, nest, shrunk_all)
            if s:
                report.shrunk = True
                shrunk_all = b
        bindings = shrunk_all
    report.bindings = dict(bindings)
    metric = StrideMetric(metric.mode, bindings)
    out = max_fission(program, bindings, report)
    out = minimize_strides(out, metric, report)
    diags = validate(out)
    if diags:
        raise NormalizationError("normalization produced an invalid program: "
                                 + "; ".join(map(str, diags)))
    return out, report
