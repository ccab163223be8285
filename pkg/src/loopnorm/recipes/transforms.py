"""Loop transformations with legality checks.

Paths in a :class:`Recipe` are relative to the nest the recipe matched
(``()`` is the nest root).  Program-scoped recipes (``key is None``) use
absolute paths and may fuse top-level nests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from ..deps import (bounds_respect_order, carried_at, dependence_edges, is_permutation_legal,
                    perfect_band)
from ..ir import (AffineExpr, Computation, IdiomCall, Loop, Node, Path, Program, fresh_name,
                  fuse_loops, node_at, program_names, replace_at, walk)
from ..normalize import permute_band
from .idioms import detect_idiom, idiom_args

__all__ = [
    "Interchange", "Tile", "MarkParallel", "MarkVectorize", "FuseProducerConsumer",
    "ReplaceIdiom", "Transform", "IllegalStep", "KeyMismatch", "apply_step", "apply_steps",
    "tile", "fuse_producer_consumer", "step_to_json", "step_from_json",
]


class IllegalStep(ValueError):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"step {index}: {reason}")


class KeyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Interchange:
    path: Path
    order: tuple[int, ...]


@dataclass(frozen=True)
class Tile:
    path: Path
    size: int


@dataclass(frozen=True)
class MarkParallel:
    path: Path


@dataclass(frozen=True)
class MarkVectorize:
    path: Path


@dataclass(frozen=True)
class FuseProducerConsumer:
    first: Optional[int] = None  # None: fuse every eligible pair to a fixed point


@dataclass(frozen=True)
class ReplaceIdiom:
    name: str


Transform = Union[Interchange, Tile, MarkParallel, MarkVectorize, FuseProducerConsumer, ReplaceIdiom]

_NAMES = {Interchange: "interchange", Tile: "tile", MarkParallel: "parallel",
          MarkVectorize: "vectorize", FuseProducerConsumer: "fuse", ReplaceIdiom: "idiom"}


def step_to_json(step: Transform) -> dict:
    d: dict = {"op": _NAMES[type(step)]}
    for k, v in vars(step).items():
        d[k] = list(v) if isinstance(v, tuple) else v
    return d


def step_from_json(d: dict) -> Transform:
    if not isinstance(d, dict) or "op" not in d:
        raise ValueError(f"malformed step {d!r}")
    kinds = {v: k for k, v in _NAMES.items()}
    cls = kinds.get(d["op"])
    if cls is None:
        raise ValueError(f"unknown step op {d['op']!r}")
    fields = {k: v for k, v in d.items() if k != "op"}
    expected = set(cls.__dataclass_fields__)
    unknown = set(fields) - expected
    if unknown:
        raise ValueError(f"unknown field {sorted(unknown)[0]!r} in {d['op']} step")
    for k in ("path", "order"):
        if k in fields:
            fields[k] = tuple(int(x) for x in fields[k])
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ValueError(f"bad {d['op']} step: {exc}") from None


# ---------------------------------------------------------------------------
# Individual transforms
# ---------------------------------------------------------------------------


def _loop_at(program: Program, path: Path, index: int) -> Loop:
    try:
        node = node_at(program.top, path)
    except (IndexError, TypeError):
        raise IllegalStep(index, f"no node at path {list(path)}") from None
    if not isinstance(node, Loop):
        raise IllegalStep(index, f"node at path {list(path)} is not a loop")
    return node


def _set_loop(program: Program, path: Path, loop: Node) -> Program:
    return program.with_top(replace_at(program.top, path, (loop,)))


def interchange(program: Program, path: Path, order: Sequence[int], index: int = 0) -> Program:
    _loop_at(program, path, index)
    band = perfect_band(program, path)
    if sorted(order) != list(range(len(order))) or len(order) > len(band):
        raise IllegalStep(index, f"order {list(order)} is not a permutation of the perfect band")
    loops = [node_at(program.top, p) for p in band[:len(order)]]
    names = [loops[k].iterator for k in order]
    if not bounds_respect_order(loops, names):
        raise IllegalStep(index, "interchange breaks loop bounds")
    if not is_permutation_legal(program, path, names):
        raise IllegalStep(index, "interchange violates a dependence")
    return permute_band(program, path, names)


def _depends_on(loop: Loop, name: str) -> bool:
    return any(name in e.vars for e in loop.bound_exprs)


def tile(program: Program, path: Path, size: int, index: int = 0) -> Program:
    """Strip-mine the loop at ``path`` by ``size`` and hoist the tile loop as
    far up the perfect band as is legal."""
    if size < 2:
        raise IllegalStep(index, f"tile size {size} < 2")
    loop = _loop_at(program, path, index)
    if loop.upper_min or loop.upper_div != 1:
        raise IllegalStep(index, "loop is already strip-mined")
    taken = program_names(program)
    name = loop.iterator + "t"
    if name in taken:
        name = fresh_name(name, taken)
    t = AffineExpr.var(name)
    start = loop.lower + t * size
    point = replace(loop, lower=start, upper=start + size, upper_min=(loop.upper,))
    tile_loop = Loop(name, AffineExpr.constant(0), loop.upper - loop.lower, (point,),
                     upper_div=size, tile_of=loop.iterator)
    program = _set_loop(program, path, tile_loop)
    # hoist: swap the tile loop with its parent while legal
    while len(path) > 1:
        parent_path = path[:-1]
        parent = node_at(program.top, parent_path)
        if not isinstance(parent, Loop) or len(parent.body) != 1 or parent.tile_of:
            break
        tl = node_at(program.top, path)
        if _depends_on(tl, parent.iterator):
            break
        if not is_permutation_legal(program, parent_path, (tl.iterator, parent.iterator)):
            break
        program = permute_band(program, parent_path, (tl.iterator, parent.iterator))
        path = parent_path
    return program


def mark_parallel(program: Program, path: Path, index: int = 0) -> Program:
    loop = _loop_at(program, path, index)
    if carried_at(program, path):
        raise IllegalStep(index, f"carried dependence at loop {loop.iterator}")
    return _set_loop(program, path, replace(loop, mark="parallel"))


def mark_vectorize(program: Program, path: Path, index: int = 0) -> Program:
    loop = _loop_at(program, path, index)
    if any(isinstance(c, (Loop, IdiomCall)) for c in loop.body):
        raise IllegalStep(index, f"loop {loop.iterator} is not innermost")
    if carried_at(program, path):
        raise IllegalStep(index, f"carried dependence at loop {loop.iterator}")
    return _set_loop(program, path, replace(loop, mark="vector"))


def replace_idiom(program: Program, path: Path, name: str, index: int = 0) -> Program:
    node = _loop_at(program, path, index)
    found = detect_idiom(node)
    if found != name:
        raise IllegalStep(index, f"nest does not match idiom {name!r} (found {found!r})")
    return _set_loop(program, path, IdiomCall(name, idiom_args(node), node))


# ---------------------------------------------------------------------------
# Producer-consumer fusion
# ---------------------------------------------------------------------------


def _comp_ids(node: Node) -> set[str]:
    return {n.id for _, n, _ in walk((node,)) if isinstance(n, Computation)}


def _injective(acc, loops: Sequence[Loop]) -> bool:
    names = [l.iterator for l in loops]
    m = np.array([[e.coeff(n) for n in names] for e in acc.indices], dtype=float)
    return m.size > 0 and np.linalg.matrix_rank(m) == len(names)


def fusion_refusal(program: Program, k: int) -> Optional[str]:
    """Why top-level nests ``k`` and ``k+1`` cannot be fused one-to-one, or
    ``None`` if they can."""
    if k < 0 or k + 1 >= len(program.top):
        return f"no adjacent nest pair at {k}"
    a, b = program.top[k], program.top[k + 1]
    if not (isinstance(a, Loop) and isinstance(b, Loop)):
        return "both nests must be loops"
    if not a.same_domain(b):
        return "iteration domains differ"
    fused = _fused(program, k)
    ids_a, ids_b = _comp_ids(a), _comp_ids(b)
    edges = [e for e in dependence_edges(fused)
             if (e.src in ids_a and e.dst in ids_b) or (e.src in ids_b and e.dst in ids_a)]
    if not any(e.kind == "flow" for e in edges):
        return "no producer-consumer relation"
    comps = {n.id: (n, outer) for _, n, outer in walk(fused.top) if isinstance(n, Computation)}
    for e in edges:
        if e.src not in ids_a:
            return f"backward dependence {e}"
        if e.kind != "flow":
            return f"{e.kind} dependence on {e.array}"
        if e.loop_carried_at is not None:
            return f"loop-carried flow on {e.array}"
        (src, souter), (dst, _) = comps[e.src], comps[e.dst]
        if any(r.array == e.array and r.indices != src.write.indices for r in dst.reads):
            return f"flow on {e.array} is not one-to-one"
        if not _injective(src.write, souter):
            return f"write to {e.array} is not injective"
    return None


def _fused(program: Program, k: int) -> Program:
    a, b = program.top[k], program.top[k + 1]
    fused = fuse_loops(a, b, program_names(program))
    return program.with_top(program.top[:k] + (fused,) + program.top[k + 2:])


def fuse_producer_consumer(program: Program, first: Optional[int] = None,
                           index: int = 0) -> Program:
    """Fuse adjacent top-level nests linked by a one-to-one forward flow."""
    if first is not None:
        why = fusion_refusal(program, first)
        if why:
            raise IllegalStep(index, why)
        return _fused(program, first)
    changed = True
    while changed:
        changed = False
        for k in range(len(program.top) - 1):
            if fusion_refusal(program, k) is None:
                program = _fused(program, k)
                changed = True
                break
    return program


# ---------------------------------------------------------------------------
# Sequencing
# ---------------------------------------------------------------------------


def apply_step(program: Program, step: Transform, base: Path = (), index: int = 0) -> Program:
    if isinstance(step, FuseProducerConsumer):
        if base:
            raise IllegalStep(index, "fusion is only allowed in program-scoped recipes")
        return fuse_producer_consumer(program, step.first, index)
    if isinstance(step, ReplaceIdiom):
        return replace_idiom(program, base, step.name, index)
    path = base + tuple(step.path)
    if isinstance(step, Interchange):
        return interchange(program, path, step.order, index)
    if isinstance(step, Tile):
        return tile(program, path, step.size, index)
    if isinstance(step, MarkParallel):
        return mark_parallel(program, path, index)
    if isinstance(step, MarkVectorize):
        return mark_vectorize(program, path, index)
    raise IllegalStep(index, f"unknown step {step!r}")


def apply_steps(program: Program, steps: Sequence[Transform], base: Path = ()) -> Program:
    for k, step in enumerate(steps):
        program = apply_step(program, step, base, k)
    return program
