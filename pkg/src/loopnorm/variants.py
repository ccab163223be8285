"""Random semantically equivalent variants of a program.

A variant is the result of 1 to 5 random moves, each checked for legality:

* permuting a perfect band (legal per the dependence analysis),
* fusing two adjacent sibling loops with identical bounds when no
  dependence would run from the second body back into the first,
* renaming a loop iterator.

Arrays keep their names because interpreter inputs are derived from them.
"""

from __future__ import annotations

import random
from typing import Optional

from .deps import bounds_respect_order, dependence_edges, is_permutation_legal, perfect_band
from .ir import (Computation, Loop, Path, Program, fresh_name, fuse_loops, node_at,
                 program_names, rename_node, replace_at, walk)
from .normalize import permute_band

__all__ = ["generate", "fuse_siblings", "fusion_is_legal", "MOVES"]

MOVES = ("permute", "fuse", "rename")


def _ids(node) -> set[str]:
    return {n.id for _, n, _ in walk((node,)) if isinstance(n, Computation)}


def _body_at(program: Program, scope: Path):
    return program.top if not scope else node_at(program.top, scope).body


def fuse_siblings(program: Program, path: Path) -> Program:
    """Merge the loop at ``path`` with its next sibling (same bounds)."""
    a = node_at(program.top, path)
    b = node_at(program.top, path[:-1] + (path[-1] + 1,))
    fused = fuse_loops(a, b, program_names(program))
    body = _body_at(program, path[:-1])
    k = path[-1]
    new_body = tuple(body[:k]) + (fused,) + tuple(body[k + 2:])
    if not path[:-1]:
        return program.with_top(new_body)
    parent = node_at(program.top, path[:-1]).with_body(new_body)
    return program.with_top(replace_at(program.top, path[:-1], (parent,)))


def fusion_is_legal(program: Program, path: Path) -> Optional[Program]:
    """The fused program if fusing ``path`` with its next sibling keeps every
    dependence direction, else ``None``."""
    body = _body_at(program, path[:-1])
    k = path[-1]
    if k + 1 >= len(body):
        return None
    a, b = body[k], body[k + 1]
    if not (isinstance(a, Loop) and isinstance(b, Loop)) or not a.same_domain(b):
        return None
    if a.tile_of or b.tile_of:
        return None
    fused = fuse_siblings(program, path)
    ids_a, ids_b = _ids(a), _ids(b)
    for e in dependence_edges(fused):
        if e.src in ids_b and e.dst in ids_a:
            return None
    return fused


def _permute_moves(program: Program):
    for path, node, _ in walk(program.top):
        if isinstance(node, Loop) and len(perfect_band(program, path)) >= 2:
            yield path


def _fuse_moves(program: Program):
    scopes = [()] + [p for p, n, _ in walk(program.top) if isinstance(n, Loop)]
    for scope in scopes:
        body = _body_at(program, scope)
        for k in range(len(body) - 1):
            if isinstance(body[k], Loop) and isinstance(body[k + 1], Loop) \
                    and body[k].same_domain(body[k + 1]):
                yield scope + (k,)


def _try_permute(program: Program, rng: random.Random) -> Optional[Program]:
    paths = list(_permute_moves(program))
    if not paths:
        return None
    path = rng.choice(paths)
    band = perfect_band(program, path)
    loops = [node_at(program.top, p) for p in band]
    order = [l.iterator for l in loops]
    rng.shuffle(order)
    if not bounds_respect_order(loops, order) or not is_permutation_legal(program, path, order):
        return None
    return permute_band(program, path, order)


def _try_fuse(program: Program, rng: random.Random) -> Optional[Program]:
    paths = list(_fuse_moves(program))
    if not paths:
        return None
    return fusion_is_legal(program, rng.choice(paths))


def _try_rename(program: Program, rng: random.Random) -> Optional[Program]:
    loops = [n.iterator for _, n, _ in walk(program.top) if isinstance(n, Loop)]
    if not loops:
        return None
    old = rng.choice(loops)
    taken = program_names(program)
    new = fresh_name("v", taken)
    return program.with_top(tuple(rename_node(n, {old: new}) for n in program.top))


_TRY = {"permute": _try_permute, "fuse": _try_fuse, "rename": _try_rename}


def generate(program: Program, seed: int, count: int) -> list[Program]:
    """``count`` variants of ``program``; deterministic for a given seed."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        p = program
        for _ in range(rng.randint(1, 5)):
            move = rng.choice(MOVES)
            nxt = _TRY[move](p, rng)
            if nxt is not None:
                p = nxt
        out.append(p)
    return out
