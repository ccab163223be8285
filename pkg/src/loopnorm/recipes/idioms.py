"""Structural detection of BLAS-style idioms in a single nest."""

from __future__ import annotations

from typing import Optional

from ..ir import Access, Computation, IdiomCall, Lit, Loop, Node, Op, Read, walk

__all__ = ["detect_idiom", "idiom_args", "IDIOMS"]

IDIOMS = ("gemm", "gemv", "dot", "axpy", "syrk")


def _band(nest: Node) -> Optional[tuple[list[Loop], Computation]]:
    """Loops and the single computation of a perfect nest."""
    if not isinstance(nest, Loop):
        return None
    loops = [nest]
    node = nest
    while len(node.body) == 1 and isinstance(node.body[0], Loop):
        node = node.body[0]
        loops.append(node)
    if len(node.body) != 1 or not isinstance(node.body[0], Computation):
        return None
    if any(l.upper_min or l.upper_div != 1 for l in loops):
        return None
    return loops, node.body[0]


def _factors(e) -> Optional[list]:
    """Leaves of a pure product tree, or None."""
    if isinstance(e, Op) and e.op == "*":
        left, right = _factors(e.args[0]), _factors(e.args[1])
        return None if left is None or right is None else left + right
    if isinstance(e, (Read, Lit)):
        return [e]
    return None


def _accumulation(comp: Computation) -> Optional[tuple[list[Access], int]]:
    """For ``W += prod`` return the non-scalar reads in the product and the
    number of scalar factors."""
    e = comp.expr
    if not (isinstance(e, Op) and e.op == "+"):
        return None
    for own, rest in ((e.args[0], e.args[1]), (e.args[1], e.args[0])):
        if isinstance(own, Read) and comp.reads[own.slot] == Access(
                comp.write.array, comp.write.indices, "read"):
            leaves = _factors(rest)
            if leaves is None:
                return None
            tensors, scalars = [], 0
            for leaf in leaves:
                if isinstance(leaf, Lit):
                    scalars += 1
                    continue
                acc = comp.reads[leaf.slot]
                if all(ix.is_constant() for ix in acc.indices):
                    scalars += 1
                else:
                    tensors.append(acc)
            return tensors, scalars
    return None


def _plain(acc: Access, iters: set[str]) -> Optional[tuple[str, ...]]:
    """Index vector as bare iterator names (coefficient 1, no offset)."""
    out = []
    for e in acc.indices:
        if e.const or len(e.terms) != 1 or e.terms[0][1] != 1 or e.terms[0][0] not in iters:
            return None
        out.append(e.terms[0][0])
    return tuple(out)


def _rectangular(loops: list[Loop]) -> bool:
    names = {l.iterator for l in loops}
    return not any(e.vars & names for l in loops for e in l.bound_exprs)


def detect_idiom(nest: Node) -> Optional[str]:
    """Name of the idiom ``nest`` implements, if any."""
    if isinstance(nest, IdiomCall):
        return nest.idiom
    found = _band(nest)
    if found is None:
        return None
    loops, comp = found
    names = [l.iterator for l in loops]
    iters = set(names)
    acc = _accumulation(comp)
    if acc is None:
        return None
    tensors, _ = acc
    w = _plain(comp.write, iters) if not all(e.is_constant() for e in comp.write.indices) else ()
    if w is None:
        return None
    idx = [_plain(t, iters) for t in tensors]
    if any(i is None for i in idx):
        return None
    if len(set(names)) != len(names) or len(set(w)) != len(w):
        return None
    reduced = iters - set(w)
    n = len(loops)
    if n == 3 and len(w) == 2 and len(tensors) == 2 and len(reduced) == 1:
        (k,), (a, b) = reduced, w
        shapes = [set(i) for i in idx]
        if tensors[0].array == tensors[1].array and all(len(i) == 2 for i in idx):
            if sorted(map(sorted, shapes)) == sorted(map(sorted, [{a, k}, {b, k}])):
                return "syrk"
        if not _rectangular(loops):
            return None
        if all(len(i) == 2 for i in idx) and sorted(map(sorted, shapes)) == sorted(
                map(sorted, [{a, k}, {k, b}])):
            return "gemm"
        return None
    if not _rectangular(loops):
        return None
    if n == 2 and len(w) == 1 and len(tensors) == 2 and len(reduced) == 1:
        (k,), (a,) = reduced, w
        ranks = sorted(len(i) for i in idx)
        if ranks == [1, 2]:
            mat = next(i for i in idx if len(i) == 2)
            vec = next(i for i in idx if len(i) == 1)
            if set(mat) == {a, k} and vec == (k,):
                return "gemv"
        return None
    if n == 1 and len(tensors) == 2 and not w and all(i == (names[0],) for i in idx):
        return "dot"
    if n == 1 and len(tensors) == 1 and w == (names[0],) and idx[0] == w \
            and tensors[0].array != comp.write.array:
        return "axpy"
    return None


def idiom_args(nest: Node) -> tuple[str, ...]:
    """Arrays of a nest in first-use order (write first)."""
    out: list[str] = []
    for _, node, _ in walk((nest,)):
        if isinstance(node, Computation):
            for acc in node.accesses:
                if acc.array not in out:
                    out.append(acc.array)
    return tuple(out)
