"""Name-abstracted canonical text and 64-bit fingerprints.

Canonical text is the DSL rendering of a program after renaming iterators to
``L0, L1, ...`` (pre-order), arrays to ``A0, A1, ...`` and parameters to
``P0, P1, ...`` (both by first use), and relabelling computations ``S0,
S1, ...``.  Literal constants are kept.  The fingerprint is FNV-1a 64 over the
UTF-8 bytes of that text.

Two key modes:

``exact``
    parameter values (defaults or explicit bindings) are part of the text.
``shape``
    parameter values are dropped and every array extent becomes ``?``, so
    one key covers all problem sizes of the same structure.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from ._hashing import fnv1a64
from .frontend import pretty_print
from .ir import (ArrayDecl, Computation, IdiomCall, Loop, Node, Param, Program,
                 alpha_normal, rename_program, walk)

__all__ = ["CanonicalForm", "canonicalize", "canonicalize_program", "match_key",
           "nest_program", "MODES"]

MODES = ("exact", "shape")


@dataclass(frozen=True)
class CanonicalForm:
    canonical_text: str
    shape: tuple[tuple[int | str, ...], ...]
    fingerprint: int
    mode: str = "exact"

    @property
    def hex(self) -> str:
        return f"{self.fingerprint:016x}"


def _param_order(program: Program) -> list[str]:
    order: list[str] = []

    def see(names):
        for n in names:
            if n in program.param_names and n not in order:
                order.append(n)

    for a in program.arrays:
        see(d for d in a.dims if isinstance(d, str))
    for _, node, _ in walk(program.top):
        if isinstance(node, Loop):
            for e in node.bound_exprs:
                see(sorted(e.vars))
        elif isinstance(node, Computation):
            for acc in node.accesses:
                for e in acc.indices:
                    see(sorted(e.vars))
    order.extend(p for p in program.param_names if p not in order)
    return order


def _relabel(body: Sequence[Node], counter: list[int]) -> tuple[Node, ...]:
    out = []
    for node in body:
        if isinstance(node, Computation):
            out.append(replace(node, id=f"S{counter[0]}"))
            counter[0] += 1
        elif isinstance(node, IdiomCall):
            out.append(replace(node, reference=_relabel((node.reference,), counter)[0]))
        else:
            out.append(node.with_body(_relabel(node.body, counter)))
    return tuple(out)


def _abstract(program: Program, mode: str, bindings: Mapping[str, int] | None) -> Program:
    if mode not in MODES:
        raise ValueError(f"unknown key mode {mode!r}; expected one of {MODES}")
    p = alpha_normal(program)
    # arrays are ordered by first use now; params follow the same rule
    order = _param_order(p)
    pmap = {name: f"P{k}" for k, name in enumerate(order)}
    values = p.bindings(bindings)
    params = tuple(Param(pmap[n], values.get(n) if mode == "exact" else None) for n in order)
    p = rename_program(p, pmap)
    arrays = tuple(
        ArrayDecl(a.name, tuple("?" if mode == "shape" else pmap.get(d, d) for d in a.dims),
                  a.kind)
        for a in p.arrays)
    return Program(params, arrays, _relabel(p.top, [0]))


def canonicalize_program(program: Program, mode: str = "exact",
                         bindings: Mapping[str, int] | None = None) -> CanonicalForm:
    """Canonical form of a whole program."""
    abstract = _abstract(program, mode, bindings)
    text = pretty_print(abstract)
    values = program.bindings(bindings)
    shape = tuple(tuple(d if isinstance(d, int) else values.get(d, d) for d in a.dims)
                  for a in alpha_normal(program).arrays)
    return CanonicalForm(text, shape, fnv1a64(text), mode)


def nest_program(program: Program, nest: Node) -> Program:
    """A program holding only ``nest`` plus the declarations it uses."""
    used_arrays: list[str] = []
    used_vars: set[str] = set()
    for _, node, _ in walk((nest,)):
        if isinstance(node, Computation):
            for acc in node.accesses:
                if acc.array not in used_arrays:
                    used_arrays.append(acc.array)
                for e in acc.indices:
                    used_vars |= e.vars
        elif isinstance(node, Loop):
            for e in node.bound_exprs:
                used_vars |= e.vars
        elif isinstance(node, IdiomCall):
            used_arrays.extend(a for a in node.args if a not in used_arrays)
    arrays = tuple(a for a in program.arrays if a.name in used_arrays)
    for a in arrays:
        used_vars |= {d for d in a.dims if isinstance(d, str)}
    params = tuple(p for p in program.parameters if p.name in used_vars)
    return Program(params, arrays, (nest,))


def canonicalize(nest: Node, program: Program, mode: str = "exact",
                 bindings: Mapping[str, int] | None = None) -> CanonicalForm:
    """Canonical form of one top-level nest of ``program``."""
    return canonicalize_program(nest_program(program, nest), mode, bindings)


def match_key(nest: Node, program: Program, mode: str = "shape",
              bindings: Mapping[str, int] | None = None) -> int:
    """Database key of a nest: its fingerprint in the given mode."""
    return canonicalize(nest, program, mode, bindings).fingerprint


def text_key(program: Program, nest: Optional[Node] = None) -> str:
    """Exact canonical text, used as a deterministic tie-breaker."""
    if nest is not None:
        program = nest_program(program, nest)
    return pretty_print(_abstract(program, "exact", None))
