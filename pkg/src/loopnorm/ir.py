"""Loop-nest intermediate representation.

A program is a list of symbolic parameters, array declarations and an ordered
body of loops and computations.  Every index and every bound is an
:class:`AffineExpr` over loop iterators and parameters.  All nodes are frozen
dataclasses; transformations build new trees instead of mutating old ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

__all__ = [
    "AffineExpr", "ArrayDecl", "Access", "Param", "Lit", "Read", "Index", "Op",
    "Computation", "Loop", "IdiomCall", "Program", "Diagnostic", "FormatError",
    "validate", "iterators_in_order", "structurally_equal", "serialize",
    "deserialize", "walk", "computations", "node_at", "replace_at",
    "loop_paths", "enclosing_loops", "rename_program", "program_names",
    "fresh_name", "fuse_loops", "FORMAT_VERSION",
]

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Affine expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineExpr:
    """Integer-linear expression ``sum(coeff * var) + const``.

    ``terms`` is kept sorted by variable name with zero coefficients removed,
    so dataclass equality is equality of the normalized forms.
    """

    terms: tuple[tuple[str, int], ...] = ()
    const: int = 0

    def __post_init__(self):
        merged: dict[str, int] = {}
        for name, c in self.terms:
            merged[name] = merged.get(name, 0) + int(c)
        object.__setattr__(
            self, "terms", tuple(sorted((n, c) for n, c in merged.items() if c != 0)))
        object.__setattr__(self, "const", int(self.const))

    @classmethod
    def of(cls, terms: Mapping[str, int] | None = None, const: int = 0) -> "AffineExpr":
        return cls(tuple((terms or {}).items()), const)

    @classmethod
    def var(cls, name: str, coeff: int = 1) -> "AffineExpr":
        return cls(((name, coeff),), 0)

    @classmethod
    def constant(cls, value: int) -> "AffineExpr":
        return cls((), value)

    @property
    def coeffs(self) -> dict[str, int]:
        return dict(self.terms)

    @property
    def vars(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.terms)

    def coeff(self, name: str) -> int:
        for n, c in self.terms:
            if n == name:
                return c
        return 0

    def is_constant(self) -> bool:
        return not self.terms

    def __add__(self, other: Union["AffineExpr", int]) -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const + other)
        return AffineExpr(self.terms + other.terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return self * -1

    def __sub__(self, other: Union["AffineExpr", int]) -> "AffineExpr":
        return self + (-other)

    def __rsub__(self, other: int) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, k: int) -> "AffineExpr":
        if not isinstance(k, int):
            return NotImplemented
        return AffineExpr(tuple((n, c * k) for n, c in self.terms), self.const * k)

    __rmul__ = __mul__

    def rename(self, mapping: Mapping[str, str]) -> "AffineExpr":
        if not any(n in mapping for n, _ in self.terms):
            return self
        return AffineExpr(tuple((mapping.get(n, n), c) for n, c in self.terms), self.const)

    def substitute(self, mapping: Mapping[str, "AffineExpr"]) -> "AffineExpr":
        out = AffineExpr.constant(self.const)
        for n, c in self.terms:
            out = out + (mapping[n] * c if n in mapping else AffineExpr.var(n, c))
        return out

    def evaluate(self, env: Mapping[str, int]) -> int:
        return self.const + sum(c * env[n] for n, c in self.terms)

    def __str__(self) -> str:
        out = ""
        for n, c in self.terms:
            body = n if abs(c) == 1 else f"{abs(c)}*{n}"
            out += ("-" if c < 0 else "+" if out else "") + body
        if self.const or not out:
            out += f"{self.const:+d}" if out else str(self.const)
        return out


# ---------------------------------------------------------------------------
# Declarations, accesses, expressions
# ---------------------------------------------------------------------------

Extent = Union[int, str]


@dataclass(frozen=True)
class Param:
    name: str
    default: Optional[int] = None


@dataclass(frozen=True)
class ArrayDecl:
    """Row-major array.  ``dims`` holds concrete extents or parameter names."""

    name: str
    dims: tuple[Extent, ...]
    kind: str = "float"

    @property
    def rank(self) -> int:
        return len(self.dims)

    def extents(self, bindings: Mapping[str, int]) -> tuple[int, ...]:
        return tuple(d if isinstance(d, int) else int(bindings[d]) for d in self.dims)


def row_major_strides(extents: Sequence[int]) -> tuple[int, ...]:
    strides = [1] * len(extents)
    for k in range(len(extents) - 2, -1, -1):
        strides[k] = strides[k + 1] * extents[k + 1]
    return tuple(strides)


@dataclass(frozen=True)
class Access:
    array: str
    indices: tuple[AffineExpr, ...]
    kind: str = "read"

    def rename(self, iters: Mapping[str, str], arrays: Mapping[str, str] | None = None) -> "Access":
        return Access((arrays or {}).get(self.array, self.array),
                      tuple(e.rename(iters) for e in self.indices), self.kind)

    def __str__(self) -> str:
        return f"{self.array}[{', '.join(str(e) for e in self.indices)}]"


@dataclass(frozen=True)
class Lit:
    value: Union[int, float]


@dataclass(frozen=True)
class Read:
    """Leaf referring to ``Computation.reads[slot]``."""

    slot: int


@dataclass(frozen=True)
class Index:
    """Leaf evaluating an affine expression of iterators/parameters."""

    expr: AffineExpr


@dataclass(frozen=True)
class Op:
    op: str  # + - * / neg min max
    args: tuple["Expr", ...]


Expr = Union[Lit, Read, Index, Op]

BINARY_OPS = ("+", "-", "*", "/")
CALL_OPS = ("min", "max")


def expr_leaves(expr: Expr) -> Iterator[Expr]:
    if isinstance(expr, Op):
        for a in expr.args:
            yield from expr_leaves(a)
    else:
        yield expr


def rename_expr(expr: Expr, iters: Mapping[str, str]) -> Expr:
    if isinstance(expr, Index):
        return Index(expr.expr.rename(iters))
    if isinstance(expr, Op):
        return Op(expr.op, tuple(rename_expr(a, iters) for a in expr.args))
    return expr


# ---------------------------------------------------------------------------
# Tree nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Computation:
    id: str
    write: Access
    reads: tuple[Access, ...]
    expr: Expr

    @property
    def accesses(self) -> tuple[Access, ...]:
        return (self.write,) + tuple(self.reads)

    def rename(self, iters: Mapping[str, str], arrays: Mapping[str, str] | None = None) -> "Computation":
        return Computation(self.id, self.write.rename(iters, arrays),
                           tuple(r.rename(iters, arrays) for r in self.reads),
                           rename_expr(self.expr, iters))


@dataclass(frozen=True)
class Loop:
    """Counted loop ``for iterator in lower .. upper`` with unit step.

    The effective exclusive upper bound is
    ``min(ceildiv(upper, upper_div), *upper_min)``.  ``upper_div`` and
    ``upper_min`` only appear after tiling; ``tile_of`` names the point loop
    a tile loop was strip-mined from.
    """

    iterator: str
    lower: AffineExpr
    upper: AffineExpr
    body: tuple["Node", ...]
    upper_min: tuple[AffineExpr, ...] = ()
    upper_div: int = 1
    tile_of: Optional[str] = None
    mark: Optional[str] = None  # "parallel" | "vector"

    @property
    def bound_exprs(self) -> tuple[AffineExpr, ...]:
        return (self.lower, self.upper) + self.upper_min

    def with_body(self, body: Sequence["Node"]) -> "Loop":
        return replace(self, body=tuple(body))

    def same_domain(self, other: "Loop") -> bool:
        """Bounds identical once ``other``'s iterator is identified with ours."""
        return (self.lower, self.upper, self.upper_min, self.upper_div) == (
            other.lower, other.upper, other.upper_min, other.upper_div)


@dataclass(frozen=True)
class IdiomCall:
    """Opaque library call replacing a matched nest.

    ``reference`` keeps the replaced nest; the interpreter executes it so the
    replacement can be checked for equivalence.
    """

    idiom: str
    args: tuple[str, ...]
    reference: Loop


Node = Union[Loop, Computation, IdiomCall]
Body = tuple[Node, ...]
Path = tuple[int, ...]


@dataclass(frozen=True)
class Program:
    parameters: tuple[Param, ...] = ()
    arrays: tuple[ArrayDecl, ...] = ()
    top: Body = ()

    def array(self, name: str) -> ArrayDecl:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def defaults(self) -> dict[str, int]:
        return {p.name: p.default for p in self.parameters if p.default is not None}

    def bindings(self, overrides: Mapping[str, int] | None = None) -> dict[str, int]:
        out = self.defaults()
        out.update(overrides or {})
        return out

    def with_top(self, top: Sequence[Node]) -> "Program":
        return replace(self, top=tuple(top))


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------


def children(node: Node) -> Body:
    if isinstance(node, Loop):
        return node.body
    if isinstance(node, IdiomCall):
        return (node.reference,)
    return ()


def walk(body: Sequence[Node], path: Path = (), outer: tuple[Loop, ...] = ()
         ) -> Iterator[tuple[Path, Node, tuple[Loop, ...]]]:
    """Pre-order walk yielding ``(path, node, enclosing loops)``.

    Idiom calls are transparent: their reference nest appears as child 0.
    """
    for k, node in enumerate(body):
        p = path + (k,)
        yield p, node, outer
        if isinstance(node, Loop):
            yield from walk(node.body, p, outer + (node,))
        elif isinstance(node, IdiomCall):
            yield from walk((node.reference,), p, outer)


def computations(body: Sequence[Node] | Node) -> list[Computation]:
    if not isinstance(body, (tuple, list)):
        body = (body,)
    return [n for _, n, _ in walk(body) if isinstance(n, Computation)]


def loop_paths(body: Sequence[Node]) -> list[Path]:
    return [p for p, n, _ in walk(body) if isinstance(n, Loop)]


def node_at(body: Sequence[Node], path: Path) -> Node:
    node: Node | None = None
    seq: Sequence[Node] = body
    for k in path:
        node = seq[k]
        seq = children(node)
    if node is None:
        raise IndexError("empty path")
    return node


def enclosing_loops(body: Sequence[Node], path: Path) -> tuple[Loop, ...]:
    """Loops strictly enclosing the node at ``path``."""
    out: list[Loop] = []
    seq: Sequence[Node] = body
    for k in path[:-1]:
        node = seq[k]
        if isinstance(node, Loop):
            out.append(node)
        seq = children(node)
    return tuple(out)


def replace_at(body: Sequence[Node], path: Path, new: Sequence[Node]) -> Body:
    """Replace the node at ``path`` by the sequence ``new`` (splicing)."""
    k, rest = path[0], path[1:]
    body = tuple(body)
    if not rest:
        return body[:k] + tuple(new) + body[k + 1:]
    node = body[k]
    if isinstance(node, Loop):
        node = node.with_body(replace_at(node.body, rest, new))
    elif isinstance(node, IdiomCall):
        (ref,) = replace_at((node.reference,), rest, new)
        node = replace(node, reference=ref)
    else:
        raise IndexError(f"path {path} descends into a computation")
    return body[:k] + (node,) + body[k + 1:]


def iterators_in_order(nest: Node | Sequence[Node]) -> list[str]:
    """Depth-first, left-to-right listing of loop iterators."""
    body = nest if isinstance(nest, (tuple, list)) else (nest,)
    return [n.iterator for _, n, _ in walk(body) if isinstance(n, Loop)]


def program_names(program: Program) -> set[str]:
    names = set(program.param_names) | {a.name for a in program.arrays}
    names |= set(iterators_in_order(program.top))
    return names


def fresh_name(base: str, taken: set[str]) -> str:
    k = 1
    while f"{base}_{k}" in taken:
        k += 1
    name = f"{base}_{k}"
    taken.add(name)
    return name


# ---------------------------------------------------------------------------
# Renaming
# ---------------------------------------------------------------------------


def rename_node(node: Node, iters: Mapping[str, str], arrays: Mapping[str, str] | None = None) -> Node:
    if isinstance(node, Computation):
        return node.rename(iters, arrays)
    if isinstance(node, IdiomCall):
        return IdiomCall(node.idiom, tuple((arrays or {}).get(a, a) for a in node.args),
                         rename_node(node.reference, iters, arrays))
    return Loop(
        iters.get(node.iterator, node.iterator),
        node.lower.rename(iters), node.upper.rename(iters),
        tuple(rename_node(c, iters, arrays) for c in node.body),
        tuple(e.rename(iters) for e in node.upper_min), node.upper_div,
        iters.get(node.tile_of, node.tile_of) if node.tile_of else None, node.mark)


def rename_program(program: Program, iters: Mapping[str, str] | None = None,
                   arrays: Mapping[str, str] | None = None) -> Program:
    iters = iters or {}
    arrays = arrays or {}
    decls = tuple(replace(a, name=arrays.get(a.name, a.name)) for a in program.arrays)
    return Program(program.parameters, decls,
                   tuple(rename_node(n, iters, arrays) for n in program.top))


def fuse_loops(a: Loop, b: Loop, taken: set[str]) -> Loop:
    """Concatenate ``b``'s body onto ``a``'s, identifying the two iterators.

    Inner loops of ``b`` whose names would clash with ``a``'s iterator or
    its inner loops are renamed with fresh names from ``taken``.
    """
    used = {a.iterator} | set(iterators_in_order(a.body))
    clash = {it: fresh_name(it, taken) for it in iterators_in_order(b.body) if it in used}
    b = rename_node(b, clash)
    b = rename_node(b, {b.iterator: a.iterator})
    return a.with_body(a.body + b.body)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _fmt_path(path: Path) -> str:
    return "top" + "".join(f"[{k}]" for k in path)


def validate(program: Program) -> list[Diagnostic]:
    """Return one diagnostic per violated invariant (empty list if valid)."""
    diags: list[Diagnostic] = []

    def bad(path: str, msg: str) -> None:
        diags.append(Diagnostic(path, msg))

    params = list(program.param_names)
    arrays = {a.name: a for a in program.arrays}
    seen: set[str] = set()
    for name in params + [a.name for a in program.arrays]:
        if name in seen:
            bad("decls", f"duplicate name {name!r}")
        seen.add(name)
    for a in program.arrays:
        if not a.dims:
            bad(f"array {a.name}", "array has no dimensions")
        for d in a.dims:
            if isinstance(d, int):
                if d < 1:
                    bad(f"array {a.name}", f"extent {d} < 1")
            elif d not in params:
                bad(f"array {a.name}", f"undeclared parameter {d!r} in extent")
        if a.kind not in ("int", "float"):
            bad(f"array {a.name}", f"unknown element kind {a.kind!r}")
    globals_ = set(params) | set(arrays)

    def check_affine(path: str, e: AffineExpr, scope: set[str], what: str) -> None:
        for v in e.vars:
            if v not in scope:
                bad(path, f"unbound variable {v!r} in {what}")

    def check_access(path: str, acc: Access, scope: set[str], kind: str) -> None:
        if not isinstance(acc, Access):
            bad(path, f"malformed {kind} access")
            return
        decl = arrays.get(acc.array)
        if decl is None:
            bad(path, f"undeclared array {acc.array!r}")
            return
        if len(acc.indices) != decl.rank:
            bad(path, f"rank mismatch: {acc.array} has rank {decl.rank}, "
                      f"accessed with {len(acc.indices)} indices")
        if acc.kind != kind:
            bad(path, f"{kind} access marked {acc.kind!r}")
        for e in acc.indices:
            check_affine(path, e, scope, f"index of {acc.array}")

    def visit(body: Sequence[Node], path: Path, iters: list[str]) -> None:
        scope = set(params) | set(iters)
        for k, node in enumerate(body):
            p = path + (k,)
            ps = _fmt_path(p)
            if isinstance(node, Loop):
                it = node.iterator
                if it in iters:
                    bad(ps, f"iterator {it!r} shadows an enclosing iterator")
                if it in globals_:
                    bad(ps, f"iterator {it!r} collides with a declared name")
                for e in node.bound_exprs:
                    check_affine(ps, e, scope, f"bounds of {it}")
                if node.upper_div < 1:
                    bad(ps, "upper_div must be >= 1")
                if node.mark not in (None, "parallel", "vector"):
                    bad(ps, f"unknown loop mark {node.mark!r}")
                visit(node.body, p, iters + [it])
            elif isinstance(node, Computation):
                w = node.write
                if isinstance(w, (tuple, list)):
                    if len(w) == 0:
                        bad(ps, "missing write")
                    else:
                        bad(ps, f"multiple writes ({len(w)}) in computation {node.id}")
                    writes = list(w)
                else:
                    writes = [w]
                for wa in writes:
                    check_access(ps, wa, scope, "write")
                for r in node.reads:
                    check_access(ps, r, scope, "read")
                for leaf in expr_leaves(node.expr):
                    if isinstance(leaf, Read):
                        if not 0 <= leaf.slot < len(node.reads):
                            bad(ps, f"expression references undeclared read #{leaf.slot}")
                    elif isinstance(leaf, Index):
                        check_affine(ps, leaf.expr, scope, "expression")
                    elif not isinstance(leaf, Lit):
                        bad(ps, f"invalid expression leaf {leaf!r}")
                for sub in _ops(node.expr):
                    if sub.op not in BINARY_OPS + CALL_OPS + ("neg",):
                        bad(ps, f"unknown operator {sub.op!r}")
            elif isinstance(node, IdiomCall):
                visit((node.reference,), p, iters)
            else:
                bad(ps, f"unknown node type {type(node).__name__}")

    visit(program.top, (), [])
    ids = [c.id for c in computations(program.top)]
    for cid in sorted({i for i in ids if ids.count(i) > 1}):
        bad("body", f"duplicate computation id {cid!r}")
    return diags


def _ops(expr: Expr) -> Iterator[Op]:
    if isinstance(expr, Op):
        yield expr
        for a in expr.args:
            yield from _ops(a)


# ---------------------------------------------------------------------------
# Structural equality
# ---------------------------------------------------------------------------


def _strip(node: Node) -> object:
    """Comparable form of a node, ignoring computation ids."""
    if isinstance(node, Computation):
        return ("comp", node.write, node.reads, node.expr)
    if isinstance(node, IdiomCall):
        return ("call", node.idiom, node.args, _strip(node.reference))
    return ("loop", node.iterator, node.lower, node.upper, node.upper_min,
            node.upper_div, node.tile_of, node.mark, tuple(_strip(c) for c in node.body))


def alpha_normal(program: Program) -> Program:
    """Rename iterators to ``L0, L1, ...`` in pre-order and arrays to
    ``A0, A1, ...`` by first use (unused arrays follow in declaration order)."""
    counter = [0]

    def scoped(node: Node) -> Node:
        # sibling loops may reuse a name, so rename per binding, not per name
        if isinstance(node, Loop):
            tmp = f"#{counter[0]}"
            counter[0] += 1
            node = rename_node(node, {node.iterator: tmp})
            return node.with_body(tuple(scoped(c) for c in node.body))
        if isinstance(node, IdiomCall):
            return replace(node, reference=scoped(node.reference))
        return node

    program = program.with_top(tuple(scoped(n) for n in program.top))
    iters = {f"#{k}": f"L{k}" for k in range(counter[0])}
    order: list[str] = []
    for _, node, _ in walk(program.top):
        if isinstance(node, Computation):
            for acc in node.accesses:
                if acc.array not in order:
                    order.append(acc.array)
        elif isinstance(node, IdiomCall):
            order.extend(a for a in node.args if a not in order)
    order.extend(a.name for a in program.arrays if a.name not in order)
    arrays = {a: f"A{k}" for k, a in enumerate(order)}
    renamed = rename_program(program, iters, arrays)
    decls = tuple(sorted(renamed.arrays, key=lambda a: int(a.name[1:])))
    return replace(renamed, arrays=decls)


def structurally_equal(a: Program, b: Program, rename: bool = False) -> bool:
    """Tree equality; with ``rename`` up to a bijective renaming of iterators
    and arrays.  Computation ids are labels and are not compared."""
    if rename:
        a, b = alpha_normal(a), alpha_normal(b)
    if set(a.parameters) != set(b.parameters):
        return False
    if {d.name: d for d in a.arrays} != {d.name: d for d in b.arrays}:
        return False
    return tuple(_strip(n) for n in a.top) == tuple(_strip(n) for n in b.top)


# ---------------------------------------------------------------------------
# JSON interchange format
# ---------------------------------------------------------------------------


class FormatError(ValueError):
    """Malformed interchange document.  ``offset`` is a UTF-8 byte offset into
    the text for syntax errors; ``where`` is a JSON path for semantic ones."""

    def __init__(self, message: str, offset: Optional[int] = None, where: str = ""):
        self.offset = offset
        self.where = where
        loc = f" at offset {offset}" if offset is not None else ""
        loc += f" at {where}" if where else ""
        super().__init__(f"{message}{loc}")


def affine_to_json(e: AffineExpr) -> dict:
    return {"terms": dict(e.terms), "const": e.const}


def access_to_json(a: Access) -> dict:
    return {"array": a.array, "index": [affine_to_json(e) for e in a.indices]}


def expr_to_json(e: Expr) -> dict:
    if isinstance(e, Lit):
        return {"lit": e.value}
    if isinstance(e, Read):
        return {"read": e.slot}
    if isinstance(e, Index):
        return {"index": affine_to_json(e.expr)}
    return {"op": e.op, "args": [expr_to_json(a) for a in e.args]}


def node_to_json(node: Node) -> dict:
    if isinstance(node, Computation):
        return {"comp": {"id": node.id, "write": access_to_json(node.write),
                         "reads": [access_to_json(r) for r in node.reads],
                         "expr": expr_to_json(node.expr)}}
    if isinstance(node, IdiomCall):
        return {"call": {"idiom": node.idiom, "args": list(node.args),
                         "reference": node_to_json(node.reference)}}
    d = {"iter": node.iterator, "lo": affine_to_json(node.lower),
         "hi": affine_to_json(node.upper), "body": [node_to_json(c) for c in node.body]}
    if node.upper_min:
        d["min"] = [affine_to_json(e) for e in node.upper_min]
    if node.upper_div != 1:
        d["div"] = node.upper_div
    if node.tile_of:
        d["tile_of"] = node.tile_of
    if node.mark:
        d["mark"] = node.mark
    return {"loop": d}


def program_to_json(program: Program) -> dict:
    return {
        "version": FORMAT_VERSION,
        "parameters": [{"name": p.name, **({"default": p.default} if p.default is not None else {})}
                       for p in program.parameters],
        "arrays": [{"name": a.name, "dims": list(a.dims), "kind": a.kind} for a in program.arrays],
        "body": [node_to_json(n) for n in program.top],
    }


def serialize(program: Program, indent: int | None = 1) -> str:
    return json.dumps(program_to_json(program), indent=indent)


class _Reader:
    """Decodes the parsed JSON tree, reporting paths on semantic errors."""

    def obj(self, d, where: str, required: Iterable[str], optional: Iterable[str] = ()) -> dict:
        if not isinstance(d, dict):
            raise FormatError("expected an object", where=where)
        required = tuple(required)
        allowed = set(required) | set(optional)
        for k in d:
            if k not in allowed:
                raise FormatError(f"unknown field {k!r}", where=where)
        for k in required:
            if k not in d:
                raise FormatError(f"missing field {k!r}", where=where)
        return d

    def int_(self, v, where: str) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise FormatError("expected an integer", where=where)
        return v

    def str_(self, v, where: str) -> str:
        if not isinstance(v, str):
            raise FormatError("expected a string", where=where)
        return v

    def list_(self, v, where: str) -> list:
        if not isinstance(v, list):
            raise FormatError("expected a list", where=where)
        return v

    def affine(self, d, where: str) -> AffineExpr:
        d = self.obj(d, where, ("terms", "const"))
        terms = d["terms"]
        if not isinstance(terms, dict):
            raise FormatError("expected an object", where=where + ".terms")
        return AffineExpr(tuple((self.str_(k, where), self.int_(v, f"{where}.terms.{k}"))
                                for k, v in terms.items()), self.int_(d["const"], where + ".const"))

    def access(self, d, where: str, kind: str) -> Access:
        d = self.obj(d, where, ("array", "index"))
        idx = self.list_(d["index"], where + ".index")
        return Access(self.str_(d["array"], where + ".array"),
                      tuple(self.affine(e, f"{where}.index[{k}]") for k, e in enumerate(idx)), kind)

    def expr(self, d, where: str) -> Expr:
        if not isinstance(d, dict) or len(d) == 0:
            raise FormatError("expected an expression object", where=where)
        if "lit" in d:
            self.obj(d, where, ("lit",))
            v = d["lit"]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise FormatError("literal must be a number", where=where)
            return Lit(v)
        if "read" in d:
            self.obj(d, where, ("read",))
            return Read(self.int_(d["read"], where + ".read"))
        if "index" in d:
            self.obj(d, where, ("index",))
            return Index(self.affine(d["index"], where + ".index"))
        self.obj(d, where, ("op", "args"))
        args = self.list_(d["args"], where + ".args")
        return Op(self.str_(d["op"], where + ".op"),
                  tuple(self.expr(a, f"{where}.args[{k}]") for k, a in enumerate(args)))

    def node(self, d, where: str) -> Node:
        if not isinstance(d, dict) or len(d) != 1:
            raise FormatError("expected a single-key node object", where=where)
        (tag, v), = d.items()
        where = f"{where}.{tag}"
        if tag == "comp":
            v = self.obj(v, where, ("id", "write", "reads", "expr"))
            w = v["write"]
            if isinstance(w, list):
                ws = tuple(self.access(a, f"{where}.write[{k}]", "write") for k, a in enumerate(w))
                write = ws[0] if len(ws) == 1 else ws
            else:
                write = self.access(w, where + ".write", "write")
            reads = tuple(self.access(r, f"{where}.reads[{k}]", "read")
                          for k, r in enumerate(self.list_(v["reads"], where + ".reads")))
            return Computation(self.str_(v["id"], where + ".id"), write, reads,
                               self.expr(v["expr"], where + ".expr"))
        if tag == "loop":
            v = self.obj(v, where, ("iter", "lo", "hi", "body"), ("min", "div", "tile_of", "mark"))
            body = tuple(self.node(c, f"{where}.body[{k}]")
                         for k, c in enumerate(self.list_(v["body"], where + ".body")))
            return Loop(self.str_(v["iter"], where + ".iter"), self.affine(v["lo"], where + ".lo"),
                        self.affine(v["hi"], where + ".hi"), body,
                        tuple(self.affine(e, f"{where}.min[{k}]")
                              for k, e in enumerate(self.list_(v.get("min", []), where + ".min"))),
                        self.int_(v.get("div", 1), where + ".div"),
                        self.str_(v["tile_of"], where + ".tile_of") if "tile_of" in v else None,
                        self.str_(v["mark"], where + ".mark") if "mark" in v else None)
        if tag == "call":
            v = self.obj(v, where, ("idiom", "args", "reference"))
            ref = self.node(v["reference"], where + ".reference")
            if not isinstance(ref, Loop):
                raise FormatError("idiom reference must be a loop", where=where)
            return IdiomCall(self.str_(v["idiom"], where + ".idiom"),
                             tuple(self.str_(a, where + ".args")
                                   for a in self.list_(v["args"], where + ".args")), ref)
        raise FormatError(f"unknown field {tag!r}", where=where.rsplit(".", 1)[0])

    def program(self, d) -> Program:
        d = self.obj(d, "$", ("version", "parameters", "arrays", "body"))
        if d["version"] != FORMAT_VERSION:
            raise FormatError(f"unsupported version {d['version']!r}", where="$.version")
        params = []
        for k, p in enumerate(self.list_(d["parameters"], "$.parameters")):
            p = self.obj(p, f"$.parameters[{k}]", ("name",), ("default",))
            default = p.get("default")
            params.append(Param(self.str_(p["name"], f"$.parameters[{k}].name"),
                                None if default is None else self.int_(default, f"$.parameters[{k}]")))
        arrays = []
        for k, a in enumerate(self.list_(d["arrays"], "$.arrays")):
            w = f"$.arrays[{k}]"
            a = self.obj(a, w, ("name", "dims"), ("kind",))
            dims = []
            for j, e in enumerate(self.list_(a["dims"], w + ".dims")):
                if isinstance(e, str):
                    dims.append(e)
                else:
                    dims.append(self.int_(e, f"{w}.dims[{j}]"))
            arrays.append(ArrayDecl(self.str_(a["name"], w + ".name"), tuple(dims),
                                    self.str_(a.get("kind", "float"), w + ".kind")))
        body = tuple(self.node(n, f"$.body[{k}]")
                     for k, n in enumerate(self.list_(d["body"], "$.body")))
        return Program(tuple(params), tuple(arrays), body)


def program_from_json(data) -> Program:
    return _Reader().program(data)


def deserialize(text: str) -> Program:
    """Parse an interchange document; raises :class:`FormatError`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise FormatError(exc.msg, offset=offset) from None
    return program_from_json(data)
