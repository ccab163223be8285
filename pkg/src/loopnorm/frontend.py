"""Parser and pretty printer for the ``.loop`` DSL.

Grammar (informal)::

    program := (param | array)* stmt*
    param   := "param" IDENT ("=" INT)? ";"
    array   := "array" IDENT "[" extent ("," extent)* "]" (":" ("int"|"float"))? ";"
    stmt    := mark* (loop | call) | (IDENT ":")? comp
    mark    := "@parallel" | "@vector" | "@tile" "(" IDENT ")"
    loop    := "for" IDENT "in" affine ".." upper ("step" INT)? "{" stmt* "}"
    upper   := affine | "ceildiv" "(" affine "," INT ")" | "min" "(" upper ("," affine)+ ")"
    call    := "call" IDENT "(" IDENT ("," IDENT)* ")" "{" loop "}"
    comp    := IDENT index ("=" | "+=" | "-=" | "*=") expr ";"
    index   := "[" affine ("," affine)* "]" | ("[" affine "]")+

Upper bounds are exclusive.  ``ceildiv``/``min`` bounds, marks and calls only
show up in transformed programs; hand-written kernels use plain affine bounds.
Comments run from ``#`` or ``//`` to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .ir import (Access, AffineExpr, ArrayDecl, Computation, Expr, IdiomCall, Index, Lit,
                 Loop, Node, Op, Param, Path, Program, Read, validate)

__all__ = ["SourceSpan", "ParseError", "parse", "parse_with_spans", "parse_file",
           "pretty_print", "format_expr"]


@dataclass(frozen=True)
class SourceSpan:
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}")


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*|//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<at>@[A-Za-z_]+)
  | (?P<op>\.\.|\+=|-=|\*=|[-+*/=;:,\[\](){}])
""", re.VERBOSE)

_KEYWORDS = {"param", "array", "for", "in", "call", "step", "min", "max", "ceildiv"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int
    end_line: int
    end_col: int


def _tokenize(text: str, file: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             SourceSpan(file, line, col, line, col + 1))
        s = m.group()
        nl = s.count("\n")
        end_line = line + nl
        end_col = len(s) - s.rfind("\n") if nl else col + len(s)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, s, line, col, end_line, end_col))
        line, col, pos = end_line, end_col, m.end()
    toks.append(_Tok("eof", "", line, col, line, col))
    return toks


class _Parser:
    def __init__(self, text: str, file: str):
        self.file = file
        self.toks = _tokenize(text, file)
        self.i = 0
        self.params: dict[str, Optional[int]] = {}
        self.arrays: dict[str, ArrayDecl] = {}
        self.spans: dict[Path, SourceSpan] = {}
        self.n_comps = 0

    # -- token helpers ----------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def span(self, a: _Tok, b: _Tok | None = None) -> SourceSpan:
        b = b or a
        return SourceSpan(self.file, a.line, a.col, b.end_line, b.end_col)

    def error(self, msg: str, tok: _Tok | None = None) -> ParseError:
        return ParseError(msg, self.span(tok or self.tok))

    def at(self, text: str, offset: int = 0) -> bool:
        t = self.toks[min(self.i + offset, len(self.toks) - 1)]
        return t.text == text and t.kind in ("op", "ident", "at")

    def next(self) -> _Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            got = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, got {got!r}")
        return self.next()

    def ident(self) -> _Tok:
        t = self.tok
        if t.kind != "ident" or t.text in _KEYWORDS:
            raise self.error(f"expected identifier, got {t.text or 'end of input'!r}")
        return self.next()

    def integer(self) -> int:
        neg = False
        if self.at("-"):
            self.next()
            neg = True
        t = self.tok
        if t.kind != "int":
            raise self.error(f"expected integer, got {t.text or 'end of input'!r}")
        self.next()
        return -int(t.text) if neg else int(t.text)

    # -- declarations -----------------------------------------------------
    def program(self) -> Program:
        while self.at("param") or self.at("array"):
            if self.at("param"):
                self.param()
            else:
                self.array()
        body = self.stmts((), [], top=True)
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        prog = Program(tuple(Param(n, d) for n, d in self.params.items()),
                       tuple(self.arrays.values()), tuple(body))
        diags = validate(prog)
        if diags:
            path = _diag_path(diags[0].path)
            span = self.spans.get(path, self.span(self.toks[0]))
            raise ParseError(str(diags[0].message), span)
        return prog

    def _declare(self, name_tok: _Tok) -> None:
        if name_tok.text in self.params or name_tok.text in self.arrays:
            raise self.error(f"duplicate declaration of {name_tok.text!r}", name_tok)

    def param(self) -> None:
        self.expect("param")
        name = self.ident()
        self._declare(name)
        default = None
        if self.at("="):
            self.next()
            default = self.integer()
        self.expect(";")
        self.params[name.text] = default

    def array(self) -> None:
        self.expect("array")
        name = self.ident()
        self._declare(name)
        dims: list[int | str] = []
        self.expect("[")
        while True:
            t = self.tok
            if t.kind == "int":
                self.next()
                if int(t.text) < 1:
                    raise self.error("array extent must be >= 1", t)
                dims.append(int(t.text))
            else:
                p = self.ident()
                if p.text not in self.params:
                    raise self.error(f"undeclared parameter {p.text!r}", p)
                dims.append(p.text)
            if self.at("]") and self.at("[", 1):
                self.next()
                self.next()
                continue
            if self.at(","):
                self.next()
                continue
            break
        self.expect("]")
        kind = "float"
        if self.at(":"):
            self.next()
            k = self.tok
            if k.text not in ("int", "float"):
                raise self.error("element kind must be 'int' or 'float'")
            self.next()
            kind = k.text
        self.expect(";")
        self.arrays[name.text] = ArrayDecl(name.text, tuple(dims), kind)

    # -- statements -------------------------------------------------------
    def stmts(self, path: Path, iters: list[str], top: bool = False) -> list[Node]:
        out: list[Node] = []
        while not (self.at("}") or self.tok.kind == "eof"):
            out.append(self.stmt(path + (len(out),), iters))
        return out

    def stmt(self, path: Path, iters: list[str]) -> Node:
        start = self.tok
        mark = tile_of = None
        while self.tok.kind == "at":
            t = self.next()
            if t.text in ("@parallel", "@vector"):
                mark = t.text[1:]
            elif t.text == "@tile":
                self.expect("(")
                tile_of = self.ident().text
                self.expect(")")
            else:
                raise self.error(f"unknown annotation {t.text!r}", t)
        if self.at("for"):
            node = self.loop(path, iters, mark, tile_of)
        elif self.at("call"):
            if mark or tile_of:
                raise self.error("annotations are only allowed on loops", start)
            node = self.call(path, iters)
        else:
            if mark or tile_of:
                raise self.error("annotations are only allowed on loops", start)
            node = self.comp(path, iters)
        self.spans[path] = self.span(start, self.toks[self.i - 1])
        return node

    def loop(self, path: Path, iters: list[str], mark, tile_of) -> Loop:
        self.expect("for")
        it = self.ident()
        if it.text in iters:
            raise self.error(f"iterator {it.text!r} shadows an enclosing iterator", it)
        if it.text in self.params or it.text in self.arrays:
            raise self.error(f"iterator {it.text!r} collides with a declared name", it)
        self.expect("in")
        lo = self.affine(iters)
        self.expect("..")
        hi, div, mins = self.upper(iters)
        if self.at("step"):
            s = self.next()
            if self.integer() != 1:
                raise self.error("only unit steps are supported", s)
        self.expect("{")
        body = self.stmts(path, iters + [it.text])
        self.expect("}")
        return Loop(it.text, lo, hi, tuple(body), tuple(mins), div, tile_of, mark)

    def upper(self, iters: list[str]) -> tuple[AffineExpr, int, list[AffineExpr]]:
        if self.at("min") and self.at("(", 1):
            self.next()
            self.next()
            hi, div, mins = self.upper(iters)
            while self.at(","):
                self.next()
                mins.append(self.affine(iters))
            self.expect(")")
            if not mins:
                raise self.error("min() needs at least two arguments")
            return hi, div, mins
        if self.at("ceildiv") and self.at("(", 1):
            self.next()
            self.next()
            hi = self.affine(iters)
            self.expect(",")
            t = self.tok
            div = self.integer()
            if div < 1:
                raise self.error("ceildiv divisor must be positive", t)
            self.expect(")")
            return hi, div, []
        return self.affine(iters), 1, []

    def call(self, path: Path, iters: list[str]) -> IdiomCall:
        self.expect("call")
        name = self.ident().text
        self.expect("(")
        args = [self.ident().text]
        while self.at(","):
            self.next()
            args.append(self.ident().text)
        self.expect(")")
        self.expect("{")
        start = self.tok
        ref = self.stmt(path + (0,), iters)
        if not isinstance(ref, Loop):
            raise self.error("call body must be a single loop nest", start)
        self.expect("}")
        return IdiomCall(name, tuple(args), ref)

    def comp(self, path: Path, iters: list[str]) -> Computation:
        label = None
        if self.tok.kind == "ident" and self.at(":", 1):
            label = self.next().text
            self.next()
        start = self.tok
        write = self.access(iters, "write")
        op = self.tok
        if op.text not in ("=", "+=", "-=", "*="):
            raise self.error(f"expected assignment operator, got {op.text or 'end of input'!r}")
        self.next()
        reads: list[Access] = []
        if op.text != "=":
            reads.append(Access(write.array, write.indices, "read"))
        rhs = self.expr(iters, reads)
        if op.text != "=":
            rhs = _fold(Op(op.text[0], (Read(0), rhs)))
        self.expect(";")
        cid = label or f"S{self.n_comps}"
        self.n_comps += 1
        del start
        return Computation(cid, write, tuple(reads), rhs)

    def access(self, iters: list[str], kind: str) -> Access:
        name = self.ident()
        decl = self.arrays.get(name.text)
        if decl is None:
            raise self.error(f"undeclared array {name.text!r}", name)
        idx: list[AffineExpr] = []
        self.expect("[")
        idx.append(self.affine(iters))
        while True:
            if self.at(","):
                self.next()
                idx.append(self.affine(iters))
            elif self.at("]") and self.at("[", 1):
                self.next()
                self.next()
                idx.append(self.affine(iters))
            else:
                break
        end = self.expect("]")
        if len(idx) != decl.rank:
            raise ParseError(f"rank mismatch: {name.text} has rank {decl.rank}, "
                             f"accessed with {len(idx)} indices", self.span(name, end))
        return Access(name.text, tuple(idx), kind)

    # -- affine expressions ------------------------------------------------
    def affine(self, iters: list[str]) -> AffineExpr:
        start = self.tok
        e = self._aff_sum(iters)
        if e is None:
            raise ParseError("non-affine index", self.span(start, self.toks[self.i - 1]))
        return e

    def _aff_sum(self, iters):
        e = self._aff_term(iters)
        while self.at("+") or self.at("-"):
            op = self.next().text
            rhs = self._aff_term(iters)
            if e is None or rhs is None:
                e = None
            else:
                e = e + rhs if op == "+" else e - rhs
        return e

    def _aff_term(self, iters):
        e = self._aff_unary(iters)
        while self.at("*") or self.at("/"):
            op = self.next()
            rhs = self._aff_unary(iters)
            if op.text == "/" or e is None or rhs is None:
                e = None
            elif e.is_constant():
                e = rhs * e.const
            elif rhs.is_constant():
                e = e * rhs.const
            else:
                e = None
        return e

    def _aff_unary(self, iters):
        if self.at("-"):
            self.next()
            e = self._aff_unary(iters)
            return None if e is None else -e
        t = self.tok
        if t.kind == "int":
            self.next()
            return AffineExpr.constant(int(t.text))
        if self.at("("):
            self.next()
            e = self._aff_sum(iters)
            self.expect(")")
            return e
        if t.kind == "ident" and t.text not in _KEYWORDS:
            self.next()
            if self.at("["):
                raise self.error("non-affine index (indirect access)", t)
            if t.text not in iters and t.text not in self.params:
                raise self.error(f"undeclared name {t.text!r}", t)
            return AffineExpr.var(t.text)
        raise self.error(f"unexpected {t.text or 'end of input'!r} in affine expression")

    # -- right-hand sides -----------------------------------------------------
    def expr(self, iters, reads) -> Expr:
        e = self._term(iters, reads)
        while self.at("+") or self.at("-"):
            op = self.next().text
            e = _fold(Op(op, (e, self._term(iters, reads))))
        return e

    def _term(self, iters, reads) -> Expr:
        e = self._unary(iters, reads)
        while self.at("*") or self.at("/"):
            op = self.next().text
            e = _fold(Op(op, (e, self._unary(iters, reads))))
        return e

    def _unary(self, iters, reads) -> Expr:
        if self.at("-"):
            self.next()
            e = self._unary(iters, reads)
            if isinstance(e, Lit):
                return Lit(-e.value)
            return _fold(Op("neg", (e,)))
        t = self.tok
        if t.kind == "int":
            self.next()
            return Lit(int(t.text))
        if t.kind == "float":
            self.next()
            return Lit(float(t.text))
        if self.at("("):
            self.next()
            e = self.expr(iters, reads)
            self.expect(")")
            return e
        if (self.at("min") or self.at("max")) and self.at("(", 1):
            fn = self.next().text
            self.next()
            args = [self.expr(iters, reads)]
            while self.at(","):
                self.next()
                args.append(self.expr(iters, reads))
            self.expect(")")
            if len(args) < 2:
                raise self.error(f"{fn}() needs at least two arguments", t)
            return Op(fn, tuple(args))
        if t.kind == "ident" and t.text not in _KEYWORDS:
            if self.at("[", 1):
                reads.append(self.access(iters, "read"))
                return Read(len(reads) - 1)
            self.next()
            if t.text in self.arrays:
                raise self.error(f"array {t.text!r} used without an index", t)
            if t.text not in iters and t.text not in self.params:
                raise self.error(f"undeclared name {t.text!r}", t)
            return Index(AffineExpr.var(t.text))
        raise self.error(f"unexpected {t.text or 'end of input'!r} in expression")


def _as_affine(e: Expr) -> Optional[AffineExpr]:
    if isinstance(e, Index):
        return e.expr
    if isinstance(e, Lit):
        return AffineExpr.constant(e.value) if isinstance(e.value, int) else None
    if isinstance(e, Op):
        args = [_as_affine(a) for a in e.args]
        if any(a is None for a in args):
            return None
        if e.op == "+":
            return args[0] + args[1]
        if e.op == "-":
            return args[0] - args[1]
        if e.op == "neg":
            return -args[0]
        if e.op == "*":
            a, b = args
            if a.is_constant():
                return b * a.const
            if b.is_constant():
                return a * b.const
    return None


def _fold(e: Op) -> Expr:
    """Collapse an integer-affine subtree that mentions a variable into one
    :class:`Index` leaf, so printing and re-parsing agree."""
    aff = _as_affine(e)
    if aff is not None and aff.vars:
        return Index(aff)
    return e


def _diag_path(text: str) -> Path:
    return tuple(int(k) for k in re.findall(r"\[(\d+)\]", text))


def parse_with_spans(text: str, file: str = "<input>") -> tuple[Program, dict[Path, SourceSpan]]:
    p = _Parser(text, file)
    prog = p.program()
    return prog, p.spans


def parse(text: str, file: str = "<input>") -> Program:
    """Parse DSL text into a validated :class:`Program`."""
    return parse_with_spans(text, file)[0]


def parse_file(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3}


def _affine_prec(a: AffineExpr) -> int:
    n = len(a.terms) + (1 if a.const else 0)
    if n > 1:
        return 1
    if a.terms:
        (_, c), = a.terms
        if c == 1:
            return 4
        return 3 if c == -1 else 2
    return 4 if a.const >= 0 else 3


def format_expr(e: Expr, reads: Sequence[Access]) -> str:
    return _fmt(e, reads)[0]


def _fmt(e: Expr, reads) -> tuple[str, int]:
    if isinstance(e, Lit):
        return repr(e.value), (4 if e.value >= 0 else 3)
    if isinstance(e, Read):
        return str(reads[e.slot]), 4
    if isinstance(e, Index):
        return str(e.expr), _affine_prec(e.expr)
    if e.op in ("min", "max"):
        return f"{e.op}({', '.join(_fmt(a, reads)[0] for a in e.args)})", 4
    if e.op == "neg":
        s, p = _fmt(e.args[0], reads)
        return f"-{s if p >= 3 else f'({s})'}", 3
    prec = _PREC[e.op]
    (ls, lp), (rs, rp) = _fmt(e.args[0], reads), _fmt(e.args[1], reads)
    if lp < prec:
        ls = f"({ls})"
    if rp <= prec:
        rs = f"({rs})"
    return f"{ls} {e.op} {rs}", prec


def _fmt_upper(loop: Loop) -> str:
    s = str(loop.upper)
    if loop.upper_div != 1:
        s = f"ceildiv({s}, {loop.upper_div})"
    if loop.upper_min:
        s = f"min({', '.join([s] + [str(m) for m in loop.upper_min])})"
    return s


def _fmt_comp(c: Computation) -> str:
    w = c.write
    e = c.expr
    if (isinstance(e, Op) and e.op in ("+", "-", "*") and e.args[0] == Read(0)
            and c.reads and c.reads[0].array == w.array and c.reads[0].indices == w.indices
            and _slots_in_order(e.args[1], start=1, total=len(c.reads))):
        return f"{w} {e.op}= {format_expr(e.args[1], c.reads)};"
    return f"{w} = {format_expr(e, c.reads)};"


def _slots_in_order(e: Expr, start: int, total: int) -> bool:
    slots = [leaf.slot for leaf in _leaves(e) if isinstance(leaf, Read)]
    return slots == list(range(start, total))


def _leaves(e: Expr):
    if isinstance(e, Op):
        for a in e.args:
            yield from _leaves(a)
    else:
        yield e


def pretty_print(program: Program, indent: str = "  ") -> str:
    """Render a program as DSL text; ``parse`` inverts it structurally."""
    lines: list[str] = []
    for p in program.parameters:
        lines.append(f"param {p.name}" + (f" = {p.default};" if p.default is not None else ";"))
    for a in program.arrays:
        lines.append(f"array {a.name}[{', '.join(str(d) for d in a.dims)}]: {a.kind};")
    if lines and program.top:
        lines.append("")
    counter = [0]

    def emit(node: Node, depth: int) -> None:
        pad = indent * depth
        if isinstance(node, Computation):
            label = "" if node.id == f"S{counter[0]}" else f"{node.id}: "
            counter[0] += 1
            lines.append(f"{pad}{label}{_fmt_comp(node)}")
        elif isinstance(node, IdiomCall):
            lines.append(f"{pad}call {node.idiom}({', '.join(node.args)}) {{")
            emit(node.reference, depth + 1)
            lines.append(f"{pad}}}")
        else:
            marks = ""
            if node.tile_of:
                marks += f"@tile({node.tile_of}) "
            if node.mark:
                marks += f"@{node.mark} "
            lines.append(f"{pad}{marks}for {node.iterator} in {node.lower}..{_fmt_upper(node)} {{")
            for c in node.body:
                emit(c, depth + 1)
            lines.append(f"{pad}}}")

    for n in program.top:
        emit(n, 0)
    return "\n".join(lines) + "\n"
