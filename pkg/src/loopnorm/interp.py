"""Reference interpreter: the ground truth for every equivalence claim.

Programs are translated to straight Python source (one nested ``for`` per
loop, explicit bounds checks per access) and executed on flat lists.

Input buffers are a pure function of ``(seed, array name, flat index)``::

    base  = splitmix64(seed mod 2**64) XOR fnv1a64(utf8(name))
    z[k]  = splitmix64((base + k) mod 2**64)
    int   : z[k] mod 19 - 9
    float : (z[k] >> 11) * 2**-53

Integer mode is exact two's-complement 64-bit arithmetic (wrap on every
store and before ``min``/``max``); float mode is IEEE binary64.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ._hashing import MASK64, fnv1a64, splitmix64, splitmix64_array
from .domain import env_cap
from .ir import (AffineExpr, Computation, Expr, IdiomCall, Index, Lit, Loop, Node,
                 Program, Read, row_major_strides)

__all__ = ["ExecutionConfig", "InterpError", "Mismatch", "Verdict", "run", "equivalent",
           "initial_buffer", "digest", "default_iteration_cap"]

DEFAULT_ITER_CAP = 10 ** 7


def default_iteration_cap() -> int:
    return env_cap(DEFAULT_ITER_CAP)


class InterpError(RuntimeError):
    """Execution failure: iteration cap, integer division, out-of-bounds."""


@dataclass(frozen=True)
class ExecutionConfig:
    bindings: Mapping[str, int] = field(default_factory=dict)
    mode: str = "int"
    seed: int = 0
    iteration_cap: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("int", "float"):
            raise ValueError(f"mode must be 'int' or 'float', not {self.mode!r}")
        object.__setattr__(self, "bindings", dict(self.bindings))

    def cap(self) -> int:
        return self.iteration_cap if self.iteration_cap is not None else default_iteration_cap()


def initial_buffer(name: str, size: int, seed: int, mode: str, kind: str = "float") -> np.ndarray:
    base = splitmix64(seed & MASK64) ^ fnv1a64(name)
    k = np.arange(size, dtype=np.uint64)
    z = splitmix64_array(k + np.uint64(base))
    if mode == "int" or kind == "int":
        return (z % np.uint64(19)).astype(np.int64) - 9
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


# ---------------------------------------------------------------------------
# Code generation
# ---------------------------------------------------------------------------

_WRAP = "((({}) + 9223372036854775808) & 18446744073709551615) - 9223372036854775808"


class _Gen:
    def __init__(self, program: Program, bindings: Mapping[str, int], mode: str):
        self.program = program
        self.bindings = bindings
        self.mode = mode
        self.lines: list[str] = []
        self.extents = {a.name: a.extents(bindings) for a in program.arrays}
        self.kinds = {a.name: a.kind for a in program.arrays}

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("    " * depth + text)

    def aff(self, e: AffineExpr) -> str:
        parts = [f"{c}*v_{n}" if c != 1 else f"v_{n}" for n, c in e.terms]
        if e.const or not parts:
            parts.append(str(e.const))
        return "(" + " + ".join(parts) + ")"

    def upper(self, loop: Loop) -> str:
        s = self.aff(loop.upper)
        if loop.upper_div != 1:
            s = f"-((-{s}) // {loop.upper_div})"
        if loop.upper_min:
            s = f"min({s}, {', '.join(self.aff(m) for m in loop.upper_min)})"
        return s

    def expr(self, e: Expr, comp: Computation) -> str:
        if isinstance(e, Lit):
            if self.mode == "int" and not isinstance(e.value, int):
                raise InterpError(f"{comp.id}: float literal {e.value!r} in integer mode")
            return repr(e.value)
        if isinstance(e, Read):
            return f"_r{e.slot}"
        if isinstance(e, Index):
            return self.aff(e.expr)
        args = [self.expr(a, comp) for a in e.args]
        if e.op == "neg":
            return f"(-{args[0]})"
        if e.op in ("min", "max"):
            if self.mode == "int":
                args = [_WRAP.format(a) for a in args]
            return f"{e.op}({', '.join(args)})"
        if e.op == "/":
            if self.mode == "int":
                raise InterpError(f"{comp.id}: division in integer mode")
            return f"_div({args[0]}, {args[1]})"
        return f"({args[0]} {e.op} {args[1]})"

    def flat(self, acc, comp: Computation, iters: Sequence[str], depth: int, var: str) -> None:
        ext = self.extents[acc.array]
        strides = row_major_strides(ext)
        idx = [self.aff(e) for e in acc.indices]
        for k, (s, n) in enumerate(zip(idx, ext)):
            self.emit(depth, f"_x{k} = {s}")
        cond = " and ".join(f"0 <= _x{k} < {n}" for k, n in enumerate(ext))
        it_tuple = "(" + "".join(f"v_{i}, " for i in iters) + ")"
        names = repr(tuple(iters))
        self.emit(depth, f"if not ({cond}):")
        self.emit(depth + 1, f"_oob({comp.id!r}, {acc.array!r}, {names}, {it_tuple}, "
                             f"({''.join(f'_x{k}, ' for k in range(len(ext)))}))")
        self.emit(depth, f"{var} = " + (" + ".join(f"{st}*_x{k}" for k, st in enumerate(strides))))

    def node(self, node: Node, depth: int, iters: list[str]) -> None:
        if isinstance(node, IdiomCall):
            self.node(node.reference, depth, iters)
        elif isinstance(node, Loop):
            it = node.iterator
            self.emit(depth, f"for v_{it} in range({self.aff(node.lower)}, {self.upper(node)}):")
            if not node.body:
                self.emit(depth + 1, "pass")
            for c in node.body:
                self.node(c, depth + 1, iters + [it])
        else:
            c = node
            self.emit(depth, "_n += 1")
            self.emit(depth, "if _n > _cap:")
            self.emit(depth + 1, "_cap_exceeded(_cap)")
            for k, r in enumerate(c.reads):
                self.flat(r, c, iters, depth, "_f")
                self.emit(depth, f"_r{k} = a_{r.array}[_f]")
            value = self.expr(c.expr, c)
            self.flat(c.write, c, iters, depth, "_f")
            if self.mode == "int" or self.kinds[c.write.array] == "int":
                if self.mode == "float":
                    value = f"int({value})"
                value = _WRAP.format(value)
            self.emit(depth, f"a_{c.write.array}[_f] = {value}")

    def source(self) -> str:
        self.emit(0, "def _kernel(_bufs, _cap):")
        for name, v in self.bindings.items():
            self.emit(1, f"v_{name} = {int(v)}")
        for a in self.program.arrays:
            self.emit(1, f"a_{a.name} = _bufs[{a.name!r}]")
        self.emit(1, "_n = 0")
        for n in self.program.top:
            self.node(n, 1, [])
        self.emit(1, "return _n")
        return "\n".join(self.lines) + "\n"


def _oob(comp_id, array, names, values, index):
    it = ", ".join(f"{n}={v}" for n, v in zip(names, values))
    raise InterpError(f"out-of-bounds access {array}{list(index)} in computation "
                      f"{comp_id} at iteration ({it})")


def _cap_exceeded(cap):
    raise InterpError(f"iteration cap of {cap} exceeded")


def _div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


@functools.lru_cache(maxsize=256)
def _compile(program: Program, bindings: tuple[tuple[str, int], ...], mode: str):
    gen = _Gen(program, dict(bindings), mode)
    src = gen.source()
    env = {"_oob": _oob, "_cap_exceeded": _cap_exceeded, "_div": _div}
    exec(compile(src, "<loopnorm-kernel>", "exec"), env)
    return env["_kernel"]


def _resolve(program: Program, config: ExecutionConfig) -> dict[str, int]:
    bindings = program.bindings(config.bindings)
    missing = [p for p in program.param_names if p not in bindings]
    if missing:
        raise InterpError(f"unbound parameters: {', '.join(missing)}")
    for a in program.arrays:
        if any(e < 1 for e in a.extents(bindings)):
            raise InterpError(f"array {a.name} has a non-positive extent under {bindings}")
    return {p: bindings[p] for p in program.param_names}


def run(program: Program, config: ExecutionConfig = ExecutionConfig()) -> dict[str, np.ndarray]:
    """Execute ``program``; returns every array as a flat buffer."""
    bindings = _resolve(program, config)
    kernel = _compile(program, tuple(sorted(bindings.items())), config.mode)
    bufs = {}
    for a in program.arrays:
        size = int(np.prod(a.extents(bindings)))
        bufs[a.name] = initial_buffer(a.name, size, config.seed, config.mode, a.kind).tolist()
    kernel(bufs, config.cap())
    out = {}
    for a in program.arrays:
        dtype = np.int64 if (config.mode == "int" or a.kind == "int") else np.float64
        out[a.name] = np.array(bufs[a.name], dtype=dtype)
    return out


def digest(buffers: Mapping[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(buffers):
        h.update(name.encode())
        h.update(np.ascontiguousarray(buffers[name]).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Equivalence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mismatch:
    array: str
    index: int
    left: float
    right: float
    config: ExecutionConfig

    def __str__(self) -> str:
        return (f"{self.array}[{self.index}]: {self.left!r} != {self.right!r} "
                f"(mode={self.config.mode}, seed={self.config.seed})")


@dataclass(frozen=True)
class Verdict:
    equivalent: bool
    mismatch: Optional[Mismatch] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.equivalent


FLOAT_RTOL = 1e-10


def _compare(a: np.ndarray, b: np.ndarray, mode: str) -> Optional[int]:
    if mode == "int" or a.dtype.kind == "i":
        bad = np.nonzero(a != b)[0]
    else:
        scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
        same = (np.abs(a - b) <= FLOAT_RTOL * scale) | (a == b) | (np.isnan(a) & np.isnan(b))
        bad = np.nonzero(~same)[0]
    return int(bad[0]) if bad.size else None


def equivalent(p1: Program, p2: Program, configs: Sequence[ExecutionConfig]) -> Verdict:
    """Compare final buffers under every config: bit-exact in integer mode,
    relative error <= 1e-10 in float mode."""
    names1 = {a.name: a for a in p1.arrays}
    names2 = {a.name: a for a in p2.arrays}
    if set(names1) != set(names2) or set(p1.param_names) != set(p2.param_names):
        return Verdict(False, None, "programs declare different arrays or parameters")
    for cfg in configs:
        r1, r2 = run(p1, cfg), run(p2, cfg)
        for name in sorted(r1):
            if r1[name].shape != r2[name].shape:
                return Verdict(False, None, f"array {name} has different sizes")
            k = _compare(r1[name], r2[name], cfg.mode)
            if k is not None:
                m = Mismatch(name, k, r1[name][k].item(), r2[name][k].item(), cfg)
                return Verdict(False, m, str(m))
    return Verdict(True)
