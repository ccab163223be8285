"""Deterministic C99 rendering of (possibly transformed) programs."""

from __future__ import annotations

from ..ir import AffineExpr, Computation, IdiomCall, Index, Lit, Loop, Node, Program, Read

__all__ = ["emit_c"]

_CBLAS = {
    "gemm": "void cblas_dgemm(CBLAS_LAYOUT, CBLAS_TRANSPOSE, CBLAS_TRANSPOSE, int M, int N, "
            "int K, double alpha, const double *A, int lda, const double *B, int ldb, "
            "double beta, double *C, int ldc);",
    "gemv": "void cblas_dgemv(CBLAS_LAYOUT, CBLAS_TRANSPOSE, int M, int N, double alpha, "
            "const double *A, int lda, const double *X, int incX, double beta, double *Y, "
            "int incY);",
    "dot": "double cblas_ddot(int N, const double *X, int incX, const double *Y, int incY);",
    "axpy": "void cblas_daxpy(int N, double alpha, const double *X, int incX, double *Y, "
            "int incY);",
    "syrk": "void cblas_dsyrk(CBLAS_LAYOUT, CBLAS_UPLO, CBLAS_TRANSPOSE, int N, int K, "
            "double alpha, const double *A, int lda, double beta, double *C, int ldc);",
}


def _aff(e: AffineExpr) -> str:
    parts = []
    for name, c in e.terms:
        term = name if abs(c) == 1 else f"{abs(c)} * {name}"
        parts.append(("- " if c < 0 else "+ ") + term)
    if e.const or not parts:
        parts.append(("- " if e.const < 0 else "+ ") + str(abs(e.const)))
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else "-" + s[2:]


def _access(acc) -> str:
    return acc.array + "".join(f"[{_aff(e)}]" for e in acc.indices)


def _expr(e, reads) -> str:
    if isinstance(e, Lit):
        return repr(e.value)
    if isinstance(e, Read):
        return _access(reads[e.slot])
    if isinstance(e, Index):
        return f"({_aff(e.expr)})"
    args = [_expr(a, reads) for a in e.args]
    if e.op == "neg":
        return f"(-{args[0]})"
    if e.op in ("min", "max"):
        return f"{e.op.upper()}({args[0]}, {args[1]})" if len(args) == 2 else \
            _nest_call(e.op.upper(), args)
    return f"({args[0]} {e.op} {args[1]})"


def _nest_call(fn: str, args: list[str]) -> str:
    out = args[0]
    for a in args[1:]:
        out = f"{fn}({out}, {a})"
    return out


def _upper(loop: Loop) -> str:
    s = _aff(loop.upper)
    if loop.upper_div != 1:
        s = f"CEILDIV({s}, {loop.upper_div})"
    for m in loop.upper_min:
        s = f"MIN({s}, {_aff(m)})"
    return s


def _param_decl(program: Program, a) -> str:
    ctype = "long" if a.kind == "int" else "double"
    if a.rank == 1:
        return f"{ctype} *restrict {a.name}"
    tail = "".join(f"[{d}]" for d in a.dims[1:])
    return f"{ctype} (*restrict {a.name}){tail}"


def emit_c(program: Program, name: str = "kernel") -> str:
    """C99 source for ``program`` as one function."""
    lines = ["#include <stddef.h>", "",
             "#define MIN(a, b) ((a) < (b) ? (a) : (b))",
             "#define MAX(a, b) ((a) > (b) ? (a) : (b))",
             "#define CEILDIV(a, b) (((a) + (b) - 1) / (b))", ""]
    idioms = sorted({n.idiom for n in _walk(program.top) if isinstance(n, IdiomCall)})
    for i in idioms:
        lines.append(f"/* {_CBLAS.get(i, 'library call ' + i)} */")
        lines.append(f"void loopnorm_{i}(void *args[]);")
    if idioms:
        lines.append("")
    params = [f"long {p}" for p in program.param_names]
    arrays = [_param_decl(program, a) for a in program.arrays]
    lines.append(f"void {name}({', '.join(params + arrays) or 'void'})")
    lines.append("{")

    def emit(node: Node, depth: int) -> None:
        pad = "  " * depth
        if isinstance(node, Computation):
            lines.append(f"{pad}{_access(node.write)} = {_expr(node.expr, node.reads)};")
        elif isinstance(node, IdiomCall):
            args = ", ".join(f"(void *){a}" for a in node.args)
            lines.append(f"{pad}loopnorm_{node.idiom}((void *[]){{{args}}});")
        else:
            if node.mark == "parallel":
                lines.append(f"{pad}#pragma omp parallel for")
            elif node.mark == "vector":
                lines.append(f"{pad}#pragma omp simd")
            it = node.iterator
            lines.append(f"{pad}for (long {it} = {_aff(node.lower)}; {it} < {_upper(node)}; {it}++) {{")
            for c in node.body:
                emit(c, depth + 1)
            lines.append(f"{pad}}}")

    for n in program.top:
        emit(n, 1)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _walk(body):
    for n in body:
        yield n
        if isinstance(n, Loop):
            yield from _walk(n.body)
