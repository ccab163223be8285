"""Six loop orders of GEMM normalize to one nest and one fingerprint."""

import itertools

from loopnorm.canonical import canonicalize_program
from loopnorm.frontend import parse, pretty_print
from loopnorm.normalize import normalize_program, stride
from loopnorm.recipes import detect_idiom

LOOPS = {"i": "for i in 0..N {", "j": "for j in 0..N {", "k": "for k in 0..N {"}


def gemm(order):
    head = " ".join(LOOPS[c] for c in order)
    return parse("param N = 16; array A[N, N]; array B[N, N]; array C[N, N];"
                 f"{head} C[i, j] += A[i, k] * B[k, j]; }} }} }}")


def main():
    print(f"{'order':6} {'stride':>8}  normalized fingerprint")
    for order in itertools.permutations("ijk"):
        p = gemm(order)
        out, report = normalize_program(p)
        fp = canonicalize_program(out).hex
        print(f"{''.join(order):6} {stride(p.top[0], p):8d}  {fp}")
    out, report = normalize_program(gemm("jki"))
    print()
    print(pretty_print(out))
    print("idiom:", detect_idiom(out.top[0]))
    print("candidates considered:", [(''.join(o), s) for o, s in report.bands[0].candidates])


if __name__ == "__main__":
    main()
