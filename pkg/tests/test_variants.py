import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture, gemm
from loopnorm import corpus
from loopnorm.canonical import canonicalize_program
from loopnorm.frontend import parse, pretty_print
from loopnorm.interp import ExecutionConfig, equivalent
from loopnorm.ir import Loop, structurally_equal, validate, walk
from loopnorm.normalize import normalize_program
from loopnorm.variants import MOVES, fuse_siblings, fusion_is_legal, generate

CONFIGS = [ExecutionConfig(seed=s) for s in range(3)]


def fingerprint(p):
    return canonicalize_program(normalize_program(p)[0]).fingerprint


def test_gemm_variants_are_equivalent_and_converge():
    p = gemm()
    variants = generate(p, seed=1, count=5)
    assert len(variants) == 5
    for v in variants:
        assert validate(v) == []
        assert equivalent(p, v, CONFIGS)
        assert fingerprint(v) == fingerprint(p)


def test_generation_is_deterministic():
    p = corpus.load("2mm")
    a = [pretty_print(v) for v in generate(p, 7, 6)]
    b = [pretty_print(v) for v in generate(p, 7, 6)]
    assert a == b
    assert a != [pretty_print(v) for v in generate(p, 8, 6)]


def test_serial_nest_only_admits_renaming():
    p = parse("param N = 8; array A[N, N];"
              "for i in 1..N { for j in 0..N-1 { A[i, j] = A[i-1, j+1] + 1; } }")
    for v in generate(p, 3, 10):
        assert structurally_equal(v, p, rename=True)


def test_split_nests_fuse_back_to_mixed_layout():
    c = fixture("mixed_layout_split")
    a = fixture("mixed_layout")
    found = [v for seed in range(20) for v in generate(c, seed, 10)
             if len(v.top) == 1 and structurally_equal(normalize_program(v)[0], c, rename=True)
             and len(list(walk(v.top))) == len(list(walk(a.top)))]
    assert found
    assert all(equivalent(a, v, CONFIGS) for v in found)


def test_sibling_fusion_renames_clashing_inner_loops():
    p = parse("param N = 4; array A[N, N]; array B[N, N];"
              "for i in 0..N { for j in 0..N { A[i, j] = 1; } }"
              "for j in 0..N { for i in 0..N { B[j, i] = 2; } }")
    q = fuse_siblings(p, (0,))
    assert validate(q) == []
    names = [n.iterator for _, n, _ in walk(q.top) if isinstance(n, Loop)]
    assert len(names) == 3 and names[0] == "i" and len(set(names)) == 3
    assert equivalent(p, q, CONFIGS)


def test_illegal_sibling_fusion_is_rejected():
    # the second loop reads a value the first writes one iteration later
    p = parse("param N = 8; param M = 9; array A[M]; array B[N];"
              "for i in 0..N { A[i] = 1; } for i in 0..N { B[i] = A[i+1]; }")
    assert fusion_is_legal(p, (0,)) is None
    ok = parse("param N = 8; array A[N]; array B[N];"
               "for i in 0..N { A[i] = 1; } for i in 0..N { B[i] = A[i]; }")
    assert fusion_is_legal(ok, (0,)) is not None
    assert fusion_is_legal(ok, (1,)) is None


def test_moves_listed():
    assert set(MOVES) == {"permute", "fuse", "rename"}


@pytest.mark.parametrize("name", corpus.names())
def test_corpus_variants_are_equivalent_and_converge(name, kernels):
    p = kernels[name]
    target = fingerprint(p)
    for v in generate(p, 0, 4):
        assert validate(v) == []
        assert equivalent(p, v, CONFIGS[:2]), name
        assert fingerprint(v) == target, name


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["mvt", "jacobi-2d", "gemm", "syrk"]))
def test_variant_property(seed, name):
    p = corpus.load(name)
    (v,) = generate(p, seed, 1)
    assert equivalent(p, v, CONFIGS[:1])
    assert fingerprint(v) == fingerprint(p)
