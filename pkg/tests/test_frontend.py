import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture
from loopnorm import corpus
from loopnorm.frontend import ParseError, parse, parse_with_spans, pretty_print
from loopnorm.ir import Computation, Loop, Op, Read, structurally_equal


def test_syrk_transcription_parses_to_two_nests():
    p = fixture("syrk_c")
    assert len(p.top) == 1
    outer = p.top[0]
    assert [type(c) for c in outer.body] == [Loop, Loop]
    assert str(outer.body[0].upper) == "i+1"


def test_single_loop_single_computation():
    p = parse("param N; array A[N]; for i in 0..N { A[i] = 0; }")
    assert len(p.top) == 1 and isinstance(p.top[0], Loop)
    assert [type(c) for c in p.top[0].body] == [Computation]


def test_non_affine_index_rejected():
    with pytest.raises(ParseError, match="non-affine index"):
        parse("array A[16]; for i in 0..4 { A[i*i] = 0; }")


def test_plus_assign_desugars_to_read_plus():
    p = parse("array A[4]; array B[4]; for i in 0..4 { A[i] += B[i]; }")
    comp = p.top[0].body[0]
    assert comp.reads[0].array == "A" and comp.reads[0].indices == comp.write.indices
    assert comp.expr == Op("+", (Read(0), Read(1)))


@pytest.mark.parametrize("src,message", [
    ("array A[4]; for i in 0..4 { A[i] = q[i]; }", "undeclared"),
    ("array A[4, 4]; for i in 0..4 { A[i] = 0; }", "rank"),
    ("array A[4]; for i in 0..4 step 2 { A[i] = 0; }", "step"),
    ("array A[4]; for i in 0..4 { A[i] = 0 }", "expected"),
])
def test_errors_carry_spans_inside_input(src, message):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert message in str(info.value)
    span = info.value.span
    lines = src.split("\n")
    assert 1 <= span.start_line <= span.end_line <= len(lines)
    assert (span.start_line, span.start_col) <= (span.end_line, span.end_col)


def test_symbolic_bound_prints_as_range():
    text = pretty_print(parse("param N; array A[N]; for i in 0..N { A[i] = 0; }"))
    assert "for i in 0..N {" in text


def test_triangular_bound_prints_compactly():
    p = parse("param N; array A[N, N]; for i in 0..N { for j in 0..i+1 { A[i, j] = 0; } }")
    text = pretty_print(p)
    assert "for j in 0..i+1 {" in text
    assert structurally_equal(parse(text), p)


@pytest.mark.parametrize("name", corpus.names())
def test_corpus_round_trips_through_dsl(name):
    p = corpus.load(name)
    assert structurally_equal(parse(pretty_print(p)), p)


def test_spans_are_attached_to_nodes():
    src = "array A[4];\nfor i in 0..4 {\n  A[i] = 1;\n}\n"
    p, spans = parse_with_spans(src)
    assert spans[(0,)].start_line == 2
    assert spans[(0, 0)].start_line == 3


@settings(max_examples=80, deadline=None)
@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 3), st.sampled_from(["+=", "=", "-=", "*="]))
def test_affine_surface_forms_round_trip(a, b, c, op):
    src = (f"param N = 6; array A[40]; array B[40];"
           f"for i in 0..N {{ for j in {c}..i+{c + 1} {{ A[{a}*i - j + 20] {op} B[j + {b} + 10] * 2; }} }}")
    p = parse(src)
    assert structurally_equal(parse(pretty_print(p)), p)
