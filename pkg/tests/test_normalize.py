import itertools

import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixture, gemm
from loopnorm import corpus
from loopnorm.canonical import canonicalize_program
from loopnorm.deps import bounds_respect_order, is_permutation_legal, perfect_band
from loopnorm.frontend import parse
from loopnorm.interp import ExecutionConfig, equivalent
from loopnorm.ir import Loop, node_at, structurally_equal, walk
from loopnorm.normalize import (PERM_CAP, NormalizationError, NormalizationReport, StrideMetric,
                                max_fission, normalize_program,
                                out_of_order_count, permute_band, shrink_bindings, stride)

CONFIGS = [ExecutionConfig(seed=s) for s in range(3)]


def reference_stride(order, extents, accesses):
    """Pure-Python stride of a rectangular nest.

    ``accesses`` maps each access to (array extents, index function of the
    iterator dict)."""
    total = 0
    for dims, index in accesses:
        strides = [1] * len(dims)
        for d in range(len(dims) - 2, -1, -1):
            strides[d] = strides[d + 1] * dims[d + 1]
        prev = None
        for point in itertools.product(*(range(extents[v]) for v in order)):
            env = dict(zip(order, point))
            addr = sum(s * x for s, x in zip(strides, index(env)))
            if prev is not None:
                total += abs(addr - prev)
            prev = addr
    return total


def gemm_reference(order, n):
    ext = {v: n for v in "ijk"}
    c = ((n, n), lambda e: (e["i"], e["j"]))
    accesses = [c, c, ((n, n), lambda e: (e["i"], e["k"])), ((n, n), lambda e: (e["k"], e["j"]))]
    return reference_stride(order, ext, accesses)


FROZEN_GEMM_N4 = {"ikj": 294, "ijk": 486, "kij": 378, "kji": 1122, "jik": 636, "jki": 1188}


@pytest.mark.parametrize("order", sorted(FROZEN_GEMM_N4))
def test_gemm_stride_frozen(order):
    p = gemm(order, n=4)
    assert stride(p.top[0], p) == FROZEN_GEMM_N4[order]
    assert gemm_reference(order, 4) == FROZEN_GEMM_N4[order]


@pytest.mark.parametrize("order", ["ijk", "ikj", "kji"])
@pytest.mark.parametrize("n", [2, 3, 5])
def test_gemm_stride_matches_reference(order, n):
    p = gemm(order, n=n)
    assert stride(p.top[0], p) == gemm_reference(order, n)


def test_unit_stride_vector():
    p = parse("array A[4]; for i in 0..4 { A[i] = 0; }")
    assert stride(p.top[0], p) == 3


def test_transposed_access_stride():
    p = parse("array A[4, 4]; array B[4, 4]; for i in 0..4 { for j in 0..4 { A[i, j] = B[j, i]; } }")
    assert reference_stride("ij", {"i": 4, "j": 4}, [((4, 4), lambda e: (e["j"], e["i"]))]) == 81
    assert stride(p.top[0], p) == 15 + 81
    assert out_of_order_count(p.top[0]) == 1


def test_stride_honours_bindings():
    p = parse("param N = 4; array A[N]; for i in 0..N { A[i] = 0; }")
    assert stride(p.top[0], p, StrideMetric(bindings={"N": 10})) == 9


def test_metric_mode_validation():
    with pytest.raises(ValueError):
        StrideMetric("manhattan")


def test_ooo_metric_ranks_gemm():
    ooo = {o: out_of_order_count(gemm(o).top[0]) for o in FROZEN_GEMM_N4}
    assert ooo["ikj"] == 0
    assert all(v > 0 for o, v in ooo.items() if o != "ikj")


def test_shrink_bindings_brings_nest_under_cap():
    p = gemm(n=200)
    b, shrunk = shrink_bindings(p, p.top[0], {"N": 200}, cap=10 ** 4)
    assert shrunk and b["N"] ** 3 <= 10 ** 4
    b, shrunk = shrink_bindings(p, p.top[0], {"N": 4}, cap=10 ** 4)
    assert not shrunk and b == {"N": 4}


def test_large_problem_normalizes_via_shrinking():
    out, report = normalize_program(gemm("jki", n=1000))
    assert report.shrunk and report.bindings["N"] < 1000
    assert [l.iterator for _, l, _ in walk(out.top) if isinstance(l, Loop)] == ["i", "k", "j"]


def test_max_fission_splits_mixed_layout():
    out = max_fission(fixture("mixed_layout"))
    assert len(out.top) == 2
    assert [len(list(walk((n,)))) for n in out.top] == [3, 3]
    assert equivalent(fixture("mixed_layout"), out, CONFIGS)


def test_max_fission_reports_scopes():
    report = NormalizationReport()
    max_fission(fixture("cloudsc_erosion"), report=report)
    assert report.fission_steps


def test_max_fission_keeps_recurrence():
    p = parse("param N = 8; array A[N]; array B[N];"
              "for i in 1..N { A[i] = B[i-1]; B[i] = A[i]; }")
    assert max_fission(p) == p


def test_mixed_layout_normalizes_to_split_nests():
    out, _ = normalize_program(fixture("mixed_layout"))
    assert structurally_equal(out, fixture("mixed_layout_split"), rename=True)
    assert equivalent(out, fixture("mixed_layout"), CONFIGS)


def test_fused_init_gemm_splits_and_orders():
    p = parse("param N = 4; array A[N, N]; array B[N, N]; array C[N, N];"
              "for j in 0..N { for i in 0..N { C[i, j] = 0;"
              " for k in 0..N { C[i, j] += A[i, k] * B[k, j]; } } }")
    out, report = normalize_program(p)
    assert len(out.top) == 2
    # the split-off nest carries fresh iterator names
    update = [l.iterator.split("_")[0] for _, l, _ in walk((out.top[1],)) if isinstance(l, Loop)]
    assert update == ["i", "k", "j"]
    assert equivalent(p, out, CONFIGS)
    assert report.fission_steps


@pytest.mark.parametrize("order", sorted(FROZEN_GEMM_N4))
def test_every_gemm_order_converges(order):
    out, report = normalize_program(gemm(order))
    assert [l.iterator for _, l, _ in walk(out.top) if isinstance(l, Loop)] == ["i", "k", "j"]
    assert report.bands[0].stride == 294 and report.bands[0].legal == 6
    assert canonicalize_program(out).fingerprint == canonicalize_program(normalize_program(gemm())[0]).fingerprint


def test_empty_program_normalizes_to_itself():
    p = parse("param N = 4; array A[N];")
    out, report = normalize_program(p)
    assert out == p and report.bands == [] and report.fission_steps == []


def test_dependence_prevents_best_order():
    p = parse("param N = 8; array A[N, N];"
              "for j in 1..N { for i in 0..N-1 { A[i, j] = A[i+1, j-1]; } }")
    out, report = normalize_program(p)
    assert out == p
    assert report.bands[0].legal == 1 and report.bands[0].considered == 2


def test_triangular_bounds_restrict_candidates():
    p = corpus.load("syrk")
    out, _ = normalize_program(p)
    for path, node, _ in walk(out.top):
        if isinstance(node, Loop):
            band = perfect_band(out, path)
            loops = [node_at(out.top, q) for q in band]
            assert bounds_respect_order(loops, [l.iterator for l in loops])


def test_permute_band_rejects_bound_violation():
    p = parse("param N = 6; array C[N, N]; for i in 0..N { for j in 0..i+1 { C[i, j] = 1; } }")
    with pytest.raises(ValueError):
        permute_band(p, (0,), ["j", "i"])
    with pytest.raises(ValueError):
        permute_band(p, (0,), ["i", "x"])


def test_report_json_shape():
    _, report = normalize_program(gemm("jki"))
    doc = report.to_json()
    assert doc["version"] == 1 and doc["metric"] == "distance"
    band = doc["bands"][0]
    assert band["chosen"] == ["i", "k", "j"] and band["stride"] == 294
    assert {c["stride"] for c in band["legal_candidates"]} == set(FROZEN_GEMM_N4.values())


def test_ooo_mode_normalizes_gemm():
    out, _ = normalize_program(gemm("jki"), StrideMetric("ooo"))
    assert [l.iterator for _, l, _ in walk(out.top) if isinstance(l, Loop)] == ["i", "k", "j"]


# corpus-wide invariants


@pytest.mark.parametrize("name", corpus.names())
def test_normalization_is_idempotent(name, kernels):
    once, _ = normalize_program(kernels[name])
    twice, _ = normalize_program(once)
    assert structurally_equal(once, twice)


@pytest.mark.parametrize("name", corpus.names())
def test_normalization_preserves_semantics(name, kernels):
    out, _ = normalize_program(kernels[name])
    assert equivalent(kernels[name], out, CONFIGS)


@pytest.mark.parametrize("name", corpus.names())
def test_bands_are_locally_minimal(name, kernels):
    out, _ = normalize_program(kernels[name])
    for path, node, _ in walk(out.top):
        if not isinstance(node, Loop):
            continue
        band = perfect_band(out, path)
        loops = [node_at(out.top, q) for q in band]
        if len(loops) > 5 or len(loops) > PERM_CAP:
            continue
        base = stride(out.top[path[0]], out)
        for order in itertools.permutations([l.iterator for l in loops]):
            if bounds_respect_order(loops, order) and is_permutation_legal(out, path, order):
                alt = permute_band(out, path, order)
                assert stride(alt.top[path[0]], alt) >= base


@pytest.mark.parametrize("name", corpus.names())
def test_normalized_loops_are_atomic(name, kernels):
    out, _ = normalize_program(kernels[name])
    assert max_fission(out) == out


@settings(max_examples=25, deadline=None)
@given(st.permutations("ijk"), st.integers(2, 5))
def test_gemm_convergence_property(order, n):
    a, _ = normalize_program(gemm("".join(order), n=n))
    b, _ = normalize_program(gemm("ijk", n=n))
    assert canonicalize_program(a).fingerprint == canonicalize_program(b).fingerprint


def test_deep_band_uses_grouping():
    dims = "abcdefg"
    decl = "array X[" + ", ".join(["2"] * 7) + "];"
    loops = "".join(f"for {d} in 0..2 {{ " for d in reversed(dims))
    p = parse(decl + loops + "X[" + ", ".join(dims) + "] = 1;" + " }" * 7)
    out, report = normalize_program(p)
    assert [l.iterator for _, l, _ in walk(out.top) if isinstance(l, Loop)] == list(dims)
    assert report.bands[0].considered <= 2


def test_unbound_parameter_is_reported():
    p = parse("param N; array A[N]; for i in 0..N { A[i] = 0; }")
    with pytest.raises((NormalizationError, ValueError)):
        stride(p.top[0], p)
