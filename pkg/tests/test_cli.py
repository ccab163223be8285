import json

from loopnorm import corpus
from loopnorm.cli import main
from loopnorm.frontend import parse_file
from loopnorm.interp import ExecutionConfig, equivalent

GEMM = str(corpus.directory() / "gemm.loop")

SKEW = """param N = 8;
array A[N, N];
for i in 1..N {
  for j in 0..N-1 {
    A[i, j] = A[i-1, j+1] + 1;
  }
}
"""
# hand-edited variant with the loops swapped, which breaks the dependence
SKEW_SWAPPED = SKEW.replace("for i in 1..N {\n  for j in 0..N-1 {",
                            "for j in 0..N-1 {\n  for i in 1..N {")


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_and_json(capsys):
    code, out, _ = run_cli(capsys, "parse", GEMM)
    assert code == 0 and "for i in 0..NI" in out
    code, out, _ = run_cli(capsys, "parse", GEMM, "--json")
    assert code == 0 and json.loads(out)["version"] == 1


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.loop"
    bad.write_text("for i in 0..N {")
    code, _, err = run_cli(capsys, "parse", str(bad))
    assert code == 2 and "bad.loop" in err


def test_missing_file(capsys):
    code, _, err = run_cli(capsys, "parse", "/no/such/file.loop")
    assert code == 2 and "error" in err


def test_deps_table(capsys):
    code, out, _ = run_cli(capsys, "deps", GEMM)
    assert code == 0 and out.splitlines()[0].split()[:4] == ["src", "dst", "kind", "array"]
    code, out, _ = run_cli(capsys, "deps", GEMM, "--json")
    assert code == 0 and isinstance(json.loads(out), (list, dict))


def test_normalize_writes_program_and_report(tmp_path, capsys):
    out_file, report = tmp_path / "n.loop", tmp_path / "r.json"
    code, _, _ = run_cli(capsys, "normalize", GEMM, "-o", str(out_file), "--report", str(report))
    assert code == 0
    assert equivalent(parse_file(GEMM), parse_file(out_file), [ExecutionConfig(seed=0)])
    doc = json.loads(report.read_text())
    assert doc["metric"] == "distance" and doc["bands"]


def test_normalize_with_bindings_and_ooo(capsys):
    code, out, _ = run_cli(capsys, "normalize", GEMM, "--bindings", "NI=4", "--metric", "ooo")
    assert code == 0 and "for" in out


def test_canon_modes(capsys):
    _, exact, _ = run_cli(capsys, "canon", GEMM)
    _, shape, _ = run_cli(capsys, "canon", GEMM, "--mode", "shape")
    assert "fingerprint" in exact and "?" in shape and exact != shape


def test_variants_written(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "variants", GEMM, "--seed", "3", "--count", "4",
                         "--outdir", str(tmp_path))
    files = sorted(tmp_path.glob("gemm.v*.loop"))
    assert code == 0 and len(files) == 4
    for f in files:
        assert run_cli(capsys, "equiv", GEMM, str(f))[0] == 0


def test_equiv_detects_difference(tmp_path, capsys):
    a, b = tmp_path / "a.loop", tmp_path / "b.loop"
    a.write_text(SKEW)
    b.write_text(SKEW_SWAPPED)
    code, out, _ = run_cli(capsys, "equiv", str(a), str(b))
    assert code == 1 and out.startswith("NOT equivalent")


def test_interp_digest_is_stable(capsys):
    _, first, _ = run_cli(capsys, "interp", GEMM, "--digest")
    _, second, _ = run_cli(capsys, "interp", GEMM, "--digest", "--seed", "0")
    _, other, _ = run_cli(capsys, "interp", GEMM, "--digest", "--seed", "5")
    assert first == second and first != other and len(first.strip()) == 16


def test_db_seed_match_apply(tmp_path, capsys):
    db = tmp_path / "db.json"
    code, _, _ = run_cli(capsys, "db", "seed", GEMM, "--db", str(db))
    assert code == 0 and json.loads(db.read_text())["entries"]
    code, out, _ = run_cli(capsys, "match", GEMM, "--db", str(db))
    assert code == 0 and "miss" not in out.lower()
    out_file = tmp_path / "applied.loop"
    code, _, _ = run_cli(capsys, "apply", GEMM, "--db", str(db), "-o", str(out_file))
    assert code == 0 and out_file.exists()


def test_db_seed_refuses_overwrite_conflict(tmp_path, capsys):
    db = tmp_path / "db.json"
    assert run_cli(capsys, "db", "seed", GEMM, "--db", str(db))[0] == 0
    assert run_cli(capsys, "db", "seed", GEMM, "--db", str(db), "--append")[0] == 0


def test_emit_c(capsys):
    code, out, _ = run_cli(capsys, "emit-c", GEMM, "--normalize", "--name", "g")
    assert code == 0 and "void g(" in out


def test_check_bundled_corpus(capsys):
    code, out, _ = run_cli(capsys, "check", "--count", "2")
    assert code == 0 and "all 15 kernels pass" in out


def test_check_flags_illegal_variant(tmp_path, capsys):
    (tmp_path / "skew.loop").write_text(SKEW)
    (tmp_path / "skew.bad.loop").write_text(SKEW_SWAPPED)
    report = tmp_path / "report.json"
    code, out, _ = run_cli(capsys, "check", str(tmp_path), "--count", "2", "--json", str(report))
    assert code == 1 and "fail" in out.lower() and "skew" in out
    assert json.loads(report.read_text())


def test_check_empty_directory(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "check", str(tmp_path))
    assert code == 0
