"""``loopnorm`` command-line interface."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import canonical, deps, frontend, interp, ir, normalize, recipes, variants

__all__ = ["main", "check_corpus", "KernelResult"]


def _bindings(items: Optional[Sequence[str]]) -> dict[str, int]:
    out: dict[str, int] = {}
    for item in items or ():
        for part in item.split(","):
            if not part.strip():
                continue
            name, sep, value = part.partition("=")
            if not sep:
                raise SystemExit(f"error: binding {part!r} is not NAME=INT")
            try:
                out[name.strip()] = int(value)
            except ValueError:
                raise SystemExit(f"error: binding {part!r} is not NAME=INT") from None
    return out


def _read(path: str) -> tuple[str, str]:
    if path == "-":
        return sys.stdin.read(), "<stdin>"
    return Path(path).read_text(encoding="utf-8"), path


def _load(path: str) -> ir.Program:
    text, name = _read(path)
    if text.lstrip().startswith("{"):
        return ir.deserialize(text)
    return frontend.parse(text, name)


def _write(text: str, out: Optional[str]) -> None:
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _metric(args) -> normalize.StrideMetric:
    return normalize.StrideMetric(getattr(args, "metric", "distance") or "distance",
                                  _bindings(getattr(args, "bindings", None)))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    p = _load(args.file)
    _write(ir.serialize(p) + "\n" if args.json else frontend.pretty_print(p), args.output)
    return 0


def cmd_deps(args) -> int:
    p = _load(args.file)
    edges = deps.dependence_edges(p, _bindings(args.bindings))
    if args.json:
        doc = {"version": ir.FORMAT_VERSION, "edges": [
            {"src": e.src, "dst": e.dst, "kind": e.kind, "array": e.array,
             "entries": [{"iter": x.iterator, "distance": x.distance, "direction": x.direction}
                         for x in e.entries],
             "loop_carried_at": e.loop_carried_at, "exactness": e.exactness} for e in edges]}
        print(json.dumps(doc, indent=1))
        return 0
    print(f"{'src':<6} {'dst':<6} {'kind':<7} {'array':<8} {'carried':<8} distance/direction")
    for e in edges:
        vec = "(" + ", ".join(f"{x.iterator}:{x}" for x in e.entries) + ")"
        lvl = "-" if e.loop_carried_at is None else str(e.loop_carried_at)
        print(f"{e.src:<6} {e.dst:<6} {e.kind:<7} {e.array:<8} {lvl:<8} {vec}"
              + ("" if e.exactness == "static" else f"  [{e.exactness}]"))
    return 0


def cmd_normalize(args) -> int:
    p = _load(args.file)
    q, report = normalize.normalize_program(p, _metric(args))
    _write(frontend.pretty_print(q), args.output)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=1) + "\n",
                                     encoding="utf-8")
    return 0


def cmd_canon(args) -> int:
    p = _load(args.file)
    if args.normalize:
        p, _ = normalize.normalize_program(p, _metric(args))
    b = _bindings(args.bindings)
    form = canonical.canonicalize_program(p, args.mode, b)
    sys.stdout.write(form.canonical_text)
    print(f"fingerprint {form.hex}")
    for k, nest in enumerate(p.top):
        print(f"nest {k} {canonical.canonicalize(nest, p, args.mode, b).hex}")
    return 0


def cmd_variants(args) -> int:
    p = _load(args.file)
    stem = Path(args.file).stem if args.file != "-" else "stdin"
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k, v in enumerate(variants.generate(p, args.seed, args.count), 1):
        path = outdir / f"{stem}.v{k}.loop"
        path.write_text(frontend.pretty_print(v), encoding="utf-8")
        print(path)
    return 0


def _configs(args) -> list[interp.ExecutionConfig]:
    seeds = args.seeds if args.seeds else [0, 1, 2]
    return [interp.ExecutionConfig(_bindings(args.bindings), args.mode, s) for s in seeds]


def cmd_equiv(args) -> int:
    a, b = _load(args.a), _load(args.b)
    verdict = interp.equivalent(a, b, _configs(args))
    print("equivalent" if verdict else f"NOT equivalent: {verdict.reason}")
    return 0 if verdict else 1


def cmd_interp(args) -> int:
    p = _load(args.file)
    cfg = interp.ExecutionConfig(_bindings(args.bind), args.mode, args.seed)
    bufs = interp.run(p, cfg)
    if args.digest:
        print(interp.digest(bufs))
        return 0
    for name in sorted(bufs):
        print(f"{name} = {bufs[name].tolist()}")
    return 0


def _normalized(args) -> ir.Program:
    p = _load(args.file)
    return normalize.normalize_program(p, _metric(args))[0]


def cmd_match(args) -> int:
    db = recipes.RecipeDatabase.load(args.db)
    p = _normalized(args)
    misses = 0
    for k, nest in enumerate(p.top):
        r = db.lookup(nest, p, args.mode)
        key = canonical.canonicalize(nest, p, args.mode).hex
        if r is None:
            misses += 1
            print(f"nest {k} {key} miss")
        else:
            steps = ", ".join(json.dumps(recipes.transforms.step_to_json(s)) for s in r.steps)
            print(f"nest {k} {key} hit [{steps}] ({r.provenance})")
    return 0 if misses == 0 else 1


def cmd_apply(args) -> int:
    db = recipes.RecipeDatabase.load(args.db)
    p = _normalized(args)
    out, found = recipes.apply_database(db, p, args.mode)
    for k, r in enumerate(found):
        print(f"# nest {k}: {'applied ' + (r.provenance or r.key_hex) if r else 'no recipe'}",
              file=sys.stderr)
    _write(frontend.pretty_print(out), args.output)
    return 0


def cmd_db_seed(args) -> int:
    db = recipes.RecipeDatabase.load(args.db) if args.append and Path(args.db).exists() \
        else recipes.RecipeDatabase()
    programs, names = [], []
    for f in args.files:
        programs.append(normalize.normalize_program(_load(f), _metric(args))[0])
        names.append(Path(f).stem)
    n = db.seed(programs, mode=args.mode, names=names)
    db.save(args.db)
    print(f"seeded {n} nests; database holds {len(db)} recipes")
    return 0


def cmd_emit_c(args) -> int:
    p = _load(args.file)
    if args.normalize:
        p = normalize.normalize_program(p, _metric(args))[0]
    if args.db:
        p, _ = recipes.apply_database(recipes.RecipeDatabase.load(args.db), p)
    _write(recipes.emit_c(p, args.name), args.output)
    return 0


# ---------------------------------------------------------------------------
# check: the convergence experiment over a corpus directory
# ---------------------------------------------------------------------------

PROPERTIES = ("parse", "equivalence", "convergence", "idempotence", "minimality", "atomicity")


@dataclass
class KernelResult:
    name: str
    variants: int = 0
    fingerprint: str = ""
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.results.values())

    def first_failure(self) -> Optional[str]:
        for p in PROPERTIES:
            if self.results.get(p, "pass") != "pass":
                return f"{p}: {self.results[p]}"
        return None

    def to_json(self) -> dict:
        return {"kernel": self.name, "variants": self.variants, "fingerprint": self.fingerprint,
                "properties": dict(self.results), "pass": self.passed}


def _atomic(p: ir.Program) -> bool:
    edges = deps.dependence_edges(p)
    return all(len(deps.fission_partition(p, path, edges)) == 1
               for path, node, _ in ir.walk(p.top)
               if isinstance(node, ir.Loop) and len(node.body) > 1)


def _minimal(p: ir.Program, metric: normalize.StrideMetric) -> Optional[str]:
    edges = deps.dependence_edges(p, metric.bindings)
    for path, node, _ in ir.walk(p.top):
        if not isinstance(node, ir.Loop):
            continue
        band = deps.perfect_band(p, path)
        if len(band) < 2 or len(band) > 5:
            continue
        loops = [ir.node_at(p.top, b) for b in band]
        base = normalize.stride(p.top[path[0]], p, metric)
        for order in itertools.permutations([l.iterator for l in loops]):
            if not deps.bounds_respect_order(loops, order):
                continue
            if not deps.is_permutation_legal(p, path, order, edges):
                continue
            q = normalize.permute_band(p, path, order)
            s = normalize.stride(q.top[path[0]], q, metric)
            if s < base:
                return f"band at {list(path)}: order {list(order)} has stride {s} < {base}"
    return None


def check_kernel(name: str, program: ir.Program, extra: Sequence[ir.Program], seed: int,
                 count: int, metric: normalize.StrideMetric) -> KernelResult:
    res = KernelResult(name)
    cfgs = [interp.ExecutionConfig(metric.bindings, "int", s) for s in (0, 1, 2)]
    norm, _ = normalize.normalize_program(program, metric)
    fp = canonical.canonicalize_program(norm).hex
    res.fingerprint = fp
    vs = list(variants.generate(program, seed, count)) + \
        list(variants.generate(program, seed + 1, count)) + list(extra)
    res.variants = len(vs)

    def set_(prop: str, ok: bool, why: str = "") -> None:
        if res.results.get(prop, "pass") == "pass":
            res.results[prop] = "pass" if ok else (why or "fail")

    v = interp.equivalent(program, norm, cfgs)
    set_("equivalence", bool(v), f"normalized program differs: {v.reason}")
    for k, var in enumerate(vs):
        v = interp.equivalent(program, var, cfgs)
        set_("equivalence", bool(v), f"variant {k + 1} differs: {v.reason}")
        try:
            nv, _ = normalize.normalize_program(var, metric)
        except Exception as exc:  # report, do not crash the whole run
            set_("convergence", False, f"variant {k + 1} failed to normalize: {exc}")
            continue
        vfp = canonical.canonicalize_program(nv).hex
        set_("convergence", vfp == fp, f"variant {k + 1} normalizes to {vfp}, expected {fp}")
    set_("equivalence", True)
    set_("convergence", True)
    twice, _ = normalize.normalize_program(norm, metric)
    set_("idempotence", ir.structurally_equal(twice, norm, rename=True),
         "second normalization changes the program")
    why = _minimal(norm, normalize.StrideMetric(metric.mode, norm.bindings(metric.bindings)))
    set_("minimality", why is None, why or "")
    set_("atomicity", _atomic(norm), "a loop body still splits")
    return res


def check_corpus(directory, seed: int = 1, count: int = 5,
                 metric: normalize.StrideMetric | None = None) -> list[KernelResult]:
    """Run the convergence experiment over every ``name.loop`` in ``directory``.
    Files named ``name.<tag>.loop`` are extra hand-written variants of ``name``."""
    metric = metric or normalize.StrideMetric()
    directory = Path(directory)
    files = sorted(directory.glob("*.loop"))
    bases = [f for f in files if "." not in f.stem]
    results = []
    for f in bases:
        res = KernelResult(f.stem)
        try:
            program = frontend.parse_file(f)
            extra = [frontend.parse_file(g) for g in files
                     if g.stem.startswith(f.stem + ".")]
        except (frontend.ParseError, OSError) as exc:
            res.results["parse"] = str(exc)
            results.append(res)
            continue
        res = check_kernel(f.stem, program, extra, seed, count, metric)
        res.results = {"parse": "pass", **res.results}
        results.append(res)
    return results


def cmd_check(args) -> int:
    results = check_corpus(args.dir, args.seed, args.count, _metric(args))
    doc = {"version": ir.FORMAT_VERSION, "kernels": [r.to_json() for r in results],
           "pass": all(r.passed for r in results)}
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"{'kernel':<20} {'variants':>8}  {'fingerprint':<16}  " + "  ".join(PROPERTIES))
    for r in results:
        cells = "  ".join(f"{'pass' if r.results.get(p) == 'pass' else 'FAIL':<{len(p)}}"
                          for p in PROPERTIES)
        print(f"{r.name:<20} {r.variants:>8}  {r.fingerprint:<16}  {cells}")
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"FAILED: {failed[0].name}: {failed[0].first_failure()}")
        return 1
    print(f"all {len(results)} kernels pass")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopnorm", description="Loop-nest normalization toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    def common(p, metric=False, output=False):
        p.add_argument("--bindings", "--bind", action="append", metavar="N=V",
                       help="parameter bindings, e.g. N=8 (repeatable or comma-separated)")
        if metric:
            p.add_argument("--metric", choices=("distance", "ooo"), default="distance")
        if output:
            p.add_argument("-o", "--output", help="output file (default stdout)")

    p = add("parse", cmd_parse, "parse a .loop file and pretty-print it")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="emit the interchange format")
    common(p, output=True)

    p = add("deps", cmd_deps, "print the dependence graph")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    common(p)

    p = add("normalize", cmd_normalize, "maximal fission + stride minimization")
    p.add_argument("file")
    p.add_argument("--report", help="write the normalization report (JSON)")
    common(p, metric=True, output=True)

    p = add("canon", cmd_canon, "canonical text and fingerprint")
    p.add_argument("file")
    p.add_argument("--mode", choices=canonical.MODES, default="exact")
    p.add_argument("--normalize", action="store_true", help="normalize first")
    common(p, metric=True)

    p = add("variants", cmd_variants, "write random equivalent variants")
    p.add_argument("file")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--outdir", default=".")

    p = add("equiv", cmd_equiv, "compare two programs with the interpreter")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mode", choices=("int", "float"), default="int")
    p.add_argument("--seeds", type=int, nargs="*")
    common(p)

    p = add("interp", cmd_interp, "run a program")
    p.add_argument("file")
    p.add_argument("--bind", "--bindings", action="append", metavar="N=V")
    p.add_argument("--mode", choices=("int", "float"), default="int")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--digest", action="store_true", help="print a digest instead of buffers")

    for name, fn, help_ in (("match", cmd_match, "look up normalized nests in a database"),
                            ("apply", cmd_apply, "apply database recipes to a program")):
        p = add(name, fn, help_)
        p.add_argument("file")
        p.add_argument("--db", required=True)
        p.add_argument("--mode", choices=canonical.MODES, default="shape")
        common(p, metric=True, output=name == "apply")

    p = add("db", None, "recipe database operations")
    dbsub = p.add_subparsers(dest="db_command", required=True)
    s = dbsub.add_parser("seed", help="seed a database from (A-variant) programs")
    s.set_defaults(fn=cmd_db_seed)
    s.add_argument("files", nargs="+")
    s.add_argument("--db", required=True)
    s.add_argument("--mode", choices=canonical.MODES, default="shape")
    s.add_argument("--append", action="store_true", help="add to an existing database")
    common(s, metric=True)

    p = add("emit-c", cmd_emit_c, "emit C99 source")
    p.add_argument("file")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--db", help="apply recipes from this database first")
    p.add_argument("--name", default="kernel")
    common(p, metric=True, output=True)

    p = add("check", cmd_check, "run the convergence experiment over a corpus directory")
    p.add_argument("dir", nargs="?", default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--json", help="write the report (JSON) to this file")
    common(p, metric=True)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "check" and args.dir is None:
        from . import corpus
        args.dir = str(corpus.directory())
    try:
        return args.fn(args)
    except (frontend.ParseError, ir.FormatError, recipes.DatabaseFormatError,
            recipes.IllegalStep, recipes.KeyMismatch, interp.InterpError,
            normalize.NormalizationError, deps.OracleCapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
