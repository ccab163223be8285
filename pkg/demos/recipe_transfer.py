"""Seed a recipe database from the corpus, then reuse it on random variants."""

from loopnorm import corpus
from loopnorm.frontend import pretty_print
from loopnorm.interp import ExecutionConfig, equivalent
from loopnorm.normalize import normalize_program
from loopnorm.recipes import RecipeDatabase, apply_database, emit_c
from loopnorm.variants import generate


def main():
    kernels = corpus.load_all()
    db = RecipeDatabase()
    seeded = db.seed([normalize_program(p)[0] for p in kernels.values()], names=list(kernels))
    print(f"seeded {seeded} nests into {len(db)} keys\n")
    print(f"{'kernel':18} {'hits':>6}  equivalent")
    for name, p in kernels.items():
        hits = total = 0
        same = True
        for v in generate(p, 42, 3):
            out, found = apply_database(db, normalize_program(v)[0])
            hits += sum(r is not None for r in found)
            total += len(found)
            same &= bool(equivalent(p, out, [ExecutionConfig(seed=0)]))
        print(f"{name:18} {hits:>3}/{total:<3} {same}")
    variant = generate(kernels["mvt"], 5, 1)[0]
    print("\na random mvt variant:\n" + pretty_print(variant))
    out, _ = apply_database(db, normalize_program(variant)[0])
    print(emit_c(out, "mvt"))


if __name__ == "__main__":
    main()
