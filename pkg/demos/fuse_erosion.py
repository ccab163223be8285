"""Fission a cloud-erosion style loop into single computations, then fuse
one-to-one producer-consumer pairs back together."""

from pathlib import Path

from loopnorm.frontend import parse_file, pretty_print
from loopnorm.interp import ExecutionConfig, equivalent
from loopnorm.normalize import max_fission
from loopnorm.recipes import FuseProducerConsumer, apply_steps, fusion_refusal

SOURCE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "cloudsc_erosion.loop"


def main():
    src = parse_file(SOURCE)
    split = max_fission(src)
    print(f"after fission: {len(split.top)} nests")
    for k in range(len(split.top) - 1):
        print(f"  fuse {k} with {k + 1}: {fusion_refusal(split, k) or 'allowed'}")
    fused = apply_steps(split, [FuseProducerConsumer()])
    print(f"after fusion: {len(fused.top)} nests\n")
    print(pretty_print(fused))
    ok = equivalent(src, fused, [ExecutionConfig(seed=s) for s in range(3)])
    print("equivalent to the original:", bool(ok))


if __name__ == "__main__":
    main()
