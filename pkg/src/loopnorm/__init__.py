"""Loop-nest normalization, canonical fingerprints and recipe-driven scheduling."""

from .canonical import CanonicalForm, canonicalize, canonicalize_program, match_key
from .deps import (DependenceEdge, DependenceGraph, analyze, brute_force_oracle,
                   dependence_edges, fission_partition, is_permutation_legal)
from .frontend import ParseError, parse, parse_file, pretty_print
from .interp import ExecutionConfig, InterpError, equivalent, run
from .ir import (AffineExpr, Program, deserialize, iterators_in_order, serialize,
                 structurally_equal, validate)
from .normalize import (NormalizationReport, StrideMetric, max_fission, minimize_strides,
                        normalize_program, out_of_order_count, stride)
from .variants import generate

__all__ = [
    "AffineExpr", "CanonicalForm", "DependenceEdge", "DependenceGraph", "ExecutionConfig",
    "InterpError", "NormalizationReport", "ParseError", "Program", "StrideMetric", "analyze",
    "brute_force_oracle", "canonicalize", "canonicalize_program", "dependence_edges",
    "deserialize", "equivalent", "fission_partition", "generate", "is_permutation_legal",
    "iterators_in_order", "match_key", "max_fission", "minimize_strides", "normalize_program",
    "out_of_order_count", "parse", "parse_file", "pretty_print", "run", "serialize", "stride",
    "structurally_equal", "validate",
]
