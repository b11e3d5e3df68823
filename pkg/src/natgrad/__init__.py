"""Natural gradient terms of second-order operators and the change of variables that removes them."""

from .expr import differentiate, evaluate, parse, to_string
from .operators import OperatorSpec, default_catalog, eval_M, eval_N, grad_M, parse_operator
from .transform import GSpec, TransformTable, build_h, build_table

__all__ = [
    "GSpec",
    "OperatorSpec",
    "TransformTable",
    "build_h",
    "build_table",
    "default_catalog",
    "differentiate",
    "eval_M",
    "eval_N",
    "evaluate",
    "grad_M",
    "parse",
    "parse_operator",
    "to_string",
]
__version__ = "0.1.0"
