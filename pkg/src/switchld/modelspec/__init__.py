from .expression import (
    Expr,
    differentiate,
    evaluate,
    fold,
    parse_expression,
    to_source,
)
from .model import (
    BUILTINS,
    ModelDefinition,
    build_model,
    builtin_model,
    load_model,
    validate_model,
)

__all__ = [
    "BUILTINS",
    "Expr",
    "ModelDefinition",
    "build_model",
    "builtin_model",
    "differentiate",
    "evaluate",
    "fold",
    "load_model",
    "parse_expression",
    "to_source",
    "validate_model",
]
