"""Neural type-hint suggestion for optionally typed Python code."""

__version__ = "0.1.0"

from .typeexpr import TypeExpr, parse_type, normalize_type, erase_type_parameters

__all__ = ["TypeExpr", "parse_type", "normalize_type", "erase_type_parameters", "__version__"]
