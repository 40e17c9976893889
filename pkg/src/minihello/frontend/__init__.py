"""Frontend: lexing, parsing, and static checking of .hlo source packages."""

from .checker import CheckedPackage, check
from .diagnostics import (CheckError, Diagnostic, FrontendError, LexError, Loc,
                          ParseError, SourceErrors)
from .lexer import SourceUnit, Token, tokenize
from .parser import parse_package, parse_unit

__all__ = [
    "CheckError", "CheckedPackage", "Diagnostic", "FrontendError", "LexError",
    "Loc", "ParseError", "SourceErrors", "SourceUnit", "Token", "check",
    "parse_package", "parse_unit", "tokenize",
]


def load_units(directory: str) -> list[SourceUnit]:
    """Read every .hlo file under one directory, sorted by name."""
    import os

    units = []
    for entry in sorted(os.listdir(directory)):
        if entry.endswith(".hlo"):
            path = os.path.join(directory, entry)
            with open(path, "r", encoding="utf-8") as f:
                units.append(SourceUnit(path, f.read()))
    return units
