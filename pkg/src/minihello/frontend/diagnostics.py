"""Source locations, diagnostics, and the frontend error hierarchy.

Diagnostics render as `path:line:col: severity: message`, the format the
translator CLI prints.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class Loc:
    path: str
    line: int  # 1-based
    col: int   # 1-based

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.col}"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    loc: Loc
    severity: str  # 'error' | 'warning'
    code: str
    message: str

    def render(self) -> str:
        return f"{self.loc}: {self.severity}: {self.message}"


class FrontendError(Exception):
    """A fatal frontend diagnostic. `code` is the stable error kind."""

    def __init__(self, loc: Loc, code: str, message: str):
        self.loc = loc
        self.code = code
        self.message = message
        super().__init__(f"{loc}: error: {message}")

    def to_diagnostic(self) -> Diagnostic:
        return Diagnostic(self.loc, "error", self.code, self.message)


class LexError(FrontendError):
    def __init__(self, loc: Loc, message: str):
        super().__init__(loc, "LexError", message)


class ParseError(FrontendError):
    def __init__(self, loc: Loc, message: str, code: str = "ParseError"):
        super().__init__(loc, code, message)


class CheckError(FrontendError):
    """Static checking failure; code is one of TypeError, UnknownName, QualifierError."""


class SourceErrors(Exception):
    """Aggregate of one or more fatal diagnostics across source units."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.render() for d in diagnostics))
