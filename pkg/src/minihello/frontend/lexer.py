"""Tokenizer for .hlo source units.

Line comments start with //. Maximal munch applies, so the multi-character
operators <=> #> .+ += -= ++ == != <= >= && || are single tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import LexError, Loc

KEYWORDS = {
    "package", "class", "enum", "external", "public", "static", "message",
    "iterator", "group", "copy", "if", "else", "while", "for", "return",
    "new", "create", "null", "true", "false", "this", "this_host", "hosts",
    "void", "int", "bool", "char", "host", "queue",
}

# Longest first within each length bucket; scanned 3, then 2, then 1 chars.
OPS3 = ("<=>",)
OPS2 = ("#>", ".+", "+=", "-=", "++", "==", "!=", "<=", ">=", "&&", "||")
OPS1 = "+-*/%<>!=?:;,.()[]{}"


@dataclass(frozen=True, slots=True)
class SourceUnit:
    """One .hlo file: path, text, and a per-line offset index for diagnostics."""
    path: str
    text: str

    @property
    def line_offsets(self) -> list[int]:
        offsets = [0]
        for i, ch in enumerate(self.text):
            if ch == "\n":
                offsets.append(i + 1)
        return offsets


@dataclass(frozen=True, slots=True)
class Token:
    kind: str   # 'ident' | 'int' | 'string' | 'charlit' | 'eof' | the operator/keyword lexeme
    text: str
    value: object
    loc: Loc


_ESCAPES = {"n": 10, "t": 9, "r": 13, "0": 0, "\\": 92, '"': 34, "'": 39}


def tokenize(unit: SourceUnit) -> list[Token]:
    text = unit.text
    path = unit.path
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def loc() -> Loc:
        return Loc(path, line, col)

    def advance(k: int = 1) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance()
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                advance()
            continue
        start = loc()
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            advance(j - i)
            kind = word if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, word, start))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            digits = text[i:j]
            advance(j - i)
            value = int(digits)
            if value >= 1 << 63:
                raise LexError(start, f"integer literal out of 64-bit range: {digits}")
            tokens.append(Token("int", digits, value, start))
            continue
        if ch == '"':
            advance()
            out = bytearray()
            while True:
                if i >= n or text[i] == "\n":
                    raise LexError(start, "unterminated string literal")
                c = text[i]
                if c == '"':
                    advance()
                    break
                if c == "\\":
                    advance()
                    if i >= n:
                        raise LexError(start, "unterminated string literal")
                    esc = text[i]
                    if esc not in _ESCAPES:
                        raise LexError(loc(), f"unknown escape: \\{esc}")
                    out.append(_ESCAPES[esc])
                    advance()
                else:
                    out += c.encode("utf-8")
                    advance()
            tokens.append(Token("string", "", bytes(out), start))
            continue
        if ch == "'":
            advance()
            if i >= n:
                raise LexError(start, "unterminated char literal")
            if text[i] == "\\":
                advance()
                if i >= n or text[i] not in _ESCAPES:
                    raise LexError(start, "unknown escape in char literal")
                code = _ESCAPES[text[i]]
                advance()
            else:
                raw = text[i].encode("utf-8")
                if len(raw) != 1:
                    raise LexError(start, "char literal must be a single byte")
                code = raw[0]
                advance()
            if i >= n or text[i] != "'":
                raise LexError(start, "unterminated char literal")
            advance()
            tokens.append(Token("charlit", "", code, start))
            continue
        three = text[i:i + 3]
        if three in OPS3:
            advance(3)
            tokens.append(Token(three, three, three, start))
            continue
        two = text[i:i + 2]
        if two in OPS2:
            advance(2)
            tokens.append(Token(two, two, two, start))
            continue
        if ch in OPS1:
            advance()
            tokens.append(Token(ch, ch, ch, start))
            continue
        raise LexError(start, f"illegal character {ch!r}")

    tokens.append(Token("eof", "", None, loc()))
    return tokens
