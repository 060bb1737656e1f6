"""Hand-rolled Java lexer sufficient for single methods.

Produces a token stream whose concatenated texts reproduce the input
byte-for-byte; string/char literals and comments are consumed atomically.
"""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset("""
    abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package
    private protected public return short static strictfp super switch
    synchronized this throw throws transient try void volatile while
    true false null var record yield sealed permits
""".split())

# multi-char operators first so longest-match wins
OPERATORS = [
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "==", "!=", "<=", ">=",
    "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "<<", ">>", "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|",
    "^", "?", ":", ".", "@",
]
SEPARATORS = "(){}[];,"

SKIPPABLE = frozenset({"whitespace", "comment"})


class LexError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass
class Token:
    text: str
    kind: str  # identifier keyword number string char operator separator comment whitespace
    offset: int

    @property
    def skippable(self):
        return self.kind in SKIPPABLE


def _is_ident_start(c):
    return c.isalpha() or c in "_$"


def _is_ident_part(c):
    return c.isalnum() or c in "_$"


def lex_java(source: str) -> list[Token]:
    """Tokenize Java source; raises LexError on unterminated literals/comments."""
    tokens = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        start = i
        if c.isspace():
            while i < n and source[i].isspace():
                i += 1
            tokens.append(Token(source[start:i], "whitespace", start))
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "/":
            while i < n and source[i] != "\n":
                i += 1
            tokens.append(Token(source[start:i], "comment", start))
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "*":
            end = source.find("*/", i + 2)
            if end < 0:
                raise LexError("unterminated block comment", start)
            i = end + 2
            tokens.append(Token(source[start:i], "comment", start))
            continue
        if c == '"':
            i += 1
            while i < n and source[i] != '"':
                i += 2 if source[i] == "\\" else 1
            if i >= n:
                raise LexError("unterminated string literal", start)
            i += 1
            tokens.append(Token(source[start:i], "string", start))
            continue
        if c == "'":
            i += 1
            while i < n and source[i] != "'":
                i += 2 if source[i] == "\\" else 1
            if i >= n:
                raise LexError("unterminated char literal", start)
            i += 1
            tokens.append(Token(source[start:i], "char", start))
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            i += 1
            while i < n and (source[i].isalnum() or source[i] in "._"
                             or (source[i] in "+-" and source[i - 1] in "eEpP")):
                i += 1
            tokens.append(Token(source[start:i], "number", start))
            continue
        if _is_ident_start(c):
            while i < n and _is_ident_part(source[i]):
                i += 1
            text = source[start:i]
            kind = "keyword" if text in KEYWORDS else "identifier"
            tokens.append(Token(text, kind, start))
            continue
        if c in SEPARATORS:
            tokens.append(Token(c, "separator", start))
            i += 1
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                tokens.append(Token(op, "operator", start))
                i += len(op)
                break
        else:
            # unknown character: classify as operator to keep round-trip exact
            tokens.append(Token(c, "operator", start))
            i += 1
    return tokens


def code_tokens(source: str) -> list[Token]:
    """Lexical tokens with whitespace/comments removed."""
    return [t for t in lex_java(source) if not t.skippable]
