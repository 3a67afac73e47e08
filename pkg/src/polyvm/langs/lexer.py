"""Shared lexer for the nx and st guest languages.

Tokenizing is total: characters that fit no token become an `error` token
carrying its position, and the parser turns that into a ParseError.  Which
token kinds a language actually accepts is the parser's business.
"""

from __future__ import annotations

from dataclasses import dataclass

KEYWORDS = frozenset(
    {"fn", "let", "while", "if", "else", "return", "true", "false", "nil",
     "use", "export"}
)

# Longest-match operator table.
OPERATORS = (
    "++", "&&", "||", "<=", ">=", "==", "!=",
    "+", "-", "*", "/", "^", "~", "<", ">", "=",
    "(", ")", "{", "}", "[", "]", ",", ";",
)


@dataclass(frozen=True)
class Token:
    kind: str          # int,float,str,ident,error,eof, a keyword, or an operator
    text: str
    value: object      # decoded payload for int/float/str
    line: int
    col: int

    def __repr__(self) -> str:
        return f"Token({self.kind!r}, {self.text!r} @{self.line}:{self.col})"


_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line, col = 1, 1
    n = len(text)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                advance(1)
            continue
        start_line, start_col = line, col
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
                lexeme = text[i:j]
                tokens.append(Token("float", lexeme, float(lexeme), start_line, start_col))
            else:
                lexeme = text[i:j]
                tokens.append(Token("int", lexeme, int(lexeme), start_line, start_col))
            advance(j - i)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            lexeme = text[i:j]
            kind = lexeme if lexeme in KEYWORDS else "ident"
            tokens.append(Token(kind, lexeme, lexeme, start_line, start_col))
            advance(j - i)
            continue
        if ch == '"':
            j = i + 1
            out = []
            bad = None
            while j < n and text[j] != '"':
                c = text[j]
                if c == "\\":
                    if j + 1 < n and text[j + 1] in _ESCAPES:
                        out.append(_ESCAPES[text[j + 1]])
                        j += 2
                        continue
                    bad = "invalid escape sequence"
                    j += 1
                    continue
                if c == "\n":
                    bad = "unterminated string literal"
                    break
                out.append(c)
                j += 1
            if j >= n or text[j] != '"':
                bad = bad or "unterminated string literal"
                tokens.append(Token("error", text[i:j], bad, start_line, start_col))
                advance(j - i)
                continue
            lexeme = text[i:j + 1]
            if bad:
                tokens.append(Token("error", lexeme, bad, start_line, start_col))
            else:
                tokens.append(Token("str", lexeme, "".join(out), start_line, start_col))
            advance(j - i + 1)
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                tokens.append(Token(op, op, op, start_line, start_col))
                advance(len(op))
                break
        else:
            tokens.append(Token("error", ch, f"unexpected character {ch!r}",
                                start_line, start_col))
            advance(1)
    tokens.append(Token("eof", "", None, line, col))
    return tokens
