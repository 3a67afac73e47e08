"""Guest language registry."""

from __future__ import annotations

from . import nx, st
from .base import FunctionDecl, NodeFactory, ParseError, Program, SourceProgram

_PARSERS = {"nx": nx.parse, "st": st.parse}

LANGUAGES = tuple(sorted(_PARSERS))


def parse(source: SourceProgram, factory: NodeFactory | None = None) -> Program:
    try:
        parser = _PARSERS[source.lang]
    except KeyError:
        raise ValueError(f"unknown language {source.lang!r}") from None
    return parser(source, factory)


__all__ = [
    "FunctionDecl", "LANGUAGES", "NodeFactory", "ParseError", "Program",
    "SourceProgram", "parse",
]
