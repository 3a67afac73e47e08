"""st: the string guest language.

Strings with concatenation (++), substring, glob matching (~ operator or
the match builtin), plus integers for positions and counters.  Full grammar
in docs/grammar-st.md.
"""

from __future__ import annotations

from .base import NodeFactory, ParserBase, SourceProgram, parse_source

BUILTINS = frozenset({"print", "len", "substr", "match", "show"})

_COMPARE = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}


class StParser(ParserBase):
    LANG = "st"
    BUILTINS = BUILTINS

    def expression(self):
        return self.or_expr()

    def or_expr(self):
        node = self.and_expr()
        while self.at("||"):
            tok = self.take()
            node = self.f.node("logical", [node, self.and_expr()], op="or",
                               pos=(tok.line, tok.col))
        return node

    def and_expr(self):
        node = self.cmp_expr()
        while self.at("&&"):
            tok = self.take()
            node = self.f.node("logical", [node, self.cmp_expr()], op="and",
                               pos=(tok.line, tok.col))
        return node

    def cmp_expr(self):
        node = self.match_expr()
        if self.peek().kind in _COMPARE:
            tok = self.take()
            node = self.f.node("compare", [node, self.match_expr()],
                               op=_COMPARE[tok.kind], pos=(tok.line, tok.col))
        return node

    def match_expr(self):
        node = self.cat_expr()
        if self.at("~"):
            tok = self.take()
            pattern = self.cat_expr()
            # subject ~ pattern is sugar for match(pattern, subject)
            node = self.f.node("builtin", [pattern, node], name="match",
                               pos=(tok.line, tok.col))
        return node

    def cat_expr(self):
        node = self.add_expr()
        while self.at("++"):
            tok = self.take()
            node = self.f.node("concat", [node, self.add_expr()],
                               pos=(tok.line, tok.col))
        return node

    def add_expr(self):
        node = self.unary()
        while self.peek().kind in ("+", "-"):
            tok = self.take()
            node = self.f.node("add" if tok.kind == "+" else "sub",
                               [node, self.unary()], pos=(tok.line, tok.col))
        return node

    def unary(self):
        if self.at("-"):
            tok = self.take()
            if self.at("int"):
                lit = self.take()
                return self.f.node("lit", [], value=-lit.value,
                                   pos=(tok.line, tok.col))
            operand = self.unary()
            zero = self.f.node("lit", [], value=0, pos=(tok.line, tok.col))
            return self.f.node("sub", [zero, operand], pos=(tok.line, tok.col))
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok.kind == "str":
            self.take()
            return self.f.node("lit", [], value=tok.value, pos=(tok.line, tok.col))
        if tok.kind == "int":
            self.take()
            return self.f.node("lit", [], value=tok.value, pos=(tok.line, tok.col))
        if tok.kind == "true":
            self.take()
            return self.f.node("lit", [], value=True, pos=(tok.line, tok.col))
        if tok.kind == "false":
            self.take()
            return self.f.node("lit", [], value=False, pos=(tok.line, tok.col))
        if tok.kind == "nil":
            self.take()
            return self.f.node("lit", [], value=None, pos=(tok.line, tok.col))
        if tok.kind == "ident":
            return self.call_or_var()
        if tok.kind == "(":
            self.take()
            node = self.expression()
            self.expect(")")
            return node
        self.fail("unexpected " + (tok.kind or "end of input"),
                  expected="an expression")


def parse(source: SourceProgram, factory: NodeFactory | None = None):
    return parse_source(StParser, source, factory)
