"""nx: the numeric guest language.

Exact arbitrary-precision integers, 64-bit floats, booleans, functions,
while loops, two-slot pair objects.  Full grammar in docs/grammar-nx.md.
"""

from __future__ import annotations

from .base import NodeFactory, ParserBase, SourceProgram, parse_source

BUILTINS = frozenset({"print", "pair"})

_COMPARE = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}


class NxParser(ParserBase):
    LANG = "nx"
    BUILTINS = BUILTINS

    def expression(self):
        return self.or_expr()

    def or_expr(self):
        node = self.and_expr()
        while self.at("||"):
            tok = self.take()
            rhs = self.and_expr()
            node = self.f.node("logical", [node, rhs], op="or",
                               pos=(tok.line, tok.col))
        return node

    def and_expr(self):
        node = self.cmp_expr()
        while self.at("&&"):
            tok = self.take()
            rhs = self.cmp_expr()
            node = self.f.node("logical", [node, rhs], op="and",
                               pos=(tok.line, tok.col))
        return node

    def cmp_expr(self):
        node = self.add_expr()
        if self.peek().kind in _COMPARE:
            tok = self.take()
            rhs = self.add_expr()
            node = self.f.node("compare", [node, rhs], op=_COMPARE[tok.kind],
                               pos=(tok.line, tok.col))
        return node

    def add_expr(self):
        node = self.mul_expr()
        while self.peek().kind in ("+", "-"):
            tok = self.take()
            rhs = self.mul_expr()
            node = self.f.node("add" if tok.kind == "+" else "sub",
                               [node, rhs], pos=(tok.line, tok.col))
        return node

    def mul_expr(self):
        node = self.pow_expr()
        while self.peek().kind in ("*", "/"):
            tok = self.take()
            rhs = self.pow_expr()
            node = self.f.node("mul" if tok.kind == "*" else "div",
                               [node, rhs], pos=(tok.line, tok.col))
        return node

    def pow_expr(self):
        node = self.unary()
        if self.at("^"):
            tok = self.take()
            rhs = self.pow_expr()   # right-associative
            node = self.f.node("pow", [node, rhs], pos=(tok.line, tok.col))
        return node

    def unary(self):
        if self.at("-"):
            tok = self.take()
            # A numeric literal absorbs the sign; anything else desugars
            # to (0 - e).
            if self.peek().kind in ("int", "float"):
                lit = self.take()
                return self.f.node("lit", [], value=-lit.value,
                                   pos=(tok.line, tok.col))
            operand = self.unary()
            zero = self.f.node("lit", [], value=0, pos=(tok.line, tok.col))
            return self.f.node("sub", [zero, operand], pos=(tok.line, tok.col))
        return self.postfix()

    def postfix(self):
        node = self.atom()
        while self.at("["):
            tok = self.take()
            idx = self.expression()
            self.expect("]")
            node = self.f.node("index", [node, idx], pos=(tok.line, tok.col))
        return node

    def atom(self):
        tok = self.peek()
        if tok.kind in ("int", "float"):
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
    return parse_source(NxParser, source, factory)
