"""Program representation and the recursive-descent machinery shared by nx
and st.  Grammars are normative in docs/grammar-nx.md and docs/grammar-st.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..asttree import AstNode
from .lexer import Token, tokenize


@dataclass(frozen=True)
class SourceProgram:
    lang: str
    text: str
    origin: str = "<inline>"


class ParseError(Exception):
    def __init__(self, line: int, column: int, message: str,
                 expected: str | None = None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.message = message
        self.expected = expected

    def __str__(self) -> str:
        s = f"parse error at line {self.line} col {self.column}: {self.message}"
        if self.expected:
            s += f" (expected {self.expected})"
        return s


@dataclass
class FunctionDecl:
    name: str
    params: list[str]
    body: AstNode
    lang: str

    def __repr__(self) -> str:
        return f"<fn {self.name}({', '.join(self.params)}) [{self.lang}]>"


@dataclass
class Program:
    lang: str
    origin: str
    decls: dict[str, FunctionDecl]
    root: AstNode                      # block of top-level statements
    nodes: dict[int, AstNode] = field(default_factory=dict)

    def index_nodes(self) -> None:
        self.nodes = {}
        self.root.link_parents()
        for node in self.root.walk():
            self.nodes[node.id] = node
        for decl in self.decls.values():
            decl.body.link_parents()
            for node in decl.body.walk():
                self.nodes[node.id] = node

    def function_of(self, node_id: int) -> str | None:
        for name, decl in self.decls.items():
            node = self.nodes.get(node_id)
            while node is not None:
                if node is decl.body:
                    return name
                node = node.parent
        return None


class NodeFactory:
    """Assigns node ids; an engine shares one factory across loads so every
    node id it ever logs is unique."""

    def __init__(self, start: int = 0):
        self.next_id = start

    def node(self, kind: str, children: list[AstNode], **kw) -> AstNode:
        n = AstNode(self.next_id, kind, children, **kw)
        self.next_id += 1
        return n


class ParserBase:
    """Token-stream plumbing; language subclasses implement expression()."""

    LANG = "?"
    BUILTINS: frozenset = frozenset()

    def __init__(self, tokens: list[Token], factory: NodeFactory):
        self.tokens = tokens
        self.pos = 0
        self.f = factory
        self.decls: dict[str, FunctionDecl] = {}

    # -- token helpers ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    def take(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind == "error":
            raise ParseError(tok.line, tok.col, str(tok.value))
        if tok.kind != kind:
            raise ParseError(tok.line, tok.col,
                             f"unexpected {tok.kind or 'end of input'}",
                             expected=what or repr(kind))
        return self.take()

    def fail(self, message: str, expected: str | None = None):
        tok = self.peek()
        if tok.kind == "error":
            raise ParseError(tok.line, tok.col, str(tok.value))
        raise ParseError(tok.line, tok.col, message, expected=expected)

    # -- program structure -------------------------------------------------

    def parse_program(self, origin: str) -> Program:
        top: list[AstNode] = []
        first = self.peek()
        while not self.at("eof"):
            if self.at("fn"):
                top.append(self.fundef())
            else:
                top.append(self.statement())
        root = self.f.node("block", top, pos=(first.line, first.col))
        program = Program(self.LANG, origin, self.decls, root)
        program.index_nodes()
        return program

    def fundef(self) -> AstNode:
        start = self.expect("fn")
        name = self.expect("ident", "function name").text
        self.expect("(")
        params: list[str] = []
        if not self.at(")"):
            params.append(self.expect("ident", "parameter name").text)
            while self.at(","):
                self.take()
                params.append(self.expect("ident", "parameter name").text)
        if len(set(params)) != len(params):
            self.fail(f"duplicate parameter name in fn {name}")
        self.expect(")")
        body = self.block()
        node = self.f.node("fndef", [body], name=name,
                           pos=(start.line, start.col))
        if name in self.decls:
            raise ParseError(start.line, start.col,
                             f"function {name} already defined")
        if name in self.BUILTINS:
            raise ParseError(start.line, start.col,
                             f"{name} is a builtin and cannot be redefined")
        self.decls[name] = FunctionDecl(name, params, body, self.LANG)
        return node

    def block(self) -> AstNode:
        start = self.expect("{")
        stmts: list[AstNode] = []
        while not self.at("}"):
            if self.at("eof"):
                self.fail("unterminated block", expected="'}'")
            stmts.append(self.statement())
        self.expect("}")
        return self.f.node("block", stmts, pos=(start.line, start.col))

    def statement(self) -> AstNode:
        tok = self.peek()
        if tok.kind == "let":
            self.take()
            name = self.expect("ident", "variable name").text
            self.expect("=")
            value = self.expression()
            self.expect(";")
            return self.f.node("let", [value], name=name, pos=(tok.line, tok.col))
        if tok.kind == "use":
            self.take()
            name = self.expect("ident", "import name").text
            self.expect(";")
            return self.f.node("use", [], name=name, pos=(tok.line, tok.col))
        if tok.kind == "export":
            self.take()
            name = self.expect("ident", "export name").text
            self.expect("=")
            value = self.expression()
            self.expect(";")
            return self.f.node("export", [value], name=name, pos=(tok.line, tok.col))
        if tok.kind == "return":
            self.take()
            if self.at(";"):
                self.take()
                return self.f.node("return", [], pos=(tok.line, tok.col))
            value = self.expression()
            self.expect(";")
            return self.f.node("return", [value], pos=(tok.line, tok.col))
        if tok.kind == "while":
            self.take()
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            body = self.block()
            return self.f.node("while", [cond, body], pos=(tok.line, tok.col))
        if tok.kind == "if":
            self.take()
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            then = self.block()
            if self.at("else"):
                self.take()
                other = self.block()
                return self.f.node("if", [cond, then, other], pos=(tok.line, tok.col))
            return self.f.node("if", [cond, then], pos=(tok.line, tok.col))
        expr = self.expression()
        if self.at("="):
            eq = self.take()
            value = self.expression()
            self.expect(";")
            if expr.kind == "var":
                return self.f.node("assign", [value], name=expr.name,
                                   pos=expr.pos)
            if expr.kind == "index":
                return self.f.node("index_set", [*expr.children, value],
                                   pos=expr.pos)
            raise ParseError(eq.line, eq.col, "cannot assign to this expression")
        self.expect(";")
        return expr

    def expression(self) -> AstNode:
        raise NotImplementedError

    def call_or_var(self) -> AstNode:
        tok = self.expect("ident")
        if self.at("("):
            self.take()
            args: list[AstNode] = []
            if not self.at(")"):
                args.append(self.expression())
                while self.at(","):
                    self.take()
                    args.append(self.expression())
            self.expect(")")
            kind = "builtin" if tok.text in self.BUILTINS else "call"
            return self.f.node(kind, args, name=tok.text, pos=(tok.line, tok.col))
        return self.f.node("var", [], name=tok.text, pos=(tok.line, tok.col))


def parse_source(parser_cls, source: SourceProgram,
                 factory: NodeFactory | None = None) -> Program:
    factory = factory or NodeFactory()
    return parser_cls(tokenize(source.text), factory).parse_program(source.origin)
