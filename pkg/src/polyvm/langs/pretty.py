"""Canonical pretty-printer.

The output format is fixed: round-trip tests rely on
parse(pretty(program)) being structurally equal to the original, so every
expression is printed fully parenthesized and sugar (`~`, unary minus) is
printed in its desugared form.
"""

from __future__ import annotations

from ..asttree import AstNode
from .base import FunctionDecl, Program

_BINOP = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^",
          "concat": "++"}
_CMP = {"lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "==", "ne": "!="}
_LOGIC = {"and": "&&", "or": "||"}


def _lit(value) -> str:
    if value is None:
        return "nil"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if type(value) is float:
        return repr(value)
    if type(value) is str:
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        escaped = escaped.replace("\n", "\\n").replace("\t", "\\t")
        return f'"{escaped}"'
    return str(value)


def expr_text(node: AstNode) -> str:
    k = node.kind
    if k == "lit":
        return _lit(node.value)
    if k == "var":
        return node.name
    if k in _BINOP:
        a, b = node.children
        return f"({expr_text(a)} {_BINOP[k]} {expr_text(b)})"
    if k == "compare":
        a, b = node.children
        return f"({expr_text(a)} {_CMP[node.op]} {expr_text(b)})"
    if k == "logical":
        a, b = node.children
        return f"({expr_text(a)} {_LOGIC[node.op]} {expr_text(b)})"
    if k == "index":
        obj, idx = node.children
        return f"{expr_text(obj)}[{expr_text(idx)}]"
    if k in ("call", "builtin"):
        args = ", ".join(expr_text(c) for c in node.children)
        return f"{node.name}({args})"
    raise ValueError(f"not an expression kind: {k}")


def _stmt_lines(node: AstNode, indent: int) -> list[str]:
    pad = "    " * indent
    k = node.kind
    if k == "let":
        return [f"{pad}let {node.name} = {expr_text(node.children[0])};"]
    if k == "assign":
        return [f"{pad}{node.name} = {expr_text(node.children[0])};"]
    if k == "index_set":
        obj, idx, value = node.children
        return [f"{pad}{expr_text(obj)}[{expr_text(idx)}] = {expr_text(value)};"]
    if k == "use":
        return [f"{pad}use {node.name};"]
    if k == "export":
        return [f"{pad}export {node.name} = {expr_text(node.children[0])};"]
    if k == "return":
        if node.children:
            return [f"{pad}return {expr_text(node.children[0])};"]
        return [f"{pad}return;"]
    if k == "while":
        cond, body = node.children
        lines = [f"{pad}while ({expr_text(cond)}) {{"]
        lines += _block_lines(body, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if k == "if":
        cond = node.children[0]
        lines = [f"{pad}if ({expr_text(cond)}) {{"]
        lines += _block_lines(node.children[1], indent + 1)
        if len(node.children) == 3:
            lines.append(f"{pad}}} else {{")
            lines += _block_lines(node.children[2], indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if k == "block":
        lines = [f"{pad}{{"]  # bare block (not produced by the parsers)
        lines += _block_lines(node, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if k == "fndef":
        raise ValueError("fndef is printed via its FunctionDecl")
    return [f"{pad}{expr_text(node)};"]


def _block_lines(block: AstNode, indent: int) -> list[str]:
    lines: list[str] = []
    for stmt in block.children:
        lines += _stmt_lines(stmt, indent)
    return lines


def _fn_lines(decl: FunctionDecl) -> list[str]:
    header = f"fn {decl.name}({', '.join(decl.params)}) {{"
    return [header, *_block_lines(decl.body, 1), "}"]


def pretty(program: Program) -> str:
    lines: list[str] = []
    for stmt in program.root.children:
        if stmt.kind == "fndef":
            lines += _fn_lines(program.decls[stmt.name])
        else:
            lines += _stmt_lines(stmt, 0)
    return "\n".join(lines) + "\n"


def structurally_equal(a: AstNode, b: AstNode) -> bool:
    """Equality over kind/payload/children, ignoring ids and positions."""
    if a.kind != b.kind or a.name != b.name or a.op != b.op:
        return False
    if a.kind == "lit" and (a.value != b.value or type(a.value) is not type(b.value)):
        return False
    if len(a.children) != len(b.children):
        return False
    return all(structurally_equal(x, y) for x, y in zip(a.children, b.children))


def programs_equal(a: Program, b: Program) -> bool:
    if not structurally_equal(a.root, b.root):
        return False
    if set(a.decls) != set(b.decls):
        return False
    for name in a.decls:
        da, db = a.decls[name], b.decls[name]
        if da.params != db.params or not structurally_equal(da.body, db.body):
            return False
    return True
