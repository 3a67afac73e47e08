"""Reference interpreter: the correctness oracle.

A plain tree walker over the semantic kernel.  No specialization, no
counters, no rewriting; a pure function of (tree, arguments) apart from the
print stream it appends to.
"""

from __future__ import annotations

from ..values import FuncValue, GuestError, apply_binary, apply_index, \
    apply_index_set, require_bool
from .base import FunctionDecl, Program
from .builtins import is_foreign, run_builtin


class ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class RefInterp:
    def __init__(self, program: Program, out: list | None = None, poly=None):
        self.program = program
        self.out = out if out is not None else []
        self.globals: dict[str, object] = {}
        self.poly = poly

    # -- program entry points ----------------------------------------------

    def run_top(self):
        result = None
        for stmt in self.program.root.children:
            result = self.eval(stmt, None)
        return result

    def call(self, name: str, args: list):
        decl = self.program.decls.get(name)
        if decl is None:
            raise GuestError(f"unknown function {name}")
        return self.call_decl(decl, args)

    def call_decl(self, decl: FunctionDecl, args: list):
        if len(args) != len(decl.params):
            raise GuestError(
                f"{decl.name} takes {len(decl.params)} arguments, got {len(args)}")
        env = dict(zip(decl.params, args))
        try:
            self.eval(decl.body, env)
        except ReturnSignal as ret:
            return ret.value
        return None

    # -- evaluation ----------------------------------------------------------

    def eval(self, node, env):
        k = node.kind
        c = node.children
        try:
            if k == "lit":
                return node.value
            if k == "var":
                return self.read_var(node.name, env, node)
            if k in ("add", "sub", "mul", "div", "pow", "concat"):
                return apply_binary(k, None, self.eval(c[0], env), self.eval(c[1], env))
            if k in ("compare", "logical"):
                return apply_binary(k, node.op, self.eval(c[0], env), self.eval(c[1], env))
            if k == "index":
                return apply_index(self.eval(c[0], env), self.eval(c[1], env))
            if k == "index_set":
                return apply_index_set(self.eval(c[0], env), self.eval(c[1], env),
                                       self.eval(c[2], env))
            if k == "block":
                result = None
                for stmt in c:
                    result = self.eval(stmt, env)
                return result
            if k == "let":
                value = self.eval(c[0], env)
                (env if env is not None else self.globals)[node.name] = value
                return None
            if k == "assign":
                value = self.eval(c[0], env)
                if env is not None and node.name in env:
                    env[node.name] = value
                else:
                    self.globals[node.name] = value
                return None
            if k == "if":
                cond = require_bool(self.eval(c[0], env), "if condition")
                if cond:
                    self.eval(c[1], env)
                elif len(c) == 3:
                    self.eval(c[2], env)
                return None
            if k == "while":
                while require_bool(self.eval(c[0], env), "while condition"):
                    self.eval(c[1], env)
                return None
            if k == "return":
                raise ReturnSignal(self.eval(c[0], env) if c else None)
            if k == "call":
                args = [self.eval(a, env) for a in c]
                return self.dispatch(node.name, args, env, node)
            if k == "builtin":
                args = [self.eval(a, env) for a in c]
                return run_builtin(node.name, args, out=self.out)
            if k == "fndef":
                return None
            if k == "use":
                if self.poly is None:
                    raise GuestError("no polyglot context for use")
                self.globals[node.name] = self.poly.import_for(
                    self.program.lang, node.name)
                return None
            if k == "export":
                if self.poly is None:
                    raise GuestError("no polyglot context for export")
                value = self.eval(c[0], env)
                self.poly.export_from(self.program.lang, node.name, value)
                self.globals[node.name] = value
                return None
        except ReturnSignal:
            raise
        except GuestError as err:
            raise err.located(node.id, node.pos)
        raise GuestError(f"cannot evaluate node kind {k}", node.id, node.pos)

    def read_var(self, name, env, node):
        if env is not None and name in env:
            return env[name]
        if name in self.globals:
            return self.globals[name]
        if name in self.program.decls:
            return FuncValue(name, self.program.lang)
        raise GuestError(f"unbound variable {name}", node.id, node.pos)

    def dispatch(self, name, args, env, node):
        if name in self.program.decls:
            return self.call_decl(self.program.decls[name], args)
        target = None
        if env is not None and name in env:
            target = env[name]
        elif name in self.globals:
            target = self.globals[name]
        if isinstance(target, FuncValue) and target.lang == self.program.lang:
            return self.call(target.name, args)
        if is_foreign(target):
            return target.interop_execute(args)
        raise GuestError(f"unknown function {name}", node.id, node.pos)
