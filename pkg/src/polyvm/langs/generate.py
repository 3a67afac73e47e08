"""Seeded random program generator for differential testing.

Generates well-scoped nx and st source with bounded loops and a single
`main` function taking one parameter.  Expressions are depth-bounded at 8.
Divisors are shaped as (d*d + 1) so generated programs do not trip division
by zero; other guest errors (overflowing float conversions, stray type
mixes through generic paths) remain possible and are part of what the
differential suite compares.
"""

from __future__ import annotations

import random

MAX_DEPTH = 8


class _Gen:
    lang = "?"

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.lines: list[str] = []
        self.tmp = 0

    def fresh(self, prefix: str = "v") -> str:
        self.tmp += 1
        return f"{prefix}{self.tmp}"

    def emit(self, line: str, indent: int) -> None:
        self.lines.append("    " * indent + line)


class NxGen(_Gen):
    lang = "nx"

    def int_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        ints = [v for v, t in scope.items() if t == "int"]
        if depth >= MAX_DEPTH or rng.random() < 0.34:
            if ints and rng.random() < 0.6:
                return rng.choice(ints)
            return str(rng.randint(0, 9))
        roll = rng.random()
        a = self.int_expr(scope, depth + 1)
        b = self.int_expr(scope, depth + 1)
        if roll < 0.38:
            return f"({a} + {b})"
        if roll < 0.58:
            return f"({a} - {b})"
        if roll < 0.78:
            return f"({a} * {b})"
        if roll < 0.88:
            d = self.int_expr(scope, depth + 2)
            return f"({a} / (({d} * {d}) + 1))"
        if roll < 0.95:
            base = self.int_expr(scope, depth + 2)
            return f"({base} ^ {rng.randint(0, 4)})"
        if self.helpers and depth < MAX_DEPTH - 1:
            name, nparams = rng.choice(self.helpers)
            args = ", ".join(self.int_expr(scope, depth + 2) for _ in range(nparams))
            return f"{name}({args})"
        return f"({a} + {b})"

    def float_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        floats = [v for v, t in scope.items() if t == "float"]
        if depth >= MAX_DEPTH or rng.random() < 0.4:
            if floats and rng.random() < 0.6:
                return rng.choice(floats)
            return f"{rng.randint(0, 9)}.{rng.randint(0, 99)}"
        roll = rng.random()
        a = self.float_expr(scope, depth + 1)
        if roll < 0.3:
            return f"({a} + {self.float_expr(scope, depth + 1)})"
        if roll < 0.55:
            return f"({a} * {self.float_expr(scope, depth + 1)})"
        if roll < 0.7:
            return f"({a} - {self.int_expr(scope, depth + 1)})"
        if roll < 0.85:
            d = self.float_expr(scope, depth + 2)
            return f"({a} / (({d} * {d}) + 1.0))"
        return f"({a} + {self.int_expr(scope, depth + 1)})"

    def bool_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        if depth >= MAX_DEPTH or rng.random() < 0.3:
            op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
            return f"({self.int_expr(scope, depth + 1)} {op} {self.int_expr(scope, depth + 1)})"
        roll = rng.random()
        if roll < 0.3:
            gate = rng.choice(["&&", "||"])
            return (f"({self.bool_expr(scope, depth + 1)} {gate} "
                    f"{self.bool_expr(scope, depth + 1)})")
        if roll < 0.5:
            op = rng.choice(["<", ">", "==", "!="])
            return (f"({self.float_expr(scope, depth + 1)} {op} "
                    f"{self.float_expr(scope, depth + 1)})")
        op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        return f"({self.int_expr(scope, depth + 1)} {op} {self.int_expr(scope, depth + 1)})"

    def statements(self, scope: dict[str, str], indent: int, budget: int,
                   allow_loop: bool) -> None:
        rng = self.rng
        for _ in range(budget):
            roll = rng.random()
            if roll < 0.3:
                name = self.fresh()
                kind = rng.choice(["int", "int", "float"])
                expr = self.int_expr(scope, 3) if kind == "int" else self.float_expr(scope, 3)
                self.emit(f"let {name} = {expr};", indent)
                scope[name] = kind
            elif roll < 0.45:
                mutable = [v for v, t in scope.items() if t in ("int", "float")
                           and not v.startswith("i_")]
                if mutable:
                    name = rng.choice(mutable)
                    expr = (self.int_expr(scope, 3) if scope[name] == "int"
                            else self.float_expr(scope, 3))
                    self.emit(f"{name} = {expr};", indent)
            elif roll < 0.6 and allow_loop:
                counter = self.fresh("i_")
                bound = rng.randint(2, 4)
                self.emit(f"let {counter} = 0;", indent)
                self.emit(f"while ({counter} < {bound}) {{", indent)
                inner = dict(scope)
                inner[counter] = "int"
                self.statements(inner, indent + 1, rng.randint(1, 2), False)
                self.emit(f"{counter} = {counter} + 1;", indent + 1)
                self.emit("}", indent)
                scope[counter] = "int"
            elif roll < 0.72:
                cond = self.bool_expr(scope, 4)
                self.emit(f"if ({cond}) {{", indent)
                self.statements(dict(scope), indent + 1, 1, False)
                if rng.random() < 0.6:
                    self.emit("} else {", indent)
                    self.statements(dict(scope), indent + 1, 1, False)
                self.emit("}", indent)
            elif roll < 0.82:
                p = self.fresh("p")
                self.emit(f"let {p} = pair({self.int_expr(scope, 4)}, "
                          f"{self.int_expr(scope, 4)});", indent)
                scope[p] = "pair"
                target = self.fresh()
                self.emit(f"let {target} = ({p}[0] + {p}[1]);", indent)
                scope[target] = "int"
                if rng.random() < 0.4:
                    self.emit(f"{p}[{rng.randint(0, 1)}] = {self.int_expr(scope, 4)};",
                              indent)
                    follow = self.fresh()
                    self.emit(f"let {follow} = {p}[{rng.randint(0, 1)}];", indent)
                    scope[follow] = "int"
            else:
                self.emit(f"print({self.int_expr(scope, 3)});", indent)

    def helper_fn(self, name: str, nparams: int) -> None:
        params = [f"a{i}" for i in range(nparams)]
        scope = {p: "int" for p in params}
        self.emit(f"fn {name}({', '.join(params)}) {{", 0)
        self.statements(scope, 1, self.rng.randint(1, 2), False)
        self.emit(f"return {self.int_expr(scope, 2)};", 1)
        self.emit("}", 0)

    def generate(self) -> str:
        rng = self.rng
        self.helpers: list[tuple[str, int]] = []
        for i in range(rng.randint(1, 2)):
            name, nparams = f"h{i}", rng.randint(1, 2)
            self.helper_fn(name, nparams)
            self.helpers.append((name, nparams))
        scope = {"x": "int"}
        self.emit("fn main(x) {", 0)
        counter = self.fresh("i_")
        bound = rng.randint(2, 4)
        self.emit(f"let acc = x;", 1)
        scope["acc"] = "int"
        self.emit(f"let {counter} = 0;", 1)
        self.emit(f"while ({counter} < {bound}) {{", 1)
        inner = dict(scope)
        inner[counter] = "int"
        name, nparams = rng.choice(self.helpers)
        args = ", ".join(self.int_expr(inner, 4) for _ in range(nparams))
        self.emit(f"acc = (acc + {name}({args}));", 2)
        self.statements(inner, 2, rng.randint(1, 2), False)
        self.emit(f"{counter} = {counter} + 1;", 2)
        self.emit("}", 1)
        scope[counter] = "int"
        self.statements(scope, 1, rng.randint(1, 3), True)
        self.emit(f"print(acc);", 1)
        self.emit(f"return {self.int_expr(scope, 2)};", 1)
        self.emit("}", 0)
        return "\n".join(self.lines) + "\n"


_ST_WORDS = ("ab", "ba", "abc", "aab", "bb", "a", "b", "c", "")
_ST_PATTERNS = ("a*", "*b", "a?c", "ab*", "*", "?", "a*b", "??")


class StGen(_Gen):
    lang = "st"

    def str_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        strs = [v for v, t in scope.items() if t == "str"]
        if depth >= MAX_DEPTH or rng.random() < 0.4:
            if strs and rng.random() < 0.6:
                return rng.choice(strs)
            return f'"{rng.choice(_ST_WORDS)}"'
        roll = rng.random()
        a = self.str_expr(scope, depth + 1)
        if roll < 0.45:
            return f"({a} ++ {self.str_expr(scope, depth + 1)})"
        if roll < 0.7:
            start = self.int_expr(scope, depth + 2)
            return f"substr({a}, {start}, {rng.randint(0, 4)})"
        if roll < 0.85:
            return f"show({self.int_expr(scope, depth + 1)})"
        return f"({a} ++ show({self.int_expr(scope, depth + 2)}))"

    def int_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        ints = [v for v, t in scope.items() if t == "int"]
        if depth >= MAX_DEPTH or rng.random() < 0.45:
            if ints and rng.random() < 0.5:
                return rng.choice(ints)
            return str(rng.randint(0, 6))
        a = self.int_expr(scope, depth + 1)
        b = self.int_expr(scope, depth + 1)
        if rng.random() < 0.4:
            return f"({a} - {b})"
        if rng.random() < 0.6:
            return f"len({self.str_expr(scope, depth + 1)})"
        return f"({a} + {b})"

    def bool_expr(self, scope: dict[str, str], depth: int) -> str:
        rng = self.rng
        roll = rng.random()
        if roll < 0.35:
            return (f"match(\"{rng.choice(_ST_PATTERNS)}\", "
                    f"{self.str_expr(scope, depth + 1)})")
        if roll < 0.55:
            return (f"({self.str_expr(scope, depth + 1)} ~ "
                    f"\"{rng.choice(_ST_PATTERNS)}\")")
        if roll < 0.75:
            op = rng.choice(["==", "!="])
            return (f"({self.str_expr(scope, depth + 1)} {op} "
                    f"{self.str_expr(scope, depth + 1)})")
        op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        return f"({self.int_expr(scope, depth + 1)} {op} {self.int_expr(scope, depth + 1)})"

    def statements(self, scope: dict[str, str], indent: int, budget: int,
                   allow_loop: bool) -> None:
        rng = self.rng
        for _ in range(budget):
            roll = rng.random()
            if roll < 0.35:
                name = self.fresh("s")
                self.emit(f"let {name} = {self.str_expr(scope, 3)};", indent)
                scope[name] = "str"
            elif roll < 0.5:
                name = self.fresh("n")
                self.emit(f"let {name} = {self.int_expr(scope, 3)};", indent)
                scope[name] = "int"
            elif roll < 0.65 and allow_loop:
                counter = self.fresh("i_")
                bound = rng.randint(2, 4)
                acc = self.fresh("s")
                self.emit(f"let {acc} = \"{rng.choice(_ST_WORDS)}\";", indent)
                self.emit(f"let {counter} = 0;", indent)
                self.emit(f"while ({counter} < {bound}) {{", indent)
                inner = dict(scope)
                inner[counter] = "int"
                inner[acc] = "str"
                self.emit(f"{acc} = ({acc} ++ {self.str_expr(inner, 4)});", indent + 1)
                self.emit(f"{counter} = {counter} + 1;", indent + 1)
                self.emit("}", indent)
                scope[acc] = "str"
                scope[counter] = "int"
            elif roll < 0.8:
                cond = self.bool_expr(scope, 4)
                self.emit(f"if ({cond}) {{", indent)
                self.statements(dict(scope), indent + 1, 1, False)
                if rng.random() < 0.5:
                    self.emit("} else {", indent)
                    self.statements(dict(scope), indent + 1, 1, False)
                self.emit("}", indent)
            else:
                self.emit(f"print({self.str_expr(scope, 3)});", indent)

    def generate(self) -> str:
        rng = self.rng
        self.emit("fn trim(s, k) {", 0)
        self.emit("    return substr(s, 0, k);", 0)
        self.emit("}", 0)
        scope = {"s": "str"}
        self.emit("fn main(s) {", 0)
        self.emit("let out = s;", 1)
        scope["out"] = "str"
        counter = self.fresh("i_")
        bound = rng.randint(2, 4)
        self.emit(f"let {counter} = 0;", 1)
        self.emit(f"while ({counter} < {bound}) {{", 1)
        inner = dict(scope)
        inner[counter] = "int"
        self.emit(f"out = trim((out ++ {self.str_expr(inner, 4)}), 8);", 2)
        self.statements(inner, 2, 1, False)
        self.emit(f"{counter} = {counter} + 1;", 2)
        self.emit("}", 1)
        scope[counter] = "int"
        self.statements(scope, 1, rng.randint(1, 2), True)
        self.emit("print(out);", 1)
        self.emit("return (len(out) + len(s));", 1)
        self.emit("}", 0)
        return "\n".join(self.lines) + "\n"


def generate_program(lang: str, seed: int) -> str:
    if lang == "nx":
        return NxGen(seed).generate()
    if lang == "st":
        return StGen(seed).generate()
    raise ValueError(f"unknown language {lang!r}")
