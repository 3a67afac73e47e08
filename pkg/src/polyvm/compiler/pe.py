"""Partial evaluation: a stable, profiled AST becomes a High-tier graph.

Each Typed operator node contributes exactly one Guard wired before its
fast-path opcode; Generic operator nodes become calls to the generic
runtime helpers; control flow becomes structured If/Merge and
LoopBegin/LoopEnd regions with explicit Phis.

Every Guard (and every checked operation that can deopt later) captures a
FrameDesc: the live variable map plus the values of partially evaluated
enclosing expressions, keyed by source node id, so the interpreter can
resume mid-statement without re-running effects.
"""

from __future__ import annotations

from ..asttree import RewritePolicy, SPECULATIVE_KINDS, TYPED, is_stable
from ..values import TAG_BIGINT, TAG_FLOAT, TAG_INT, TAG_STR
from .ir import PINNED, FrameDesc, IrGraph, IrNode, TIER_HIGH, verify


class NotStable(Exception):
    pass


class NotCompilable(Exception):
    """The function uses a construct the compiler refuses (dynamic locality
    or return inside a loop); it stays interpreted."""


class GraphCache:
    """(function id, specialization signature) -> parsed High-tier graph.
    Hits hand out structural copies; cached graphs are never mutated."""

    def __init__(self):
        self._graphs: dict[tuple, IrGraph] = {}
        self.hits = 0
        self.misses = 0

    def get(self, key: tuple) -> IrGraph | None:
        g = self._graphs.get(key)
        if g is not None:
            self.hits += 1
            return g.copy()
        return None

    def put(self, key: tuple, graph: IrGraph) -> None:
        self._graphs[key] = graph.copy()


def spec_signature(decl) -> tuple:
    return tuple(
        (node.id, node.spec.state, node.spec.tag)
        for node in decl.body.walk()
    )


# ---------------------------------------------------------------------------
# Definite-locality analysis
# ---------------------------------------------------------------------------

def analyze_locals(decl) -> dict[int, str]:
    """Resolve every var/assign to 'local' or 'global'.

    A name is local once a `let` (or parameter binding) has definitely
    executed.  Reads or writes whose locality depends on the path taken
    raise NotCompilable; such functions stay interpreted.
    """
    let_names = {n.name for n in decl.body.walk() if n.kind == "let"}
    resolution: dict[int, str] = {}

    def visit(node, definite: frozenset) -> frozenset:
        k = node.kind
        if k == "var":
            if node.name in definite:
                resolution[node.id] = "local"
            elif node.name in let_names or node.name in decl.params:
                raise NotCompilable(
                    f"read of {node.name} is not definitely assigned")
            else:
                resolution[node.id] = "global"
            return definite
        if k == "call":
            # A call target that is sometimes a local binding and sometimes
            # not cannot be compiled to a fixed dispatch.
            if node.name in let_names and node.name not in definite:
                raise NotCompilable(
                    f"call target {node.name} has path-dependent locality")
            for child in node.children:
                definite = visit(child, definite)
            return definite
        if k == "let":
            definite = visit(node.children[0], definite)
            resolution[node.id] = "local"
            return definite | {node.name}
        if k == "assign":
            definite = visit(node.children[0], definite)
            if node.name in definite:
                resolution[node.id] = "local"
            elif node.name in let_names:
                raise NotCompilable(
                    f"write to {node.name} has path-dependent locality")
            else:
                resolution[node.id] = "global"
            return definite
        if k == "if":
            definite = visit(node.children[0], definite)
            after_then = visit(node.children[1], definite)
            if len(node.children) == 3:
                after_else = visit(node.children[2], definite)
                return after_then & after_else
            return definite
        if k == "while":
            definite = visit(node.children[0], definite)
            visit(node.children[1], definite)
            return definite
        for child in node.children:
            definite = visit(child, definite)
        return definite

    visit(decl.body, frozenset(decl.params))
    return resolution


def _contains_return_in_loop(body) -> bool:
    def scan(node, in_loop: bool) -> bool:
        if node.kind == "return" and in_loop:
            return True
        inside = in_loop or node.kind == "while"
        return any(scan(c, inside) for c in node.children)
    return scan(body, False)


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------

_ARITH_OPCODE = {"add": "Add", "sub": "Sub", "mul": "Mul", "div": "Div",
                 "concat": "Add"}


class _Builder:
    def __init__(self, decl, profile, func_id: str):
        self.decl = decl
        self.profile = profile
        self.g = IrGraph(func_id, TIER_HIGH)
        self.vars: dict[str, int] = {}
        self.pending: list[tuple[int, int]] = []
        self.tail: IrNode | None = None
        self.consts: dict[tuple, int] = {}
        self.locals = analyze_locals(decl)
        self.guard_count = 0

    # -- plumbing -------------------------------------------------------------

    def pin(self, node: IrNode) -> IrNode:
        if self.tail is not None:
            self.tail.control_next.insert(0, node.id)
        self.tail = node
        return node

    def const(self, value) -> int:
        key = (type(value).__name__, value)
        try:
            return self.consts[key]
        except (KeyError, TypeError):
            pass
        node = self.g.add("Const", value=value)
        if isinstance(key[1], (int, float, str, bool, type(None))):
            self.consts[key] = node.id
        return node.id

    def snapshot_frame(self, node) -> tuple[FrameDesc, list[int]]:
        inputs: list[int] = []
        index: dict[int, int] = {}

        def slot(ir_id: int) -> int:
            if ir_id not in index:
                index[ir_id] = len(inputs)
                inputs.append(ir_id)
            return index[ir_id]

        var_slots = {name: slot(v) for name, v in self.vars.items()}
        pending_slots = {ast_id: slot(v) for ast_id, v in self.pending}
        desc = FrameDesc(self.g.function, node.id, var_slots, pending_slots)
        return desc, inputs

    def new_deopt(self, node) -> IrNode:
        desc, inputs = self.snapshot_frame(node)
        return self.g.add("Deopt", data_inputs=inputs,
                          guard_id=node.id, frame=desc)

    def emit_guard(self, node, expected: tuple[str, ...],
                   guarded: list[int]) -> IrNode:
        deopt = self.new_deopt(node)
        guard = self.g.add("Guard", data_inputs=guarded,
                           control_next=[deopt.id],
                           guard_id=node.id, expected=expected, src=node.id)
        self.pin(guard)
        self.guard_count += 1
        return deopt

    # -- expressions ------------------------------------------------------------

    def expr(self, node) -> int:
        k = node.kind
        if k == "lit":
            return self.const(node.value)
        if k == "var":
            if self.locals[node.id] == "local":
                return self.vars[node.name]
            call = self.g.add("Call", callee="rt:getglobal", name=node.name,
                              src=node.id)
            self.pin(call)
            return call.id
        if k in SPECULATIVE_KINDS:
            return self.speculative(node)
        if k == "call":
            return self.call_expr(node)
        if k == "builtin":
            return self.builtin_expr(node)
        raise NotCompilable(f"no expression translation for {k}")

    def _eval_children(self, node) -> list[int]:
        values: list[int] = []
        for child in node.children:
            v = self.expr(child)
            values.append(v)
            self.pending.append((child.id, v))
        return values

    def _pop_children(self, node) -> None:
        del self.pending[len(self.pending) - len(node.children):]

    def speculative(self, node) -> int:
        values = self._eval_children(node)
        k = node.kind
        if node.spec.state == TYPED:
            tag = node.spec.tag
            if k == "index":
                deopt = self.emit_guard(node, node.guard.expected, [values[1]])
                load = self.g.add("LoadField", data_inputs=values,
                                  control_next=[deopt.id],
                                  src=node.id, guard_id=node.id)
                self.pin(load)
                result = load.id
            elif k == "pow":
                deopt = self.emit_guard(node, node.guard.expected, values)
                call = self.g.add("Call", data_inputs=values, callee="op:pow",
                                  src=node.id, tag=tag)
                self.pin(call)
                result = call.id
            elif k in ("compare", "logical"):
                self.emit_guard(node, node.guard.expected, values)
                cmp = self.g.add("Compare", data_inputs=values,
                                 op=node.op, tag=tag, src=node.id)
                result = cmp.id
            elif k == "div":
                deopt = self.emit_guard(node, node.guard.expected, values)
                div = self.g.add("Div", data_inputs=values, tag=tag,
                                 src=node.id)
                self.pin(div)  # trapping: never reordered or removed
                result = div.id
            else:
                deopt = self.emit_guard(node, node.guard.expected, values)
                op = self.g.add(_ARITH_OPCODE[k], data_inputs=values,
                                tag=tag, src=node.id)
                if tag == TAG_INT and k in ("add", "sub", "mul"):
                    # Word fast path: pinned, with an overflow deopt edge
                    # shared with the type guard's frame.
                    op.meta["checked"] = True
                    op.control_next = [deopt.id]
                    self.pin(op)
                result = op.id
        else:
            callee = f"generic:{k}"
            if k in ("compare", "logical"):
                callee = f"generic:{k}:{node.op}"
            call = self.g.add("Call", data_inputs=values, callee=callee,
                              src=node.id)
            self.pin(call)
            result = call.id
        self._pop_children(node)
        return result

    def call_expr(self, node) -> int:
        values = self._eval_children(node)
        name = node.name
        desc, frame_inputs = self.snapshot_frame(node)
        site = self.profile.exec_count(node.id) if self.profile else 0
        if name in self.decl_names:
            call = self.g.add("Call", data_inputs=values, callee=f"fn:{name}",
                              src=node.id, site_count=site)
        elif name in self.vars:
            target = self.vars[name]
            call = self.g.add("Call", data_inputs=[target, *values],
                              callee="value", src=node.id)
        else:
            call = self.g.add("Call", data_inputs=values,
                              callee=f"dynglobal:{name}", src=node.id)
        call.meta["frame"] = desc
        call.meta["frame_inputs"] = frame_inputs
        self.pin(call)
        self._pop_children(node)
        return call.id

    def builtin_expr(self, node) -> int:
        values = self._eval_children(node)
        if node.name == "pair":
            alloc = self.g.add("Alloc", nfields=2, src=node.id)
            self.pin(alloc)
            for i, v in enumerate(values):
                store = self.g.add("StoreField",
                                   data_inputs=[alloc.id, self.const(i), v],
                                   src=node.id, safe=True)
                self.pin(store)
            self._pop_children(node)
            return alloc.id
        call = self.g.add("Call", data_inputs=values,
                          callee=f"builtin:{node.name}", src=node.id)
        self.pin(call)
        self._pop_children(node)
        return call.id

    # -- statements ---------------------------------------------------------------

    def statement(self, node) -> None:
        k = node.kind
        if k in ("let", "assign"):
            value = self.expr(node.children[0])
            if self.locals[node.id] == "local":
                self.vars[node.name] = value
            else:
                call = self.g.add("Call", data_inputs=[value],
                                  callee="rt:setglobal", name=node.name,
                                  src=node.id)
                self.pin(call)
            return
        if k == "index_set":
            values = self._eval_children(node)
            deopt = self.new_deopt(node)
            store = self.g.add("StoreField", data_inputs=values,
                               control_next=[deopt.id],
                               src=node.id, guard_id=node.id)
            self.pin(store)
            self._pop_children(node)
            return
        if k == "return":
            if node.children:
                value = self.expr(node.children[0])
            else:
                value = self.const(None)
            ret = self.g.add("Return", data_inputs=[value], src=node.id)
            self.pin(ret)
            self.tail = None
            return
        if k == "if":
            self.if_stmt(node)
            return
        if k == "while":
            self.while_stmt(node)
            return
        if k == "block":
            for stmt in node.children:
                if self.tail is None:
                    return
                self.statement(stmt)
            return
        if k == "use":
            call = self.g.add("Call", callee="rt:use", name=node.name,
                              src=node.id)
            self.pin(call)
            return
        if k == "export":
            value = self.expr(node.children[0])
            call = self.g.add("Call", data_inputs=[value],
                              callee="rt:export", name=node.name, src=node.id)
            self.pin(call)
            return
        if k == "fndef":
            return
        # expression statement
        self.expr(node)

    def if_stmt(self, node) -> None:
        cond = self.expr(node.children[0])
        if_node = self.g.add("If", data_inputs=[cond], src=node.id,
                             what="if condition")
        self.pin(if_node)
        before_vars = dict(self.vars)

        then_begin = self.g.add("Begin")
        self.tail = then_begin
        self.statement(node.children[1])
        then_tail, then_vars = self.tail, dict(self.vars)

        self.vars = dict(before_vars)
        else_begin = self.g.add("Begin")
        self.tail = else_begin
        if len(node.children) == 3:
            self.statement(node.children[2])
        else_tail, else_vars = self.tail, dict(self.vars)

        if_node.control_next = [then_begin.id, else_begin.id]

        if then_tail is None and else_tail is None:
            self.tail = None
            return
        if then_tail is None:
            self.tail, self.vars = else_tail, else_vars
            return
        if else_tail is None:
            self.tail, self.vars = then_tail, then_vars
            return
        merge = self.g.add("Merge", preds=[then_tail.id, else_tail.id])
        if_node.meta["merge"] = merge.id
        then_tail.control_next.insert(0, merge.id)
        else_tail.control_next.insert(0, merge.id)
        merged_vars = {}
        phis = []
        for name in sorted(set(then_vars) & set(else_vars)):
            tv, ev = then_vars[name], else_vars[name]
            if tv == ev:
                merged_vars[name] = tv
            else:
                phi = self.g.add("Phi", data_inputs=[tv, ev],
                                 anchor=merge.id, var=name)
                phis.append(phi.id)
                merged_vars[name] = phi.id
        merge.meta["phis"] = phis
        self.tail = merge
        self.vars = merged_vars

    def while_stmt(self, node) -> None:
        assigned = {n.name for n in node.children[1].walk()
                    if n.kind in ("let", "assign")
                    and self.locals.get(n.id) == "local"}
        loop_vars = sorted(assigned & set(self.vars))
        header = self.g.add("LoopBegin")
        self.pin(header)
        phis: dict[str, IrNode] = {}
        for name in loop_vars:
            phi = self.g.add("Phi", data_inputs=[self.vars[name]],
                             anchor=header.id, var=name, loop=True)
            phis[name] = phi
            self.vars[name] = phi.id
        header.meta["phis"] = [p.id for p in phis.values()]

        cond = self.expr(node.children[0])
        if_node = self.g.add("If", data_inputs=[cond], src=node.id,
                             what="while condition")
        self.pin(if_node)

        body_begin = self.g.add("Begin")
        exit_begin = self.g.add("Begin")
        if_node.control_next = [body_begin.id, exit_begin.id]
        header.meta["body"] = body_begin.id
        header.meta["exit"] = exit_begin.id
        header.meta["branch"] = if_node.id

        header_vars = dict(self.vars)
        self.tail = body_begin
        self.statement(node.children[1])
        loop_end = self.g.add("LoopEnd")
        self.pin(loop_end)
        loop_end.control_next = [header.id]
        self.g.back_edges.add((loop_end.id, header.id))
        for name, phi in phis.items():
            phi.data_inputs.append(self.vars[name])

        self.tail = exit_begin
        self.vars = header_vars

    # -- entry ------------------------------------------------------------------

    def build(self, decl_names) -> IrGraph:
        self.decl_names = decl_names
        entry = self.g.add("Begin")
        self.g.entry = entry.id
        self.tail = entry
        for i, name in enumerate(self.decl.params):
            param = self.g.add("Param", index=i, name=name)
            self.vars[name] = param.id
        self.statement(self.decl.body)
        if self.tail is not None:
            ret = self.g.add("Return", data_inputs=[self.const(None)])
            self.pin(ret)
        prune_dead_values(self.g)
        return self.g


_PURE_RAW_OPS = frozenset({"fadd", "fsub", "fmul", "xadd", "xsub", "xmul",
                           "concat"})


def _pure_raw(node) -> bool:
    op = node.meta.get("op", "")
    return op in _PURE_RAW_OPS or op.startswith("cmp_")


def prune_dead_values(g: IrGraph) -> None:
    """Drop floating pure nodes (and unanchored Phis) nothing uses.

    Values referenced only by a call site's frame snapshot stay alive: they
    become real deopt inputs if the callee is inlined.
    """
    changed = True
    while changed:
        changed = False
        users = g.users()
        for node in g.nodes.values():
            for fi in node.meta.get("frame_inputs", ()):
                if fi in users:
                    users[fi].append(node.id)
        for nid, node in list(g.nodes.items()):
            if node.opcode == "Param":
                continue
            if node.opcode in PINNED:
                # lowered pure raw ops float (no control edges) and are
                # removable like any other pure value
                if not (node.opcode == "RawOp" and not node.control_next
                        and _pure_raw(node)):
                    continue
            if node.opcode == "Phi":
                anchor = node.meta.get("anchor")
                if anchor in g.nodes:
                    real_users = [u for u in users[nid] if u != nid]
                    if real_users:
                        continue
                    anchor_node = g.nodes[anchor]
                    anchor_node.meta["phis"] = [
                        p for p in anchor_node.meta.get("phis", []) if p != nid]
                    g.remove(nid)
                    changed = True
                    continue
                g.remove(nid)
                changed = True
                continue
            if not users[nid]:
                g.remove(nid)
                changed = True


def partial_evaluate(decl, profile, policy: RewritePolicy,
                     func_id: str | None = None,
                     decl_names: frozenset | None = None) -> IrGraph:
    """PE contract: requires a stable tree; output passes verify and holds
    one Guard per Typed AST node."""
    if not is_stable(decl.body, policy):
        raise NotStable(f"{decl.name} is not stable")
    if _contains_return_in_loop(decl.body):
        raise NotCompilable("return inside a loop body")
    builder = _Builder(decl, profile, func_id or decl.name)
    graph = builder.build(decl_names if decl_names is not None
                          else frozenset({decl.name}))
    problems = verify(graph)
    if problems:
        raise AssertionError(
            f"partial evaluation produced an invalid graph: {problems}")
    return graph


def count_guards(g: IrGraph) -> int:
    return sum(1 for n in g.nodes.values() if n.opcode == "Guard")


def count_typed(root) -> int:
    return sum(1 for n in root.walk() if n.spec.state == TYPED)
