"""The specializing interpreter and the deopt resume machinery.

execute() runs one node under the rewrite protocol: an Uninitialized
speculative node types itself on first execution, a Typed node checks its
guard and rewrites on failure or on Int overflow, a Generic node runs the
semantic kernel directly.  Non-speculative kinds (literals, variable
accesses, control flow, calls, builtins) initialize straight to Generic on
first execution without spending rewrite budget or logging events.

resume_frames() re-enters this interpreter from compiled code after a
guard failure: it executes the failing node from captured operand values,
then walks the recorded ancestor path outward, supplying already-computed
subexpression values from the restored frame instead of re-evaluating
their subtrees (whose effects already happened in compiled code).
"""

from __future__ import annotations

from .asttree import (
    GENERIC, STATE_GENERIC, TYPED, UNINIT, AstNode, RewritePolicy,
    SPECULATIVE_KINDS, check_guard, rewrite,
)
from .langs.builtins import is_foreign, run_builtin
from .values import (
    TAG_BIGINT, WORD_MAX, WORD_MIN, FuncValue, GuestError, apply_binary,
    apply_index, apply_index_set, classify, require_bool,
)


class ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


_ARITH_PROMOTES = frozenset({"add", "sub", "mul", "pow"})


class SpecializingInterpreter:
    """Tree walker with type-specialization state; one per engine.

    The host supplies shared state: counters, log, policy, globals, decls,
    print sink, polyglot bindings, and function dispatch (so nested calls
    flow through the engine's hot-spot machinery).
    """

    def __init__(self, host):
        self.host = host

    # -- entry points --------------------------------------------------------

    def run_function(self, decl, args: list):
        env = dict(zip(decl.params, args))
        try:
            self.execute(decl.body, env)
        except ReturnSignal as ret:
            return ret.value
        return None

    def run_top(self, program):
        result = None
        for stmt in program.root.children:
            result = self.execute(stmt, None)
        return result

    # -- single-node execution ----------------------------------------------

    def execute(self, node: AstNode, env):
        host = self.host
        host.counters.interp_node_execs += 1
        node.exec_count += 1
        node.execs_since_rewrite += 1
        k = node.kind
        if k in SPECULATIVE_KINDS:
            c = node.children
            if k == "index":
                obj = self.execute(c[0], env)
                operands = (self.execute(c[1], env),)
                return self._speculative(node, operands, (obj, operands[0]))
            operands = (self.execute(c[0], env), self.execute(c[1], env))
            return self._speculative(node, operands, operands)
        if node.spec.state == UNINIT:
            node.spec = STATE_GENERIC
        return self._structural(node, env)

    def _speculative(self, node: AstNode, guarded: tuple, all_operands: tuple):
        """Run the rewrite protocol for an operator node whose operand
        values are already computed."""
        host = self.host
        tags = tuple(classify(v) for v in guarded)
        node.observed_tags.update(tags)
        state = node.spec.state
        if state == UNINIT:
            rewrite(node, tags, host.policy, host.log)
        elif state == TYPED:
            if not check_guard(node.guard, tags):
                host.log.guard_fail(node.id, node.spec)
                rewrite(node, tags, host.policy, host.log)
        try:
            result = self._apply(node, all_operands)
        except GuestError as err:
            raise err.located(node.id, node.pos)
        if (node.spec.state == TYPED and node.spec.tag == "Int"
                and node.kind in _ARITH_PROMOTES
                and type(result) is int
                and not WORD_MIN <= result <= WORD_MAX):
            # Overflow guard: the word fast path promotes to BigInt.
            rewrite(node, tags, host.policy, host.log, force_tag=TAG_BIGINT)
        return result

    def _apply(self, node: AstNode, operands: tuple):
        k = node.kind
        if k == "index":
            obj, idx = operands
            if node.spec.state == TYPED and not hasattr(obj, "slots"):
                # Object-shape speculation failed: not a tag mismatch, so
                # the node drops straight to Generic.
                self.host.log.guard_fail(node.id, node.spec)
                rewrite(node, (node.spec.tag,), self.host.policy,
                        self.host.log, force_tag=GENERIC)
            return apply_index(obj, idx)
        if k in ("compare", "logical"):
            return apply_binary(k, node.op, operands[0], operands[1])
        return apply_binary(k, None, operands[0], operands[1])

    # -- structural / non-speculative kinds -----------------------------------

    def _structural(self, node: AstNode, env):
        host = self.host
        k = node.kind
        c = node.children
        try:
            if k == "lit":
                return node.value
            if k == "var":
                return self.read_var(node.name, env, node)
            if k == "block":
                result = None
                for stmt in c:
                    result = self.execute(stmt, env)
                return result
            if k == "let":
                value = self.execute(c[0], env)
                (env if env is not None else host.globals)[node.name] = value
                return None
            if k == "assign":
                value = self.execute(c[0], env)
                if env is not None and node.name in env:
                    env[node.name] = value
                else:
                    host.globals[node.name] = value
                return None
            if k == "if":
                cond = require_bool(self.execute(c[0], env), "if condition")
                if cond:
                    self.execute(c[1], env)
                elif len(c) == 3:
                    self.execute(c[2], env)
                return None
            if k == "while":
                while require_bool(self.execute(c[0], env), "while condition"):
                    self.execute(c[1], env)
                return None
            if k == "return":
                raise ReturnSignal(self.execute(c[0], env) if c else None)
            if k == "call":
                args = [self.execute(a, env) for a in c]
                return self.dispatch(node.name, args, env, node)
            if k == "builtin":
                args = [self.execute(a, env) for a in c]
                return run_builtin(node.name, args, out=host.out,
                                   alloc_hook=host.count_allocation)
            if k == "index_set":
                return apply_index_set(self.execute(c[0], env),
                                       self.execute(c[1], env),
                                       self.execute(c[2], env))
            if k == "fndef":
                return None
            if k == "use":
                host.globals[node.name] = host.poly_import(node.name)
                return None
            if k == "export":
                value = self.execute(c[0], env)
                host.poly_export(node.name, value)
                host.globals[node.name] = value
                return None
        except ReturnSignal:
            raise
        except GuestError as err:
            raise err.located(node.id, node.pos)
        raise GuestError(f"cannot evaluate node kind {k}", node.id, node.pos)

    def read_var(self, name, env, node):
        host = self.host
        if env is not None and name in env:
            return env[name]
        if name in host.globals:
            return host.globals[name]
        if name in host.decls:
            return FuncValue(name, host.lang)
        raise GuestError(f"unbound variable {name}", node.id, node.pos)

    def dispatch(self, name, args, env, node):
        host = self.host
        if name in host.decls:
            return host.call_function(name, args)
        target = None
        if env is not None and name in env:
            target = env[name]
        elif name in host.globals:
            target = host.globals[name]
        if isinstance(target, FuncValue) and target.lang == host.lang:
            return host.call_function(target.name, args)
        if is_foreign(target):
            return target.interop_execute(args)
        raise GuestError(f"unknown function {name}", node.id, node.pos)

    # -- deopt resume ---------------------------------------------------------

    def resume_frames(self, frames: list):
        """Resume interpretation after a deopt.

        frames is innermost-first; each entry is (decl, node, env, pending,
        mode) where pending maps AST node id -> restored value for every
        already-computed subexpression (including all children of the
        failing node), and mode describes why the innermost frame stopped:
        "guard", "overflow", or "objcheck".  Outer frames resume at their
        call sites with the inner frame's return value.
        """
        value = None
        for depth, (decl, node, env, pending, mode) in enumerate(frames):
            if depth == 0:
                value = self._resume_failing(node, pending, mode)
            else:
                value = self._resume_after_call(node, pending, value)
            value = self._unwind(decl, node, env, pending, value)
        return value

    def _resume_failing(self, node: AstNode, pending: dict, mode: str):
        host = self.host
        host.counters.interp_node_execs += 1
        node.exec_count += 1
        node.execs_since_rewrite += 1
        operands = tuple(pending[c.id] for c in node.children)
        if node.kind == "index_set":
            try:
                return apply_index_set(*operands)
            except GuestError as err:
                raise err.located(node.id, node.pos)
        if node.kind == "index":
            guarded = (operands[1],)
        else:
            guarded = operands
        tags = tuple(classify(v) for v in guarded)
        node.observed_tags.update(tags)
        if mode == "overflow":
            # Compiled word op overflowed; operand tags still match.
            if node.spec.state == TYPED:
                rewrite(node, tags, host.policy, host.log, force_tag=TAG_BIGINT)
        elif node.spec.state == TYPED:
            if not check_guard(node.guard, tags):
                host.log.guard_fail(node.id, node.spec)
                rewrite(node, tags, host.policy, host.log)
            elif mode == "objcheck":
                host.log.guard_fail(node.id, node.spec)
                rewrite(node, tags, host.policy, host.log, force_tag=GENERIC)
        try:
            return self._apply(node, operands)
        except GuestError as err:
            raise err.located(node.id, node.pos)

    def _resume_after_call(self, call_node: AstNode, pending: dict, value):
        return value  # the call's value is the inner frame's result

    def _unwind(self, decl, node: AstNode, env, pending: dict, value):
        """Walk from `node` up to the function body, continuing evaluation."""
        try:
            while node is not decl.body:
                parent = node.parent
                idx = next(i for i, ch in enumerate(parent.children) if ch is node)
                value = self._resume_parent(parent, idx, value, env, pending)
                node = parent
        except ReturnSignal as ret:
            return ret.value
        return None  # fell off the body: functions yield nil

    def _resume_parent(self, node: AstNode, child_idx: int, child_value,
                       env, pending: dict):
        host = self.host
        host.counters.interp_node_execs += 1
        node.exec_count += 1
        node.execs_since_rewrite += 1
        k = node.kind
        c = node.children
        if k in SPECULATIVE_KINDS or k in ("call", "builtin", "index_set"):
            values = []
            for i, ch in enumerate(c):
                if i < child_idx:
                    values.append(pending[ch.id])
                elif i == child_idx:
                    values.append(child_value)
                else:
                    values.append(self.execute(ch, env))
            if k in SPECULATIVE_KINDS:
                if k == "index":
                    return self._speculative(node, (values[1],), tuple(values))
                return self._speculative(node, tuple(values), tuple(values))
            if k == "call":
                return self.dispatch(node.name, values, env, node)
            if k == "builtin":
                return run_builtin(node.name, values, out=host.out,
                                   alloc_hook=host.count_allocation)
            try:
                return apply_index_set(*values)
            except GuestError as err:
                raise err.located(node.id, node.pos)
        if k == "block":
            result = child_value
            for stmt in c[child_idx + 1:]:
                result = self.execute(stmt, env)
            return result
        if k == "let":
            (env if env is not None else host.globals)[node.name] = child_value
            return None
        if k == "assign":
            if env is not None and node.name in env:
                env[node.name] = child_value
            else:
                host.globals[node.name] = child_value
            return None
        if k == "export":
            host.poly_export(node.name, child_value)
            host.globals[node.name] = child_value
            return None
        if k == "return":
            raise ReturnSignal(child_value)
        if k == "if":
            if child_idx == 0:
                cond = require_bool(child_value, "if condition")
                if cond:
                    self.execute(c[1], env)
                elif len(c) == 3:
                    self.execute(c[2], env)
            return None
        if k == "while":
            if child_idx == 0:
                if not require_bool(child_value, "while condition"):
                    return None
                self.execute(c[1], env)
            while require_bool(self.execute(c[0], env), "while condition"):
                self.execute(c[1], env)
            return None
        raise GuestError(f"cannot resume through node kind {k}",
                         node.id, node.pos)
