"""Register VM: executes the back end's RegProgram for one activation.

Values live in a flat frame (registers then spill slots); operands are
frame indexes or ("c", value) immediates.  Guard failures, word overflow
and object-shape failures raise DeoptSignal, which the engine turns into a
resumed interpretation via the guard table.
"""

from __future__ import annotations

from .langs.builtins import run_builtin
from .values import (
    GObject, GuestError, WORD_MAX, WORD_MIN, apply_binary, apply_index,
    apply_pow, classify,
)


class DeoptSignal(Exception):
    def __init__(self, pc: int, frame: list):
        self.pc = pc
        self.frame = frame


_CMP_DIRECT = {
    "cmp_lt": lambda a, b: a < b,
    "cmp_le": lambda a, b: a <= b,
    "cmp_gt": lambda a, b: a > b,
    "cmp_ge": lambda a, b: a >= b,
    "cmp_and": lambda a, b: a and b,
    "cmp_or": lambda a, b: a or b,
}


def run_program(engine, program, args: list):
    """Execute; returns the guest value.  Counter deltas are committed even
    when a deopt or guest error unwinds."""
    frame: list = [None] * program.frame_size
    for loc, a in zip(program.param_locs, args):
        frame[loc] = a
    instrs = program.instrs
    stack: list = []
    pc = 0
    executed = 0
    allocated = 0
    counters = engine.counters
    try:
        while True:
            ins = instrs[pc]
            executed += 1
            op = ins[0]
            if op == "guard":
                for o, tag in ins[1]:
                    v = frame[o] if type(o) is int else o[1]
                    if classify(v) != tag:
                        raise DeoptSignal(pc, frame)
                pc += 1
                continue
            if op == "add_ck":
                a = ins[2]
                b = ins[3]
                r = (frame[a] if type(a) is int else a[1]) + \
                    (frame[b] if type(b) is int else b[1])
                if r > WORD_MAX or r < WORD_MIN:
                    raise DeoptSignal(pc, frame)
                frame[ins[1]] = r
                pc += 1
                continue
            if op == "sub_ck":
                a, b = ins[2], ins[3]
                r = (frame[a] if type(a) is int else a[1]) - \
                    (frame[b] if type(b) is int else b[1])
                if r > WORD_MAX or r < WORD_MIN:
                    raise DeoptSignal(pc, frame)
                frame[ins[1]] = r
                pc += 1
                continue
            if op == "mul_ck":
                a, b = ins[2], ins[3]
                r = (frame[a] if type(a) is int else a[1]) * \
                    (frame[b] if type(b) is int else b[1])
                if r > WORD_MAX or r < WORD_MIN:
                    raise DeoptSignal(pc, frame)
                frame[ins[1]] = r
                pc += 1
                continue
            if op == "mov":
                s = ins[2]
                frame[ins[1]] = frame[s] if type(s) is int else s[1]
                pc += 1
                continue
            if op == "branch":
                c = frame[ins[1]] if type(ins[1]) is int else ins[1][1]
                if c is True:
                    pc = ins[2]
                elif c is False:
                    pc = ins[3]
                else:
                    raise _located(engine, ins[5], GuestError(
                        f"{ins[4]} must be a boolean, got {_describe(c)}"))
                continue
            if op == "jump":
                pc = ins[1]
                continue
            if op == "push":
                s = ins[1]
                stack.append(frame[s] if type(s) is int else s[1])
                pc += 1
                continue
            if op == "call":
                n = ins[4]
                cargs = stack[len(stack) - n:] if n else []
                if n:
                    del stack[len(stack) - n:]
                frame[ins[1]] = _dispatch_call(engine, ins[2], ins[3], cargs,
                                               ins[5])
                pc += 1
                continue
            if op == "ret":
                s = ins[1]
                return frame[s] if type(s) is int else s[1]
            if op == "lea":
                o = ins[2]
                obj = frame[o] if type(o) is int else o[1]
                i = ins[3]
                idx = frame[i] if type(i) is int else i[1]
                if (not isinstance(obj, GObject)
                        or type(idx) is not int or idx is True or idx is False
                        or not 0 <= idx < len(obj.slots)):
                    if pc in program.guard_table:
                        raise DeoptSignal(pc, frame)
                    raise AssertionError("safe lea failed: compiler bug")
                frame[ins[1]] = (obj, idx)
                pc += 1
                continue
            if op == "load":
                a = ins[2]
                addr = frame[a] if type(a) is int else a[1]
                frame[ins[1]] = addr[0].slots[addr[1]]
                pc += 1
                continue
            if op == "store":
                a = ins[1]
                addr = frame[a] if type(a) is int else a[1]
                v = ins[2]
                addr[0].slots[addr[1]] = frame[v] if type(v) is int else v[1]
                pc += 1
                continue
            if op == "alloc":
                allocated += 1
                frame[ins[1]] = GObject([None] * ins[2])
                pc += 1
                continue
            # arithmetic with source attribution
            a, b = ins[2], ins[3]
            va = frame[a] if type(a) is int else a[1]
            vb = frame[b] if type(b) is int else b[1]
            if op == "xadd":
                frame[ins[1]] = va + vb
            elif op == "xsub":
                frame[ins[1]] = va - vb
            elif op == "xmul":
                frame[ins[1]] = va * vb
            elif op == "concat":
                frame[ins[1]] = va + vb
            elif op == "fadd":
                try:
                    frame[ins[1]] = va + vb
                except OverflowError:
                    raise _located(engine, ins[4], GuestError(
                        "integer too large for float arithmetic"))
            elif op == "fsub":
                try:
                    frame[ins[1]] = va - vb
                except OverflowError:
                    raise _located(engine, ins[4], GuestError(
                        "integer too large for float arithmetic"))
            elif op == "fmul":
                try:
                    frame[ins[1]] = va * vb
                except OverflowError:
                    raise _located(engine, ins[4], GuestError(
                        "integer too large for float arithmetic"))
            elif op == "idiv":
                if vb == 0:
                    raise _located(engine, ins[4], GuestError("division by zero"))
                q = abs(va) // abs(vb)
                frame[ins[1]] = q if (va >= 0) == (vb >= 0) else -q
            elif op == "fdiv":
                if vb == 0:
                    raise _located(engine, ins[4], GuestError("division by zero"))
                try:
                    frame[ins[1]] = va / vb
                except OverflowError:
                    raise _located(engine, ins[4], GuestError(
                        "integer too large for float arithmetic"))
            elif op == "cmp_eq":
                frame[ins[1]] = _eq(va, vb)
            elif op == "cmp_ne":
                frame[ins[1]] = not _eq(va, vb)
            elif op in _CMP_DIRECT:
                frame[ins[1]] = _CMP_DIRECT[op](va, vb)
            else:
                raise AssertionError(f"unknown instruction {op}")
            pc += 1
    finally:
        counters.compiled_instr_execs += executed
        counters.guest_allocations += allocated


def _describe(value) -> str:
    from .values import describe
    return describe(value)


def _eq(a, b) -> bool:
    from .values import _guest_eq
    return _guest_eq(a, b)


def _located(engine, src, err: GuestError) -> GuestError:
    if src is not None:
        node = engine.node_of(src)
        if node is not None:
            return err.located(node.id, node.pos)
    return err


def _dispatch_call(engine, mode: str, payload, args: list, src):
    try:
        if mode == "fn":
            return engine.call(payload, args)
        if mode == "builtin":
            return run_builtin(payload, args, out=engine.out,
                               alloc_hook=engine.count_allocation)
        if mode == "generic":
            kind, op = payload
            if kind == "index":
                return apply_index(args[0], args[1])
            return apply_binary(kind, op, args[0], args[1])
        if mode == "pow":
            return apply_pow(args[0], args[1])
        if mode == "value":
            return engine.call_value(args[0], args[1:])
        if mode == "dyn":
            return engine.call_dynamic(payload, args)
        if mode == "getglobal":
            return engine.read_global(payload)
        if mode == "setglobal":
            engine.globals[payload] = args[0]
            return None
        if mode == "use":
            engine.globals[payload] = engine.poly_import(payload)
            return None
        if mode == "export":
            engine.poly_export(payload, args[0])
            engine.globals[payload] = args[0]
            return None
        raise AssertionError(f"unknown call mode {mode}")
    except GuestError as err:
        raise _located(engine, src, err)
