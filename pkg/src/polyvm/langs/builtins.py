"""Builtin call semantics shared by every execution tier.

Effectful hooks (print sink, allocation counter, polyglot bindings) are
injected by the caller so the reference interpreter, the specializing
interpreter and the register VM all route through the same definitions.
"""

from __future__ import annotations

from ..values import (
    GObject, GuestError, apply_len, apply_match, apply_substr, format_value,
)


def is_foreign(value) -> bool:
    return getattr(value, "is_polyglot_handle", False)


def run_builtin(name: str, args: list, *, out, alloc_hook=None):
    if name == "print":
        _arity(name, args, 1)
        out.append(format_value(args[0]))
        return None
    if name == "pair":
        _arity(name, args, 2)
        if alloc_hook is not None:
            alloc_hook()
        return GObject([args[0], args[1]])
    if name == "len":
        _arity(name, args, 1)
        v = args[0]
        if is_foreign(v):
            return v.interop_size()
        return apply_len(v)
    if name == "substr":
        _arity(name, args, 3)
        return apply_substr(args[0], args[1], args[2])
    if name == "match":
        _arity(name, args, 2)
        return apply_match(args[0], args[1])
    if name == "show":
        _arity(name, args, 1)
        v = args[0]
        if is_foreign(v):
            return v.render_as_string()
        return format_value(v)
    raise GuestError(f"unknown builtin {name}")


def _arity(name: str, args: list, n: int) -> None:
    if len(args) != n:
        raise GuestError(f"{name} takes {n} argument{'s' if n != 1 else ''}, "
                         f"got {len(args)}")
