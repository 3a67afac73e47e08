"""Guest value model shared by every execution tier.

One semantic kernel defines what each operator means on guest values.  The
reference interpreter, the specializing interpreter's generic paths, the
constant folder, and the register VM all call into this module, so a result
can never depend on which tier computed it.

Guest values are plain Python objects:

    nil      -> None
    Bool     -> bool
    Int      -> int within the signed 64-bit word range
    BigInt   -> int outside that range
    Float    -> float (IEEE 754 binary64)
    Str      -> str
    Object   -> GObject (fixed-size record, e.g. the pair builtin)
    function -> FuncValue

The Int/BigInt split is purely a classification of the same exact-integer
semantics: arithmetic is exact at any magnitude, the tag only decides which
fast path may speculate.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

# Guest integers are exact at any magnitude and render in full; lift
# CPython's decimal-conversion cap well past anything desk-scale programs
# produce.
if hasattr(sys, "set_int_max_str_digits"):
    sys.set_int_max_str_digits(max(sys.get_int_max_str_digits(), 2_000_000))

WORD_MIN = -(2**63)
WORD_MAX = 2**63 - 1

TAG_INT = "Int"
TAG_BIGINT = "BigInt"
TAG_FLOAT = "Float"
TAG_BOOL = "Bool"
TAG_STR = "Str"

ALL_TAGS = (TAG_INT, TAG_BIGINT, TAG_FLOAT, TAG_BOOL, TAG_STR)

ARITH_KINDS = frozenset({"add", "sub", "mul", "div", "pow"})

COMPARE_OPS = ("lt", "le", "gt", "ge", "eq", "ne")
LOGICAL_OPS = ("and", "or")

_COMPARE_SYMBOLS = {
    "lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "==", "ne": "!=",
}


class GuestError(Exception):
    """A guest-level runtime error (type error, division by zero, ...).

    Carries the AST node id and source position of the failing operation
    when known, so every execution tier reports the same diagnostic.
    """

    def __init__(self, message: str, node_id: int | None = None,
                 pos: tuple[int, int] | None = None):
        super().__init__(message)
        self.message = message
        self.node_id = node_id
        self.pos = pos

    def located(self, node_id: int, pos: tuple[int, int] | None) -> "GuestError":
        if self.node_id is None:
            self.node_id = node_id
            self.pos = pos
        return self

    def __str__(self) -> str:
        if self.pos is not None:
            return f"{self.message} (line {self.pos[0]}, col {self.pos[1]})"
        return self.message


class GObject:
    """A guest heap record with a fixed number of slots."""

    __slots__ = ("slots",)

    def __init__(self, slots: list):
        self.slots = slots

    def __repr__(self) -> str:
        return f"GObject({self.slots!r})"


@dataclass(frozen=True)
class FuncValue:
    """A guest function used as a first-class value."""

    name: str
    lang: str


def classify(value) -> str | None:
    """Type tag of a guest value, or None for values outside the tag set."""
    # bool subclasses int in Python; test it first.
    if value is True or value is False:
        return TAG_BOOL
    if type(value) is int:
        return TAG_INT if WORD_MIN <= value <= WORD_MAX else TAG_BIGINT
    if type(value) is float:
        return TAG_FLOAT
    if type(value) is str:
        return TAG_STR
    return None


def is_numeric_tag(tag: str | None) -> bool:
    return tag in (TAG_INT, TAG_BIGINT, TAG_FLOAT)


# Join of two operand tags for a given node kind.  Speculation rewrites a
# node to Typed(join); a None join means no typed fast path covers the
# observed operands and the node goes Generic.
#
#   arithmetic : Int+Int->Int, any numeric mix involving BigInt->BigInt,
#                involving Float->Float, anything else (Str/Bool/nil/...)
#                -> Generic
#   concat     : Str+Str->Str, else Generic
#   compare    : equal-kind numeric joins as arithmetic; Str+Str->Str;
#                Bool+Bool->Bool; else Generic
#   logical    : Bool+Bool->Bool, else Generic
#   index      : speculates on the index operand only; Int->Int

def join_tags(kind: str, observed: tuple[str | None, ...]) -> str | None:
    if any(t is None for t in observed):
        return None
    if kind in ARITH_KINDS:
        if all(is_numeric_tag(t) for t in observed):
            if TAG_FLOAT in observed:
                return TAG_FLOAT
            if TAG_BIGINT in observed:
                return TAG_BIGINT
            return TAG_INT
        return None
    if kind == "concat":
        return TAG_STR if all(t == TAG_STR for t in observed) else None
    if kind == "compare":
        if all(is_numeric_tag(t) for t in observed):
            if TAG_FLOAT in observed:
                return TAG_FLOAT
            if TAG_BIGINT in observed:
                return TAG_BIGINT
            return TAG_INT
        if all(t == TAG_STR for t in observed):
            return TAG_STR
        if all(t == TAG_BOOL for t in observed):
            return TAG_BOOL
        return None
    if kind == "logical":
        return TAG_BOOL if all(t == TAG_BOOL for t in observed) else None
    if kind == "index":
        return TAG_INT if observed == (TAG_INT,) else None
    raise ValueError(f"kind {kind!r} does not speculate")


# ---------------------------------------------------------------------------
# The semantic kernel.  Total on guest values: returns a guest value or
# raises GuestError.  Deterministic; evaluation order is the caller's.
# ---------------------------------------------------------------------------

def _type_error(op: str, a, b) -> GuestError:
    return GuestError(
        f"unsupported operand types for {op}: {describe(a)} and {describe(b)}")


def describe(value) -> str:
    tag = classify(value)
    if tag is not None:
        return tag
    if value is None:
        return "nil"
    if isinstance(value, GObject):
        return "object"
    if isinstance(value, FuncValue):
        return "function"
    return type(value).__name__


def _both_numeric(a, b) -> bool:
    return (type(a) in (int, float) and type(b) in (int, float)
            and a is not True and a is not False
            and b is not True and b is not False)


def apply_add(a, b):
    if _both_numeric(a, b):
        try:
            return a + b
        except OverflowError:
            raise GuestError("integer too large for float arithmetic")
    if type(a) is str and type(b) is str:
        return a + b
    raise _type_error("+", a, b)


def apply_sub(a, b):
    if _both_numeric(a, b):
        try:
            return a - b
        except OverflowError:
            raise GuestError("integer too large for float arithmetic")
    raise _type_error("-", a, b)


def apply_mul(a, b):
    if _both_numeric(a, b):
        try:
            return a * b
        except OverflowError:
            raise GuestError("integer too large for float arithmetic")
    raise _type_error("*", a, b)


def apply_div(a, b):
    if not _both_numeric(a, b):
        raise _type_error("/", a, b)
    if type(a) is int and type(b) is int:
        if b == 0:
            raise GuestError("division by zero")
        # Truncating division toward zero, exact at any magnitude.
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b >= 0) else -q
    if b == 0:
        raise GuestError("division by zero")
    try:
        return a / b
    except OverflowError:
        raise GuestError("integer too large for float arithmetic")


def apply_pow(a, b):
    """Exact power: integer exponent >= 0; float base uses repeated
    multiplication in a fixed left-to-right order."""
    if not _both_numeric(a, b):
        raise _type_error("^", a, b)
    if type(b) is not int:
        raise GuestError("exponent must be an integer")
    if b < 0:
        raise GuestError("exponent must be non-negative")
    if type(a) is int:
        return a**b
    acc = 1.0
    for _ in range(b):
        acc *= a
    return acc


def apply_concat(a, b):
    if type(a) is str and type(b) is str:
        return a + b
    raise _type_error("++", a, b)


def apply_compare(op: str, a, b):
    if op == "eq":
        return _guest_eq(a, b)
    if op == "ne":
        return not _guest_eq(a, b)
    if _both_numeric(a, b):
        try:
            if op == "lt":
                return a < b
            if op == "le":
                return a <= b
            if op == "gt":
                return a > b
            return a >= b
        except OverflowError:
            raise GuestError("integer too large for float arithmetic")
    if type(a) is str and type(b) is str:
        if op == "lt":
            return a < b
        if op == "le":
            return a <= b
        if op == "gt":
            return a > b
        return a >= b
    raise _type_error(_COMPARE_SYMBOLS[op], a, b)


def _guest_eq(a, b) -> bool:
    ta, tb = classify(a), classify(b)
    if is_numeric_tag(ta) and is_numeric_tag(tb):
        return a == b
    if ta == tb and ta is not None:
        return a == b
    if a is None and b is None:
        return True
    # Objects, functions and foreign handles compare by identity.
    if ta is None and tb is None and a is not None and b is not None:
        return a is b
    return False


def apply_logical(op: str, a, b):
    """Strict boolean operators: both operands are always evaluated."""
    if a is not True and a is not False:
        raise _type_error(op, a, b)
    if b is not True and b is not False:
        raise _type_error(op, a, b)
    return (a and b) if op == "and" else (a or b)


def apply_index(obj, idx):
    if not isinstance(obj, GObject):
        raise GuestError(f"cannot index a {describe(obj)} value")
    if type(idx) is not int or idx is True or idx is False:
        raise GuestError(f"index must be an integer, got {describe(idx)}")
    if not 0 <= idx < len(obj.slots):
        raise GuestError(f"index {idx} out of range for {len(obj.slots)}-slot object")
    return obj.slots[idx]


def apply_index_set(obj, idx, value):
    if not isinstance(obj, GObject):
        raise GuestError(f"cannot index a {describe(obj)} value")
    if type(idx) is not int or idx is True or idx is False:
        raise GuestError(f"index must be an integer, got {describe(idx)}")
    if not 0 <= idx < len(obj.slots):
        raise GuestError(f"index {idx} out of range for {len(obj.slots)}-slot object")
    obj.slots[idx] = value
    return None


_BINARY = {
    "add": apply_add,
    "sub": apply_sub,
    "mul": apply_mul,
    "div": apply_div,
    "pow": apply_pow,
    "concat": apply_concat,
}


def apply_binary(kind: str, op: str | None, a, b):
    """Generic dispatch used by reference paths and generic helpers."""
    fn = _BINARY.get(kind)
    if fn is not None:
        return fn(a, b)
    if kind == "compare":
        return apply_compare(op, a, b)
    if kind == "logical":
        return apply_logical(op, a, b)
    raise ValueError(f"not a binary kind: {kind}")


def require_bool(value, what: str):
    if value is not True and value is not False:
        raise GuestError(f"{what} must be a boolean, got {describe(value)}")
    return value


# ---------------------------------------------------------------------------
# Rendering.  format_value defines the print builtin and AsString interop
# rendering; it is part of the language definition and must stay bit-stable.
# ---------------------------------------------------------------------------

def format_value(value) -> str:
    if value is None:
        return "nil"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if type(value) is int:
        return str(value)
    if type(value) is float:
        return repr(value)
    if type(value) is str:
        return value
    if isinstance(value, GObject):
        return "pair(" + ", ".join(format_value(s) for s in value.slots) + ")"
    if isinstance(value, FuncValue):
        return f"<fn {value.name}>"
    return _format_foreign(value)


def _format_foreign(value) -> str:
    render = getattr(value, "render_as_string", None)
    if render is not None:
        return render()
    return repr(value)


# ---------------------------------------------------------------------------
# Pure builtin semantics (effectful builtins live with the interpreters).
# ---------------------------------------------------------------------------

def apply_len(value):
    """len: string length, object slot count, or decimal digit count of an
    integer (the local mirror of the GetSize interop message)."""
    if type(value) is str:
        return len(value)
    if isinstance(value, GObject):
        return len(value.slots)
    if type(value) is int and value is not True and value is not False:
        return len(str(abs(value)))
    raise GuestError(f"len is not defined for a {describe(value)} value")


def apply_substr(s, start, count):
    """substr(s, start, count): clamped slice, 0-based, never errors on
    out-of-range positions."""
    if type(s) is not str:
        raise GuestError(f"substr needs a string, got {describe(s)}")
    for v in (start, count):
        if type(v) is not int or v is True or v is False:
            raise GuestError(f"substr positions must be integers, got {describe(v)}")
    lo = max(start, 0)
    return s[lo:lo + max(count, 0)]


def apply_match(pattern, subject):
    if type(pattern) is not str or type(subject) is not str:
        raise GuestError(
            f"match needs strings, got {describe(pattern)} and {describe(subject)}")
    return glob_match(pattern, subject)


# ---------------------------------------------------------------------------
# Glob matching: `*` matches any run of characters (including none), `?`
# exactly one; everything else is literal.  Case-sensitive, no classes.
# ---------------------------------------------------------------------------

def glob_match(pattern: str, subject: str) -> bool:
    pi = si = 0
    star_pi = -1
    star_si = 0
    np, ns = len(pattern), len(subject)
    while si < ns:
        if pi < np and (pattern[pi] == "?" or pattern[pi] == subject[si]):
            pi += 1
            si += 1
        elif pi < np and pattern[pi] == "*":
            star_pi = pi
            star_si = si
            pi += 1
        elif star_pi >= 0:
            pi = star_pi + 1
            star_si += 1
            si = star_si
        else:
            return False
    while pi < np and pattern[pi] == "*":
        pi += 1
    return pi == np
