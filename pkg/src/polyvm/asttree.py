"""Self-optimizing AST: node model, specialization states, guards, events.

A node's specialization state moves monotonically up the lattice

    Uninitialized < Typed(tag) < Generic

with sideways Typed->Typed moves allowed; every move through `rewrite`
counts against the node's rewrite budget, and a node that exhausts the
budget lands in Generic and never moves again.

Only operator kinds in SPECULATIVE_KINDS take part in the guard/rewrite
protocol.  Leaves (literals, variable reads) and structural nodes (blocks,
loops, calls, builtins) carry no useful speculation: they initialize
directly to Generic on first execution, silently and without spending
budget.  See docs/type-lattice.md.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .values import join_tags

UNINIT = "Uninitialized"
TYPED = "Typed"
GENERIC = "Generic"

_LATTICE_RANK = {UNINIT: 0, TYPED: 1, GENERIC: 2}


@dataclass(frozen=True)
class SpecState:
    state: str
    tag: str | None = None

    def __post_init__(self):
        assert (self.state == TYPED) == (self.tag is not None)

    @property
    def rank(self) -> int:
        return _LATTICE_RANK[self.state]

    def __str__(self) -> str:
        if self.state == TYPED:
            return f"Typed({self.tag})"
        return self.state


STATE_UNINIT = SpecState(UNINIT)
STATE_GENERIC = SpecState(GENERIC)


def typed(tag: str) -> SpecState:
    return SpecState(TYPED, tag)


@dataclass
class Guard:
    """Runtime check protecting a typed fast path: one expected tag per
    guarded operand (see OPERAND_ARITY for what each kind guards)."""

    node_id: int
    expected: tuple[str, ...]
    fail_count: int = 0


@dataclass
class RewritePolicy:
    rewrite_limit: int = 3
    stability_window: int = 16

    def __post_init__(self):
        if self.rewrite_limit < 1:
            raise ValueError("rewrite_limit must be >= 1")
        if self.stability_window < 1:
            raise ValueError("stability_window must be >= 1")


# Kinds that speculate on operand tags.  The guarded-operand list per kind:
# binary operators guard both operands; index guards the index only (the
# object check is a separate non-tag speculation handled by the fast path).
SPECULATIVE_KINDS = frozenset(
    {"add", "sub", "mul", "div", "pow", "concat", "compare", "logical", "index"}
)

# children arity per kind; None means variable arity.
KIND_ARITY = {
    "lit": (0, 0),
    "var": (0, 0),
    "let": (1, 1),
    "assign": (1, 1),
    "add": (2, 2),
    "sub": (2, 2),
    "mul": (2, 2),
    "div": (2, 2),
    "pow": (2, 2),
    "concat": (2, 2),
    "compare": (2, 2),
    "logical": (2, 2),
    "index": (2, 2),
    "index_set": (3, 3),
    "if": (2, 3),
    "while": (2, 2),
    "block": (0, None),
    "call": (0, None),
    "builtin": (0, None),
    "fndef": (1, 1),
    "return": (0, 1),
    "use": (0, 0),
    "export": (1, 1),
}


class AstNode:
    """One tree node.  Structure (kind/children) is fixed after parsing;
    specialization replaces state in place, keyed by the node id."""

    __slots__ = (
        "id", "kind", "children", "spec", "guard", "rewrite_count",
        "exec_count", "execs_since_rewrite", "observed_tags",
        "value", "name", "op", "pos", "parent",
    )

    def __init__(self, id: int, kind: str, children: list["AstNode"],
                 value=None, name: str | None = None, op: str | None = None,
                 pos: tuple[int, int] = (0, 0)):
        lo, hi = KIND_ARITY[kind]
        n = len(children)
        if n < lo or (hi is not None and n > hi):
            raise ValueError(f"{kind} node takes {lo}..{hi} children, got {n}")
        self.id = id
        self.kind = kind
        self.children = children
        self.spec = STATE_UNINIT
        self.guard = None
        self.rewrite_count = 0
        self.exec_count = 0
        self.execs_since_rewrite = 0
        self.observed_tags = Counter()
        self.value = value
        self.name = name
        self.op = op
        self.pos = pos
        self.parent: AstNode | None = None

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def link_parents(self):
        for child in self.children:
            child.parent = self
            child.link_parents()

    def __repr__(self) -> str:
        extra = ""
        if self.name is not None:
            extra = f" name={self.name}"
        if self.op is not None:
            extra += f" op={self.op}"
        if self.kind == "lit":
            extra += f" value={self.value!r}"
        return f"<{self.kind}#{self.id}{extra} {self.spec}>"


@dataclass(frozen=True)
class ExecProfile:
    """Immutable snapshot of execution counters for one tree."""

    node_counts: dict
    node_tags: dict
    invocation_count: int

    def exec_count(self, node_id: int) -> int:
        return self.node_counts.get(node_id, 0)


def snapshot_profile(root: AstNode, invocation_count: int = 0) -> ExecProfile:
    counts = {}
    tags = {}
    for node in root.walk():
        counts[node.id] = node.exec_count
        tags[node.id] = dict(node.observed_tags)
    return ExecProfile(counts, tags, invocation_count)


def is_stable(root: AstNode, policy: RewritePolicy) -> bool:
    """True iff every node is Generic or has run a full stability window
    since its last rewrite.  Never-executed nodes block stability."""
    window = policy.stability_window
    for node in root.walk():
        if node.spec.state == GENERIC:
            continue
        if node.spec.state == UNINIT:
            return False
        if node.execs_since_rewrite < window:
            return False
    return True


def reset_tree(root: AstNode) -> None:
    """Whole-tree reset to Uninitialized: the only sanctioned downward move."""
    for node in root.walk():
        node.spec = STATE_UNINIT
        node.guard = None
        node.rewrite_count = 0
        node.exec_count = 0
        node.execs_since_rewrite = 0
        node.observed_tags.clear()


def force_generic(root: AstNode) -> None:
    """Push every node straight to Generic (AOT preparation; no events)."""
    for node in root.walk():
        node.spec = STATE_GENERIC
        node.guard = None


class EventLog:
    """Line-oriented engine event log (format in docs/interfaces.md)."""

    def __init__(self, trace_sink=None):
        self.lines: list[str] = []
        self.trace_sink = trace_sink

    def emit(self, line: str) -> None:
        self.lines.append(line)
        if self.trace_sink is not None:
            self.trace_sink(line)

    def rewrite(self, node_id: int, before: SpecState, after: SpecState) -> None:
        self.emit(f"EVENT RewriteEvent node={node_id} from={before} to={after}")

    def guard_fail(self, node_id: int, state: SpecState) -> None:
        self.emit(f"EVENT GuardFailEvent node={node_id} from={state} to={state}")

    def compile(self, fn: str, call: int, version: int) -> None:
        self.emit(f"EVENT CompileEvent fn={fn} call={call} version={version}")

    def deopt(self, fn: str, node_id: int, reason: str) -> None:
        self.emit(f"EVENT DeoptEvent fn={fn} node={node_id} reason={reason}")

    def of_kind(self, *kinds: str) -> list[str]:
        prefixes = tuple(f"EVENT {k} " for k in kinds)
        return [l for l in self.lines if l.startswith(prefixes)]


def check_guard(guard: Guard, operand_tags: tuple[str | None, ...]) -> bool:
    """Pass iff every guarded operand carries exactly the expected tag.
    Increments fail_count on failure."""
    if len(operand_tags) != len(guard.expected):
        raise ValueError("operand count does not match guard")
    if operand_tags == guard.expected:
        return True
    guard.fail_count += 1
    return False


def rewrite(node: AstNode, observed: tuple[str | None, ...],
            policy: RewritePolicy, log: EventLog | None = None,
            force_tag: str | None = None) -> SpecState:
    """Move a speculative node up the lattice based on observed operand tags.

    With budget remaining the new state is Typed(join of observed) -- the
    join may itself be Generic for unspecializable mixes.  At budget
    exhaustion the node goes straight to Generic.  force_tag overrides the
    join (used by the Int overflow promotion and the deopt blacklist).
    """
    if node.spec.state == GENERIC:
        raise ValueError(f"node {node.id} is Generic and cannot rewrite")
    before = node.spec
    node.rewrite_count += 1
    if node.rewrite_count >= policy.rewrite_limit:
        new_state = STATE_GENERIC
    elif force_tag is not None:
        new_state = SpecState(GENERIC) if force_tag == GENERIC else typed(force_tag)
    else:
        tag = join_tags(node.kind, observed)
        new_state = typed(tag) if tag is not None else STATE_GENERIC
    assert new_state.rank >= before.rank
    node.spec = new_state
    node.execs_since_rewrite = 0
    if new_state.state == TYPED:
        node.guard = Guard(node.id, tuple(observed))
    else:
        node.guard = None
    if log is not None:
        log.rewrite(node.id, before, new_state)
    return new_state
