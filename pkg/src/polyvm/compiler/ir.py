"""Tiered graph IR: one node set with two edge overlays.

Every node carries ordered data inputs (value dependencies) and up to two
control successors.  Loops keep both overlays acyclic modulo explicitly
declared back edges: the control back edge LoopEnd->LoopBegin lives in
IrGraph.back_edges, and the only legal data back edges are the loop-carried
inputs of a Phi sitting at a LoopBegin.

Tier legality, the dump format (docs/interfaces.md) and the verifier are
all defined here so every phase boundary can be checked mechanically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TIER_HIGH = "High"
TIER_MID = "Mid"
TIER_LOW = "Low"
TIER_FINAL = "Final"

TIERS = (TIER_HIGH, TIER_MID, TIER_LOW, TIER_FINAL)

# Structural opcodes legal at every tier.
_STRUCTURAL = {
    "Const", "Param", "Begin", "Merge", "LoopBegin", "LoopEnd", "Phi",
    "Return", "Call", "Deopt",
}

_HIGH_ONLY = {"Add", "Sub", "Mul", "Div", "Compare", "LoadField",
              "StoreField", "Alloc", "If", "Guard"}

TIER_OPCODES = {
    TIER_HIGH: _STRUCTURAL | _HIGH_ONLY,
    TIER_MID: _STRUCTURAL | {"Guard", "If", "LoadField", "StoreField",
                             "Alloc", "CheckedAddWord", "RawOp"},
    TIER_LOW: _STRUCTURAL | {"Guard", "CheckedAddWord", "RawOp", "Branch"},
    TIER_FINAL: (_STRUCTURAL - {"Deopt"})
    | {"CheckedAddWord", "RawOp", "Branch", "FrameRestore"},
}

# (min, max) data inputs; None = variable.
DATA_ARITY = {
    "Const": (0, 0), "Param": (0, 0), "Begin": (0, 0), "Merge": (0, 0),
    "LoopBegin": (0, 0), "LoopEnd": (0, 0),
    "Add": (2, 2), "Sub": (2, 2), "Mul": (2, 2), "Div": (2, 2),
    "Compare": (2, 2), "CheckedAddWord": (2, 2),
    "Guard": (0, None), "Phi": (2, None), "If": (1, 1), "Branch": (1, 1),
    "Call": (0, None), "Alloc": (0, 0),
    "LoadField": (2, 2), "StoreField": (3, 3),
    "Return": (0, 1), "Deopt": (0, None), "FrameRestore": (0, None),
    "RawOp": (0, None),
}

# Opcodes that sit on the control chain (pinned); everything else floats.
PINNED = {
    "Begin", "Merge", "LoopBegin", "LoopEnd", "If", "Branch", "Guard",
    "Call", "Alloc", "LoadField", "StoreField", "Return", "Deopt",
    "FrameRestore", "CheckedAddWord", "RawOp",
}

# Floating opcodes are pure; pinned opcodes that still produce a value the
# optimizer may reuse.
VALUE_PRODUCING = {
    "Const", "Param", "Add", "Sub", "Mul", "Div", "Compare", "Phi",
    "CheckedAddWord", "Call", "Alloc", "LoadField", "RawOp",
}


@dataclass
class FrameDesc:
    """Deopt metadata: how to rebuild interpreter state at a guard.

    Entries reference positions in the owning node's data_inputs list, so
    graph copies and inlining only need to remap the input list itself.
    `virtuals` overrides entries whose value is a scalar-replaced
    allocation: the object is rebuilt at deopt time from its field value
    inputs.  `parent` chains outward through inlined call sites.
    """

    func: str
    node_id: int
    var_slots: dict[str, int]
    pending_slots: dict[int, int]
    virtuals: dict[int, list[int]] = field(default_factory=dict)
    parent: "FrameDesc | None" = None
    parent_call_node: int | None = None

    def all_slots(self):
        yield from self.var_slots.values()
        yield from self.pending_slots.values()
        for fields in self.virtuals.values():
            yield from fields
        if self.parent is not None:
            yield from self.parent.all_slots()

    def remap_slots(self, mapping: dict[int, int]) -> "FrameDesc":
        return FrameDesc(
            self.func, self.node_id,
            {k: mapping[v] for k, v in self.var_slots.items()},
            {k: mapping[v] for k, v in self.pending_slots.items()},
            {k: [mapping[f] for f in fields] for k, fields in self.virtuals.items()},
            self.parent.remap_slots(mapping) if self.parent is not None else None,
            self.parent_call_node,
        )


class IrNode:
    __slots__ = ("id", "opcode", "data_inputs", "control_next", "meta")

    def __init__(self, id: int, opcode: str, data_inputs: list[int],
                 control_next: list[int], meta: dict | None = None):
        self.id = id
        self.opcode = opcode
        self.data_inputs = data_inputs
        self.control_next = control_next
        self.meta = meta if meta is not None else {}

    def __repr__(self) -> str:
        return f"n{self.id}:{self.opcode}"


class IrGraph:
    def __init__(self, function: str, tier: str = TIER_HIGH):
        self.function = function
        self.tier = tier
        self.nodes: dict[int, IrNode] = {}
        self.entry: int | None = None
        self.back_edges: set[tuple[int, int]] = set()
        self._next_id = 0

    # -- construction ---------------------------------------------------------

    def add(self, opcode: str, data_inputs: list[int] | None = None,
            control_next: list[int] | None = None, **meta) -> IrNode:
        node = IrNode(self._next_id, opcode, list(data_inputs or []),
                      list(control_next or []), meta)
        self.nodes[node.id] = node
        self._next_id += 1
        return node

    def remove(self, node_id: int) -> None:
        del self.nodes[node_id]

    def copy(self) -> "IrGraph":
        g = IrGraph(self.function, self.tier)
        g._next_id = self._next_id
        g.entry = self.entry
        g.back_edges = set(self.back_edges)
        for nid, node in self.nodes.items():
            meta = dict(node.meta)
            g.nodes[nid] = IrNode(nid, node.opcode, list(node.data_inputs),
                                  list(node.control_next), meta)
        return g

    def __len__(self) -> int:
        return len(self.nodes)

    # -- traversal ------------------------------------------------------------

    def users(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for node in self.nodes.values():
            for inp in node.data_inputs:
                out[inp].append(node.id)
        return out

    def control_order(self) -> list[int]:
        """Control nodes in reverse-postorder ignoring declared back edges."""
        order: list[int] = []
        seen: set[int] = set()

        def visit(nid: int) -> None:
            if nid in seen:
                return
            seen.add(nid)
            node = self.nodes[nid]
            for succ in node.control_next:
                if (nid, succ) not in self.back_edges:
                    visit(succ)
            order.append(nid)

        if self.entry is not None:
            visit(self.entry)
        order.reverse()
        return order

    def replace_input(self, old: int, new: int) -> None:
        for node in self.nodes.values():
            node.data_inputs = [new if i == old else i for i in node.data_inputs]

    def topo_data_order(self) -> list[int]:
        """All nodes, data dependencies first (loop Phi back inputs ignored)."""
        order: list[int] = []
        state: dict[int, int] = {}

        def deps(node: IrNode):
            if node.opcode == "Phi" and node.meta.get("loop"):
                return node.data_inputs[:1]
            return node.data_inputs

        def visit(nid: int) -> None:
            st = state.get(nid, 0)
            if st == 2:
                return
            if st == 1:
                return  # cycle; verifier reports it separately
            state[nid] = 1
            for dep in deps(self.nodes[nid]):
                if dep in self.nodes:
                    visit(dep)
            state[nid] = 2
            order.append(nid)

        for nid in self.control_order():
            visit(nid)
        for nid in sorted(self.nodes):
            visit(nid)
        return order


# ---------------------------------------------------------------------------
# Verifier
# ---------------------------------------------------------------------------

def verify(g: IrGraph) -> list[str]:
    """All IrGraph invariants; returns violations (empty list = ok)."""
    bad: list[str] = []
    if g.tier not in TIERS:
        return [f"unknown tier {g.tier}"]
    legal = TIER_OPCODES[g.tier]
    if g.entry is None or g.entry not in g.nodes:
        bad.append("missing entry node")
        return bad
    for nid, node in sorted(g.nodes.items()):
        if node.opcode not in DATA_ARITY:
            bad.append(f"n{nid}: unknown opcode {node.opcode}")
            continue
        if node.opcode not in legal:
            bad.append(f"n{nid}: opcode {node.opcode} illegal at tier {g.tier}")
        lo, hi = DATA_ARITY[node.opcode]
        n = len(node.data_inputs)
        if n < lo or (hi is not None and n > hi):
            bad.append(f"n{nid}: {node.opcode} has {n} data inputs, wants {lo}..{hi}")
        if len(node.control_next) > 2:
            bad.append(f"n{nid}: more than 2 control successors")
        for inp in node.data_inputs:
            if inp not in g.nodes:
                bad.append(f"n{nid}: dangling data input n{inp}")
        for succ in node.control_next:
            if succ not in g.nodes:
                bad.append(f"n{nid}: dangling control successor n{succ}")
    if bad:
        return bad

    # control overlay acyclic modulo declared back edges
    color: dict[int, int] = {}

    def control_dfs(nid: int) -> None:
        color[nid] = 1
        for succ in g.nodes[nid].control_next:
            if (nid, succ) in g.back_edges:
                continue
            c = color.get(succ, 0)
            if c == 1:
                bad.append(f"control cycle through n{nid}->n{succ}")
            elif c == 0:
                control_dfs(succ)
        color[nid] = 2

    control_dfs(g.entry)

    # back edges must target LoopBegin from LoopEnd/Branch
    for src, dst in g.back_edges:
        if dst in g.nodes and g.nodes[dst].opcode not in ("LoopBegin", "Merge"):
            bad.append(f"back edge n{src}->n{dst} does not target a loop header")

    # data overlay acyclic except through loop Phis
    dstate: dict[int, int] = {}

    def data_dfs(nid: int) -> None:
        dstate[nid] = 1
        node = g.nodes[nid]
        inputs = node.data_inputs
        if node.opcode == "Phi" and node.meta.get("loop"):
            inputs = inputs[:1]
        for inp in inputs:
            c = dstate.get(inp, 0)
            if c == 1:
                bad.append(f"data cycle not through a loop Phi at n{nid}->n{inp}")
            elif c == 0:
                data_dfs(inp)
        dstate[nid] = 2

    for nid in g.nodes:
        if dstate.get(nid, 0) == 0:
            data_dfs(nid)

    # reachability: control-reachable nodes plus their data dependencies
    reachable = set(g.control_order())
    work = list(reachable)
    while work:
        node = g.nodes[work.pop()]
        for inp in node.data_inputs:
            if inp not in reachable:
                reachable.add(inp)
                work.append(inp)
    for nid in sorted(g.nodes):
        if nid not in reachable:
            bad.append(f"n{nid}: unreachable from entry")

    if g.tier == TIER_FINAL:
        for nid, node in sorted(g.nodes.items()):
            if node.opcode in ("Deopt", "If", "Guard"):
                bad.append(f"n{nid}: {node.opcode} survived to Final tier")
    return bad


# ---------------------------------------------------------------------------
# Dump format (bit-exact, versioned; see docs/interfaces.md)
# ---------------------------------------------------------------------------

DUMP_VERSION = 1

_META_KEYS = ("src", "tag", "guard_id", "expected", "op", "callee", "name",
              "value", "field", "nfields", "reason", "site_count", "loop")


def dump(g: IrGraph) -> str:
    lines = [f"graph {g.function} tier={g.tier} v{DUMP_VERSION}"]
    for nid in g.topo_data_order():
        node = g.nodes[nid]
        ins = ", ".join(f"n{i}" for i in node.data_inputs)
        ctrl = ""
        if node.control_next:
            succ = ",".join(f"n{s}" for s in node.control_next)
            ctrl = f" ctrl->[{succ}]"
        meta_parts = []
        for key in _META_KEYS:
            if key in node.meta:
                meta_parts.append(f"{key}={node.meta[key]!r}")
        meta = f" [{' '.join(meta_parts)}]" if meta_parts else ""
        lines.append(f"n{nid}: {node.opcode}({ins}){ctrl}{meta}")
    return "\n".join(lines) + "\n"


def structurally_equal(a: IrGraph, b: IrGraph) -> bool:
    return dump(a) == dump(b)
