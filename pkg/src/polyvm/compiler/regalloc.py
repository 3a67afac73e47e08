"""Back end: linearize a Final-tier graph and run linear-scan register
allocation into a register-machine program.

The machine has R physical registers (frame indexes 0..R-1); live ranges
beyond R spill to frame slots (indexes R..).  Constants are inline
immediate operands, phi values become parallel moves on the incoming
edges (with edge splitting under branches), and every instruction that can
deopt gets a guard-table entry mapping frame locations back to interpreter
state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import FrameDesc, IrGraph, TIER_FINAL

NUM_REGS = 8

_PURE_RAW = {"fadd", "fsub", "fmul", "xadd", "xsub", "xmul", "concat"}

SCRATCH = "<scratch>"


@dataclass
class ResolvedFrame:
    """A FrameDesc with values resolved to frame locations.

    A location is an int frame index, ("c", value) for an immediate, or
    ("virt", [loc, ...]) for a scalar-replaced object rebuilt at deopt.
    """

    func: str
    node_id: int
    vars: dict
    pending: dict
    parent: "ResolvedFrame | None" = None
    parent_call_node: int | None = None


@dataclass
class GuardRecord:
    reason: str                  # "guard" | "overflow" | "objcheck"
    guard_id: int
    frame: ResolvedFrame


@dataclass
class RegProgram:
    instrs: list
    num_regs: int
    num_slots: int
    param_locs: list
    guard_table: dict[int, GuardRecord] = field(default_factory=dict)

    @property
    def frame_size(self) -> int:
        return self.num_regs + self.num_slots + 1   # +1 scratch

    @property
    def scratch(self) -> int:
        return self.num_regs + self.num_slots


def _parallel_moves(moves, emit_mov) -> None:
    """Order a parallel copy; cycles park the clobbered value in scratch."""
    pend = [(d, s) for d, s in moves if d != s]
    while pend:
        srcs = {s for _, s in pend}
        for i, (d, s) in enumerate(pend):
            if d not in srcs:
                pend.pop(i)
                emit_mov(d, s)
                break
        else:
            d, _ = pend[0]
            emit_mov(SCRATCH, d)
            pend = [(dd, SCRATCH if ss == d else ss) for dd, ss in pend]


class _Selection:
    """Instruction selection with virtual-register operands."""

    def __init__(self, g: IrGraph):
        self.g = g
        self.instrs: list = []
        self.defs: dict[int, list] = {}
        self.uses: dict[int, list] = {}
        self.records: dict[int, tuple] = {}   # pc -> (reason, guard id, restore id)
        self.labels: dict[int, int] = {}      # block head node id -> pc
        self.block_emitted: set = set()
        self.control_set = set(g.control_order())

    def emit(self, instr: tuple, defs=(), uses=()) -> int:
        pc = len(self.instrs)
        self.instrs.append(instr)
        self.defs[pc] = [d for d in defs if isinstance(d, int)]
        self.uses[pc] = [u for u in uses if isinstance(u, int)]
        return pc

    # -- operands -----------------------------------------------------------

    def operand(self, vid: int, uses: list):
        node = self.g.nodes[vid]
        if node.opcode == "Const":
            return ("c", node.meta.get("value"))
        self.ensure_value(vid)
        uses.append(vid)
        return vid

    def ensure_value(self, vid: int) -> None:
        """Floating pure nodes are (re)computed in each block that uses them."""
        node = self.g.nodes[vid]
        if vid in self.control_set or node.opcode in ("Param", "Phi", "Const"):
            return
        if vid in self.block_emitted:
            return
        self.block_emitted.add(vid)
        op = node.meta.get("op", "")
        if node.opcode != "RawOp" or not (op in _PURE_RAW or op.startswith("cmp_")):
            raise AssertionError(f"floating n{vid} {node.opcode}/{op} not emittable")
        uses: list = []
        args = [self.operand(i, uses) for i in node.data_inputs]
        self.emit((op, vid, *args, node.meta.get("src")), defs=[vid], uses=uses)

    # -- node emission --------------------------------------------------------

    def _frame_values(self, node) -> tuple | None:
        """(reason is attached later) ensure frame inputs exist before the
        deopting instruction; returns the FrameRestore node id."""
        restore = None
        for s in node.control_next[1:]:
            if self.g.nodes[s].opcode == "FrameRestore":
                restore = s
        if restore is None:
            return None
        frame_uses = []
        for vid in self.g.nodes[restore].data_inputs:
            if self.g.nodes[vid].opcode != "Const":
                self.ensure_value(vid)
                frame_uses.append(vid)
        return restore, frame_uses

    def emit_node(self, nid: int) -> None:
        g = self.g
        node = g.nodes[nid]
        op = node.opcode
        uses: list = []
        if op in ("Begin", "Merge", "LoopBegin", "LoopEnd", "FrameRestore",
                  "Param", "Const", "Phi", "Branch"):
            return
        if op == "Return":
            v = self.operand(node.data_inputs[0], uses) if node.data_inputs \
                else ("c", None)
            self.emit(("ret", v), uses=uses)
            return
        if op == "CheckedAddWord":
            fr = self._frame_values(node)
            a = self.operand(node.data_inputs[0], uses)
            b = self.operand(node.data_inputs[1], uses)
            kind = {"add": "add_ck", "sub": "sub_ck", "mul": "mul_ck"}[
                node.meta.get("op", "add")]
            pc = self.emit((kind, nid, a, b), defs=[nid],
                           uses=uses + (fr[1] if fr else []))
            if fr:
                self.records[pc] = ("overflow", node.meta.get("guard_id"), fr[0])
            return
        if op == "Call":
            self._emit_call(node)
            return
        if op != "RawOp":
            raise AssertionError(f"unexpected opcode at Final: {op}")
        raw = node.meta["op"]
        if raw == "guard":
            fr = self._frame_values(node)
            pairs = tuple((self.operand(v, uses), t)
                          for v, t in zip(node.data_inputs, node.meta["expected"]))
            pc = self.emit(("guard", pairs), uses=uses + (fr[1] if fr else []))
            if fr:
                self.records[pc] = ("guard", node.meta.get("guard_id"), fr[0])
            return
        if raw == "lea":
            fr = None if node.meta.get("safe") else self._frame_values(node)
            obj = self.operand(node.data_inputs[0], uses)
            idx = self.operand(node.data_inputs[1], uses)
            pc = self.emit(("lea", nid, obj, idx), defs=[nid],
                           uses=uses + (fr[1] if fr else []))
            if fr:
                self.records[pc] = ("objcheck", node.meta.get("guard_id"), fr[0])
            return
        if raw == "load":
            addr = self.operand(node.data_inputs[0], uses)
            self.emit(("load", nid, addr), defs=[nid], uses=uses)
            return
        if raw == "store":
            addr = self.operand(node.data_inputs[0], uses)
            val = self.operand(node.data_inputs[1], uses)
            self.emit(("store", addr, val), uses=uses)
            return
        if raw == "alloc":
            self.emit(("alloc", nid, node.meta["nfields"]), defs=[nid])
            return
        a = self.operand(node.data_inputs[0], uses)
        b = self.operand(node.data_inputs[1], uses)
        self.emit((raw, nid, a, b, node.meta.get("src")), defs=[nid], uses=uses)

    def _emit_call(self, node) -> None:
        callee = node.meta.get("callee", "")
        if callee == "value":
            mode, payload = "value", None
        elif callee.startswith("fn:"):
            mode, payload = "fn", callee[3:]
        elif callee.startswith("dynglobal:"):
            mode, payload = "dyn", callee[10:]
        elif callee.startswith("builtin:"):
            mode, payload = "builtin", callee[8:]
        elif callee.startswith("generic:"):
            parts = callee.split(":")
            mode, payload = "generic", (parts[1], parts[2] if len(parts) > 2 else None)
        elif callee == "op:pow":
            mode, payload = "pow", None
        elif callee in ("rt:getglobal", "rt:setglobal", "rt:use", "rt:export"):
            mode, payload = callee[3:], node.meta["name"]
        else:
            raise AssertionError(f"unknown callee {callee}")
        for vid in node.data_inputs:
            uses: list = []
            v = self.operand(vid, uses)
            self.emit(("push", v), uses=uses)
        self.emit(("call", node.id, mode, payload, len(node.data_inputs),
                   node.meta.get("src")), defs=[node.id])


def _block_heads(g: IrGraph, order: list[int]) -> set:
    heads = {g.entry}
    for nid in order:
        node = g.nodes[nid]
        if node.opcode in ("Merge", "LoopBegin"):
            heads.add(nid)
        if node.opcode == "Branch":
            heads.update(node.control_next)
    for _, dst in g.back_edges:
        heads.add(dst)
    return heads


def _form_blocks(g: IrGraph, order: list[int], heads: set) -> list[list[int]]:
    blocks, seen = [], set()
    for head in order:
        if head not in heads or head in seen:
            continue
        block, node = [head], g.nodes[head]
        seen.add(head)
        while True:
            if node.opcode in ("Branch", "Return"):
                break
            real = [s for s in node.control_next
                    if g.nodes[s].opcode != "FrameRestore"
                    and (node.id, s) not in g.back_edges]
            if len(real) != 1 or real[0] in heads:
                break
            nxt = real[0]
            block.append(nxt)
            seen.add(nxt)
            node = g.nodes[nxt]
        blocks.append(block)
    return blocks


def _phi_moves(g: IrGraph, blocks) -> dict:
    """(pred tail id, head id) -> [(phi vreg, source vreg/id), ...]."""
    edge_moves: dict = {}
    for block in blocks:
        head = g.nodes[block[0]]
        if head.opcode not in ("Merge", "LoopBegin"):
            continue
        phis = [g.nodes[p] for p in head.meta.get("phis", []) if p in g.nodes]
        if not phis:
            continue
        if head.opcode == "LoopBegin":
            entry_pred = back_pred = None
            for other in g.nodes.values():
                if head.id in other.control_next:
                    if (other.id, head.id) in g.back_edges:
                        back_pred = other.id
                    else:
                        entry_pred = other.id
            preds = [entry_pred, back_pred]
        else:
            preds = head.meta.get("preds", [])
        for k, pred in enumerate(preds):
            if pred is None:
                continue
            moves = [(phi.id, phi.data_inputs[k]) for phi in phis
                     if k < len(phi.data_inputs)]
            if moves:
                edge_moves[(pred, head.id)] = moves
    return edge_moves


def allocate_registers(g: IrGraph, num_regs: int = NUM_REGS) -> RegProgram:
    assert g.tier == TIER_FINAL, "register allocation needs a Final graph"
    sel = _Selection(g)
    order = g.control_order()
    heads = _block_heads(g, order)
    blocks = _form_blocks(g, order, heads)
    edge_moves = _phi_moves(g, blocks)

    def emit_mov(dst, src):
        uses, defs = [], []
        if isinstance(src, int):
            node = sel.g.nodes.get(src)
            if node is not None and node.opcode == "Const":
                src = ("c", node.meta.get("value"))
            else:
                sel.ensure_value(src)
                uses = [src]
        if isinstance(dst, int):
            defs = [dst]
        sel.emit(("mov", dst, src), defs=defs, uses=uses)

    jump_fixups: list[tuple[int, object]] = []   # (pc, target spec)
    deferred_edges: list[tuple] = []             # (key, succ head, moves)

    for bi, block in enumerate(blocks):
        sel.labels[block[0]] = len(sel.instrs)
        sel.block_emitted = set()
        for nid in block:
            sel.emit_node(nid)
        tail = g.nodes[block[-1]]
        next_head = blocks[bi + 1][0] if bi + 1 < len(blocks) else None
        if tail.opcode == "Return":
            continue
        if tail.opcode == "Branch":
            uses: list = []
            cond = sel.operand(tail.data_inputs[0], uses)
            targets = []
            for s in tail.control_next:
                moves = edge_moves.get((tail.id, s))
                if moves:
                    key = ("edge", tail.id, s)
                    deferred_edges.append((key, s, moves))
                    targets.append(key)
                else:
                    targets.append(("label", s))
            pc = sel.emit(("branch", cond, targets[0], targets[1],
                           tail.meta.get("what", "condition"),
                           tail.meta.get("src")), uses=uses)
            jump_fixups.append(pc)
            continue
        real_succs = [s for s in tail.control_next
                      if g.nodes[s].opcode != "FrameRestore"]
        succ = real_succs[0]
        moves = edge_moves.get((tail.id, succ))
        if moves:
            _parallel_moves(moves, emit_mov)
        if succ != next_head:
            pc = sel.emit(("jump", ("label", succ)))
            jump_fixups.append(pc)

    edge_entry: dict = {}
    for key, succ, moves in deferred_edges:
        if key in edge_entry:
            continue
        edge_entry[key] = len(sel.instrs)
        sel.block_emitted = set()
        _parallel_moves(moves, emit_mov)
        pc = sel.emit(("jump", ("label", succ)))
        jump_fixups.append(pc)

    def resolve(t):
        if isinstance(t, tuple) and t and t[0] == "label":
            return sel.labels[t[1]]
        if isinstance(t, tuple) and t and t[0] == "edge":
            return edge_entry[t]
        return t

    instrs = sel.instrs
    for pc in jump_fixups:
        ins = instrs[pc]
        if ins[0] == "jump":
            instrs[pc] = ("jump", resolve(ins[1]))
        else:
            instrs[pc] = ("branch", ins[1], resolve(ins[2]), resolve(ins[3]),
                          ins[4], ins[5])

    # -- liveness --------------------------------------------------------------

    n = len(instrs)
    succs: dict[int, list[int]] = {}
    for pc, instr in enumerate(instrs):
        if instr[0] == "jump":
            succs[pc] = [instr[1]]
        elif instr[0] == "branch":
            succs[pc] = [instr[2], instr[3]]
        elif instr[0] == "ret":
            succs[pc] = []
        else:
            succs[pc] = [pc + 1] if pc + 1 < n else []

    live_in: list[set] = [set() for _ in range(n)]
    changed = True
    while changed:
        changed = False
        for pc in range(n - 1, -1, -1):
            out: set = set()
            for s in succs[pc]:
                out |= live_in[s]
            new_in = set(sel.uses.get(pc, ())) | (out - set(sel.defs.get(pc, ())))
            if new_in != live_in[pc]:
                live_in[pc] = new_in
                changed = True

    start: dict[int, int] = {}
    end: dict[int, int] = {}
    params = sorted((nid for nid, node in g.nodes.items()
                     if node.opcode == "Param"),
                    key=lambda nid: g.nodes[nid].meta["index"])
    for p in params:
        start[p] = 0
        end[p] = 0
    for pc in range(n):
        touched = set(sel.defs.get(pc, ())) | set(sel.uses.get(pc, ())) | live_in[pc]
        for v in touched:
            start.setdefault(v, pc)
            end[v] = max(end.get(v, pc), pc)

    # -- linear scan -------------------------------------------------------------

    loc: dict[int, int] = {}
    free = list(range(num_regs))
    active: list[tuple[int, int]] = []
    num_slots = 0

    def new_slot() -> int:
        nonlocal num_slots
        s = num_regs + num_slots
        num_slots += 1
        return s

    for v in sorted(start, key=lambda v: (start[v], v)):
        pos = start[v]
        still = []
        for e, av in active:
            if e < pos:
                if loc[av] < num_regs:
                    free.append(loc[av])
            else:
                still.append((e, av))
        active = still
        free.sort()
        if free:
            loc[v] = free.pop(0)
            active.append((end[v], v))
            active.sort()
        else:
            active.sort()
            furthest_end, furthest = active[-1] if active else (-1, None)
            if furthest is not None and furthest_end > end[v]:
                loc[v] = loc[furthest]
                loc[furthest] = new_slot()
                active[-1] = (end[v], v)
                active.sort()
            else:
                loc[v] = new_slot()

    scratch_loc = num_regs + num_slots

    def loc_of(vid):
        node = g.nodes.get(vid)
        if node is not None and node.opcode == "Const":
            return ("c", node.meta.get("value"))
        return loc[vid]

    def map_op(o):
        if isinstance(o, int):
            return loc[o]
        if o == SCRATCH:
            return scratch_loc
        return o

    _ARITH_SRC = {"idiv", "fdiv", "fadd", "fsub", "fmul", "xadd", "xsub",
                  "xmul", "concat"}
    out: list = []
    guard_table: dict[int, GuardRecord] = {}
    for pc, instr in enumerate(instrs):
        kind = instr[0]
        if kind == "jump":
            out.append(instr)
        elif kind == "branch":
            out.append(("branch", map_op(instr[1]), instr[2], instr[3],
                        instr[4], instr[5]))
        elif kind == "guard":
            out.append(("guard", tuple((map_op(o), t) for o, t in instr[1])))
        elif kind == "call":
            out.append(("call", map_op(instr[1]), instr[2], instr[3],
                        instr[4], instr[5]))
        elif kind == "alloc":
            out.append(("alloc", map_op(instr[1]), instr[2]))
        elif kind in _ARITH_SRC or kind.startswith("cmp_"):
            out.append((kind, map_op(instr[1]), map_op(instr[2]),
                        map_op(instr[3]), instr[4]))
        else:
            out.append((kind, *[map_op(o) for o in instr[1:]]))
        if pc in sel.records:
            reason, guard_id, restore = sel.records[pc]
            rnode = g.nodes[restore]
            frame = _resolve_frame(rnode.meta["frame"], rnode.data_inputs, loc_of)
            guard_table[len(out) - 1] = GuardRecord(reason, guard_id, frame)

    param_locs = [loc[p] for p in params]
    return RegProgram(out, num_regs, num_slots, param_locs, guard_table)


def _resolve_frame(desc: FrameDesc, inputs: list[int], loc_of) -> ResolvedFrame:
    def slot_loc(slot):
        return loc_of(inputs[slot])

    def entry_loc(slot):
        if slot in desc.virtuals:
            return ("virt", [slot_loc(s) for s in desc.virtuals[slot]])
        return slot_loc(slot)

    vars_ = {name: entry_loc(slot) for name, slot in desc.var_slots.items()}
    pend = {ast_id: entry_loc(slot) for ast_id, slot in desc.pending_slots.items()}
    parent = None
    if desc.parent is not None:
        parent = _resolve_frame(desc.parent, inputs, loc_of)
    return ResolvedFrame(desc.func, desc.node_id, vars_, pend, parent,
                         desc.parent_call_node)
