"""Partial escape analysis and scalar replacement.

Classification is a pure reachability analysis: an allocation escapes when
its value (followed through Phis) reaches a Return, a Call argument, or
the value position of a StoreField.  A sink in the allocation's own region
gives Escapes; sinks only in deeper (conditional or loop) regions give
PartialEscape; no sinks, NoEscape.

Scalar replacement virtualizes non-Escapes allocations with a
flow-sensitive walk over the structured control graph: loads rewire to the
stored values, the allocation and its stores disappear, and
materialization code is inserted where an escaping path begins (hoisted
out of any loop the object was born outside of, so object identity across
iterations is preserved).  Deopt frames keep virtual objects virtual: the
frame records field values and the deopt handler rebuilds the object only
if the guard fires.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import FrameDesc, IrGraph, TIER_HIGH, verify
from .pe import prune_dead_values
from .phases import unlink_pinned

NO_ESCAPE = "NoEscape"
ESCAPES = "Escapes"
PARTIAL = "PartialEscape"


@dataclass
class EscapeInfo:
    classification: dict[int, str] = field(default_factory=dict)
    partial_points: dict[int, tuple] = field(default_factory=dict)

    def of(self, alloc_id: int) -> str | None:
        return self.classification.get(alloc_id)


# ---------------------------------------------------------------------------
# Classification (pure)
# ---------------------------------------------------------------------------

def region_paths(g: IrGraph) -> dict[int, tuple]:
    """Structured region path of every control node, e.g.
    (('loop', 3), ('body', 3), ('then', 9))."""
    paths: dict[int, tuple] = {}

    def walk(nid: int | None, stop: int | None, path: tuple) -> None:
        while nid is not None and nid != stop and nid not in paths:
            node = g.nodes[nid]
            paths[nid] = path
            op = node.opcode
            if op == "LoopBegin":
                branch = node.meta["branch"]
                walk(node.control_next[0], branch, path + (("loop", nid),))
                paths.setdefault(branch, path + (("loop", nid),))
                bnode = g.nodes[branch]
                walk(bnode.control_next[0], nid,
                     path + (("loop", nid), ("body", nid)))
                nid = node.meta["exit"]
                continue
            if op == "If":
                merge = node.meta.get("merge")
                walk(node.control_next[0], merge, path + (("then", nid),))
                walk(node.control_next[1], merge, path + (("else", nid),))
                nid = merge
                continue
            nid = node.control_next[0] if node.control_next else None

    walk(g.entry, None, ())
    return paths


def _alias_closure(g: IrGraph, alloc_id: int) -> set[int]:
    aliases = {alloc_id}
    changed = True
    while changed:
        changed = False
        for nid, node in g.nodes.items():
            if node.opcode == "Phi" and nid not in aliases:
                if any(i in aliases for i in node.data_inputs):
                    aliases.add(nid)
                    changed = True
    return aliases


def _sink_uses(g: IrGraph, aliases: set[int]) -> list[int]:
    sinks = []
    for nid, node in g.nodes.items():
        op = node.opcode
        if op == "Return" and node.data_inputs and node.data_inputs[0] in aliases:
            sinks.append(nid)
        elif op == "Call" and any(i in aliases for i in node.data_inputs):
            sinks.append(nid)
        elif op == "StoreField" and node.data_inputs[2] in aliases:
            sinks.append(nid)
    return sinks


def classify_escapes(g: IrGraph) -> EscapeInfo:
    info = EscapeInfo()
    paths = region_paths(g)
    for nid, node in g.nodes.items():
        if node.opcode != "Alloc":
            continue
        aliases = _alias_closure(g, nid)
        sinks = _sink_uses(g, aliases)
        if not sinks:
            info.classification[nid] = NO_ESCAPE
            continue
        birth = paths.get(nid, ())
        conditional = [s for s in sinks if paths.get(s, ()) != birth]
        if len(conditional) < len(sinks):
            info.classification[nid] = ESCAPES
        else:
            info.classification[nid] = PARTIAL
            info.partial_points[nid] = tuple(sorted(conditional))
    return info


# ---------------------------------------------------------------------------
# Scalar replacement
# ---------------------------------------------------------------------------

class _Virtual:
    __slots__ = ("fields", "current", "birth_loops")

    def __init__(self, fields: list, current: int | None, birth_loops: frozenset):
        self.fields = fields
        self.current = current
        self.birth_loops = birth_loops

    def clone(self) -> "_Virtual":
        return _Virtual(list(self.fields), self.current, self.birth_loops)


class _Replacer:
    def __init__(self, g: IrGraph, info: EscapeInfo):
        self.g = g
        self.info = info
        self.state: dict[int, _Virtual] = {}
        self.dead: list[int] = []
        self.load_rewires: list[tuple[int, int]] = []
        self.deopt_virtuals: list[tuple[int, dict]] = []
        self.loop_stack: list[list] = []   # [header, splice_pred]
        self.prev: int | None = None

    # -- helpers ---------------------------------------------------------------

    def tracked(self, vid: int) -> bool:
        v = self.state.get(vid)
        return v is not None and v.current is None

    def resolve(self, vid: int | None) -> int | None:
        v = self.state.get(vid)
        if v is not None and v.current is not None:
            return v.current
        return vid

    def const_idx(self, vid: int):
        node = self.g.nodes.get(vid)
        if node is not None and node.opcode == "Const":
            v = node.meta.get("value")
            if type(v) is int:
                return v
        return None

    def _const(self, value) -> int:
        for nid, node in self.g.nodes.items():
            if node.opcode == "Const" and node.meta.get("value") == value \
                    and type(node.meta.get("value")) is type(value):
                return nid
        return self.g.add("Const", value=value).id

    def _splice_before(self, prev_id: int, next_id: int, chain: list) -> None:
        g = self.g
        pred = g.nodes[prev_id]
        pred.control_next = [chain[0].id if s == next_id else s
                             for s in pred.control_next]
        for a, b in zip(chain, chain[1:]):
            a.control_next = [b.id]
        chain[-1].control_next = [next_id]
        nxt = g.nodes[next_id]
        if "preds" in nxt.meta:
            nxt.meta["preds"] = [chain[-1].id if p == prev_id else p
                                 for p in nxt.meta["preds"]]

    def materialize(self, alloc_id: int, before: int) -> None:
        """Allocate for real on the current path, hoisted out of any loop
        the object was born outside of."""
        virt = self.state[alloc_id]
        if virt.current is not None:
            return
        splice_prev, splice_next = self.prev, before
        hoist_entry = None
        for entry in self.loop_stack:
            if entry[0] not in virt.birth_loops:
                splice_prev, splice_next = entry[1], entry[0]
                hoist_entry = entry
                break
        g = self.g
        src = g.nodes[alloc_id].meta.get("src")
        new_alloc = g.add("Alloc", nfields=len(virt.fields), src=src)
        chain = [new_alloc]
        for i, fv in enumerate(virt.fields):
            if fv is None:
                continue
            store = g.add("StoreField",
                          data_inputs=[new_alloc.id, self._const(i),
                                       self.resolve(fv)],
                          src=src, safe=True)
            chain.append(store)
        self._splice_before(splice_prev, splice_next, chain)
        if hoist_entry is not None:
            hoist_entry[1] = chain[-1].id
        elif splice_prev == self.prev:
            self.prev = chain[-1].id
        virt.current = new_alloc.id

    def rewrite_inputs(self, node) -> None:
        node.data_inputs = [self.resolve(i) for i in node.data_inputs]

    def _escape_check(self, node) -> None:
        for i in list(node.data_inputs):
            if self.tracked(i):
                self.materialize(i, node.id)
        self.rewrite_inputs(node)

    # -- the walk ---------------------------------------------------------------

    def walk(self, nid: int | None, stop: int | None) -> None:
        g = self.g
        while nid is not None and nid != stop:
            node = g.nodes[nid]
            op = node.opcode
            if op == "LoopBegin":
                self._enter_loop(node)
                nid = node.meta["exit"]
                continue
            if op == "If":
                nid = self._branch(node)
                continue
            self._process(node)
            self.prev = nid
            nid = node.control_next[0] if node.control_next else None

    def _enter_loop(self, header) -> None:
        g = self.g
        self._sync_phis(header, header.id)
        branch_id = header.meta["branch"]
        self.loop_stack.append([header.id, self.prev])
        self.prev = header.id
        self.walk(header.control_next[0], branch_id)
        branch = g.nodes[branch_id]
        self._escape_check(branch)
        self.prev = branch_id
        self.walk(branch.control_next[0], header.id)
        # back-edge values feeding header phis must be real objects too
        loop_end = next((a for a, b in g.back_edges if b == header.id), None)
        if loop_end is not None:
            le_preds = [o.id for o in g.nodes.values()
                        if loop_end in o.control_next]
            if le_preds:
                self.prev = le_preds[0]
            self._sync_phis(header, loop_end)
        self.loop_stack.pop()
        # drop per-iteration virtuals born in the body
        marker = header.id
        for aid in [a for a, v in self.state.items() if marker in v.birth_loops]:
            del self.state[aid]
        self.prev = branch_id

    def _branch(self, if_node) -> int | None:
        g = self.g
        self._escape_check(if_node)
        merge = if_node.meta.get("merge")
        snapshot = {k: v.clone() for k, v in self.state.items()}
        self.prev = if_node.id
        self.walk(if_node.control_next[0], merge)
        then_state, then_prev = self.state, self.prev
        self.state, self.prev = snapshot, if_node.id
        self.walk(if_node.control_next[1], merge)
        else_state, else_prev = self.state, self.prev
        if merge is None:
            self.state = {}
            return None
        self._merge_states(then_state, then_prev, else_state, else_prev,
                           g.nodes[merge])
        self.prev = merge
        mnode = g.nodes[merge]
        return mnode.control_next[0] if mnode.control_next else None

    def _sync_phis(self, anchor, before: int) -> None:
        for pid in list(anchor.meta.get("phis", [])):
            phi = self.g.nodes.get(pid)
            if phi is None:
                continue
            for i in list(phi.data_inputs):
                if self.tracked(i):
                    self.materialize(i, before)
            self.rewrite_inputs(phi)

    def _process(self, node) -> None:
        op = node.opcode
        if op == "Alloc":
            if self.info.of(node.id) != ESCAPES:
                loops = frozenset(entry[0] for entry in self.loop_stack)
                self.state[node.id] = _Virtual(
                    [None] * node.meta["nfields"], None, loops)
                self.dead.append(node.id)
            return
        if op == "StoreField":
            obj, idx, value = node.data_inputs
            if self.tracked(value):
                self.materialize(value, node.id)
            if self.tracked(obj):
                virt = self.state[obj]
                k = self.const_idx(idx)
                store_crosses_loop = any(
                    entry[0] not in virt.birth_loops
                    for entry in self.loop_stack)
                if k is None or not 0 <= k < len(virt.fields) \
                        or store_crosses_loop:
                    self.materialize(obj, node.id)
                    self.rewrite_inputs(node)
                    return
                virt.fields[k] = self.resolve(value)
                self.dead.append(node.id)
                return
            self.rewrite_inputs(node)
            return
        if op == "LoadField":
            obj, idx = node.data_inputs
            if self.tracked(obj):
                virt = self.state[obj]
                k = self.const_idx(idx)
                if k is None or not 0 <= k < len(virt.fields) \
                        or virt.fields[k] is None:
                    self.materialize(obj, node.id)
                    self.rewrite_inputs(node)
                    return
                self.load_rewires.append((node.id, virt.fields[k]))
                self.dead.append(node.id)
                return
            self.rewrite_inputs(node)
            return
        if op in ("Deopt", "FrameRestore"):
            virt_slots = {}
            for slot, vid in enumerate(node.data_inputs):
                if self.tracked(vid):
                    virt_slots[slot] = [self.resolve(f) if f is not None else None
                                        for f in self.state[vid].fields]
            if virt_slots:
                self.deopt_virtuals.append((node.id, virt_slots))
            node.data_inputs = [i if self.tracked(i) else self.resolve(i)
                                for i in node.data_inputs]
            return
        self._escape_check(node)

    def _merge_states(self, then_state, then_prev, else_state, else_prev,
                      merge) -> None:
        merged: dict[int, _Virtual] = {}
        for aid in set(then_state) | set(else_state):
            tv = then_state.get(aid)
            ev = else_state.get(aid)
            if tv is None or ev is None:
                merged[aid] = tv or ev
                continue
            if tv.current is None and ev.current is None:
                fields = []
                for ft, fe in zip(tv.fields, ev.fields):
                    if ft == fe:
                        fields.append(ft)
                    elif ft is None or fe is None:
                        fields.append(None)
                    else:
                        phi = self.g.add("Phi", data_inputs=[ft, fe],
                                         anchor=merge.id, var="<field>")
                        merge.meta.setdefault("phis", []).append(phi.id)
                        fields.append(phi.id)
                merged[aid] = _Virtual(fields, None, tv.birth_loops)
                continue
            if tv.current is None:
                self.state, self.prev = then_state, then_prev
                self.materialize(aid, merge.id)
            if ev.current is None:
                self.state, self.prev = else_state, else_prev
                self.materialize(aid, merge.id)
            if tv.current == ev.current:
                merged[aid] = tv
            else:
                phi = self.g.add("Phi", data_inputs=[tv.current, ev.current],
                                 anchor=merge.id, var="<obj>")
                merge.meta.setdefault("phis", []).append(phi.id)
                merged[aid] = _Virtual(list(tv.fields), phi.id, tv.birth_loops)
        self.state = merged

    # -- finish -----------------------------------------------------------------

    def apply(self) -> None:
        g = self.g
        for deopt_id, virt_slots in self.deopt_virtuals:
            node = g.nodes.get(deopt_id)
            if node is None:
                continue
            desc = node.meta.get("frame")
            if desc is not None:
                desc = FrameDesc(desc.func, desc.node_id, dict(desc.var_slots),
                                 dict(desc.pending_slots), dict(desc.virtuals),
                                 desc.parent, desc.parent_call_node)
                node.meta["frame"] = desc
            placeholder = self._const(None)
            for slot, fields in virt_slots.items():
                positions = []
                for fv in fields:
                    positions.append(len(node.data_inputs))
                    node.data_inputs.append(fv if fv is not None else placeholder)
                if desc is not None:
                    desc.virtuals[slot] = positions
                node.data_inputs[slot] = placeholder
        for load_id, value in self.load_rewires:
            value = self.resolve(value)
            g.replace_input(load_id, value)
            for other in g.nodes.values():
                if "frame_inputs" in other.meta:
                    other.meta["frame_inputs"] = [
                        value if i == load_id else i
                        for i in other.meta["frame_inputs"]]
        for nid in self.dead:
            if nid in g.nodes:
                unlink_pinned(g, nid)


def phase_escape_analysis(g: IrGraph) -> tuple[IrGraph, EscapeInfo]:
    assert g.tier == TIER_HIGH
    info = classify_escapes(g)
    if any(c != ESCAPES for c in info.classification.values()):
        rep = _Replacer(g, info)
        rep.prev = g.entry
        entry = g.nodes[g.entry]
        rep.walk(entry.control_next[0] if entry.control_next else None, None)
        rep.apply()
        prune_dead_values(g)
    problems = verify(g)
    if problems:
        raise AssertionError(f"escape analysis broke the graph: {problems}")
    return g, info
