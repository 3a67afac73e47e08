"""High/Mid/Low tier optimization phases (inlining and PEA live in their
own modules).

All phases are graph-in/graph-out, verify-clean, and the folding, memory
and cleanup phases are idempotent fixpoints.  Trapping operations (Div
with a possibly-zero divisor, checked word arithmetic, calls) are never
folded away or reordered past control flow.
"""

from __future__ import annotations

from ..values import (
    TAG_BIGINT, TAG_BOOL, TAG_FLOAT, TAG_INT, TAG_STR, GuestError,
    apply_binary, classify,
)
from .ir import IrGraph, TIER_HIGH, TIER_LOW, TIER_MID
from .pe import prune_dead_values


def control_preds(g: IrGraph, include_back: bool = True) -> dict[int, list[int]]:
    preds: dict[int, list[int]] = {nid: [] for nid in g.nodes}
    for node in g.nodes.values():
        for succ in node.control_next:
            if not include_back and (node.id, succ) in g.back_edges:
                continue
            preds[succ].append(node.id)
    return preds


def unlink_pinned(g: IrGraph, node_id: int) -> None:
    """Remove a single-fallthrough pinned node from the control chain.
    Never call on loop headers, merges or branch nodes."""
    node = g.nodes[node_id]
    fallthrough = node.control_next[0]
    my_preds = [o.id for o in g.nodes.values() if node_id in o.control_next]
    for other in g.nodes.values():
        other.control_next = [fallthrough if s == node_id else s
                              for s in other.control_next]
        if "preds" in other.meta and my_preds:
            other.meta["preds"] = [my_preds[0] if p == node_id else p
                                   for p in other.meta["preds"]]
    extra = node.control_next[1:]
    g.remove(node_id)
    for d in extra:
        _drop_if_orphan(g, d)


def _drop_if_orphan(g: IrGraph, node_id: int) -> None:
    if node_id not in g.nodes:
        return
    if g.nodes[node_id].opcode not in ("Deopt", "FrameRestore"):
        return
    for other in g.nodes.values():
        if node_id in other.control_next:
            return
    g.remove(node_id)


# ---------------------------------------------------------------------------
# Constant folding (High)
# ---------------------------------------------------------------------------

_FOLD_KIND = {"Add": "add", "Sub": "sub", "Mul": "mul", "Div": "div"}


def known_tags(g: IrGraph) -> dict[int, str]:
    """Statically known result tags: checked word ops produce Int (or they
    deopt), float arithmetic is closed, concat yields Str, compares Bool."""
    known: dict[int, str] = {}
    for nid, node in g.nodes.items():
        op = node.opcode
        tag = node.meta.get("tag")
        if op == "Const":
            t = classify(node.meta.get("value"))
            if t is not None:
                known[nid] = t
        elif op in ("Add", "Sub", "Mul") and node.meta.get("checked"):
            known[nid] = TAG_INT
        elif op == "CheckedAddWord":
            known[nid] = TAG_INT
        elif op in ("Add", "Sub", "Mul", "Div") and tag == TAG_FLOAT:
            known[nid] = TAG_FLOAT
        elif op == "Add" and tag == TAG_STR:
            known[nid] = TAG_STR
        elif op == "Compare":
            known[nid] = TAG_BOOL
    return known


def _const_value(g: IrGraph, nid: int):
    node = g.nodes[nid]
    if node.opcode == "Const":
        return True, node.meta.get("value")
    return False, None


def _fold_value_ops(g: IrGraph, consts: dict) -> bool:
    changed = False
    for nid, node in list(g.nodes.items()):
        kind = _FOLD_KIND.get(node.opcode)
        is_cmp = node.opcode == "Compare"
        if kind is None and not is_cmp:
            continue
        vals = []
        ok = True
        for inp in node.data_inputs:
            is_const, v = _const_value(g, inp)
            if not is_const:
                ok = False
                break
            vals.append(v)
        tag = node.meta.get("tag")
        if ok:
            if kind == "div" and (len(vals) < 2 or vals[1] == 0):
                continue  # preserve the runtime trap
            try:
                if is_cmp:
                    result = apply_binary(
                        "logical" if node.meta.get("op") in ("and", "or")
                        else "compare", node.meta.get("op"), *vals)
                elif kind == "add" and tag == TAG_STR:
                    result = apply_binary("concat", None, *vals)
                else:
                    result = apply_binary(kind, None, *vals)
            except GuestError:
                continue  # fold must not swallow a runtime error
            _replace_with_const(g, node, result, consts)
            changed = True
            continue
        # algebraic identities on exact integer tags
        if kind in ("add", "sub", "mul") and tag in (TAG_INT, TAG_BIGINT):
            a, b = node.data_inputs
            ca, va = _const_value(g, a)
            cb, vb = _const_value(g, b)
            if kind == "mul" and ((ca and va == 0) or (cb and vb == 0)):
                _replace_with_const(g, node, 0, consts)
                changed = True
            elif kind == "mul" and ca and va == 1:
                _replace_with_value(g, node, b)
                changed = True
            elif kind == "mul" and cb and vb == 1:
                _replace_with_value(g, node, a)
                changed = True
            elif kind == "add" and ca and va == 0:
                _replace_with_value(g, node, b)
                changed = True
            elif kind in ("add", "sub") and cb and vb == 0:
                _replace_with_value(g, node, a)
                changed = True
    return changed


def _make_const(g: IrGraph, value, consts: dict) -> int:
    key = (type(value).__name__, value)
    if key in consts and consts[key] in g.nodes:
        return consts[key]
    node = g.add("Const", value=value)
    consts[key] = node.id
    return node.id


def _replace_with_const(g: IrGraph, node, value, consts: dict) -> None:
    cid = _make_const(g, value, consts)
    _replace_with_value(g, node, cid)


def _replace_with_value(g: IrGraph, node, value_id: int) -> None:
    if node.control_next:
        unlink_pinned(g, node.id)
    else:
        g.remove(node.id)
    g.replace_input(node.id, value_id)
    for other in g.nodes.values():
        if "frame_inputs" in other.meta:
            other.meta["frame_inputs"] = [
                value_id if i == node.id else i
                for i in other.meta["frame_inputs"]]


def _simplify_phis(g: IrGraph) -> bool:
    changed = False
    for nid, node in list(g.nodes.items()):
        if node.opcode != "Phi":
            continue
        inputs = set(node.data_inputs)
        inputs.discard(nid)
        if len(inputs) == 1:
            replacement = inputs.pop()
            anchor = node.meta.get("anchor")
            if anchor in g.nodes:
                anchor_node = g.nodes[anchor]
                anchor_node.meta["phis"] = [
                    p for p in anchor_node.meta.get("phis", []) if p != nid]
            g.remove(nid)
            g.replace_input(nid, replacement)
            for other in g.nodes.values():
                if "frame_inputs" in other.meta:
                    other.meta["frame_inputs"] = [
                        replacement if i == nid else i
                        for i in other.meta["frame_inputs"]]
            changed = True
    return changed


def _fold_guards(g: IrGraph) -> bool:
    """Drop guard pairs that are statically satisfied or established by a
    dominating guard on every path; remove guards left with no pairs."""
    changed = False
    known = known_tags(g)
    preds = control_preds(g, include_back=False)
    facts_out: dict[int, frozenset] = {}
    removals: list[int] = []
    for nid in g.control_order():
        node = g.nodes[nid]
        if node.opcode == "LoopBegin":
            facts = frozenset()
        else:
            in_sets = [facts_out[p] for p in preds[nid] if p in facts_out]
            facts = frozenset.intersection(*in_sets) if in_sets else frozenset()
        if node.opcode == "Guard":
            pairs = list(zip(node.data_inputs, node.meta["expected"]))
            keep = [(v, t) for v, t in pairs
                    if (v, t) not in facts and known.get(v) != t]
            if len(keep) != len(pairs):
                changed = True
                if keep:
                    node.data_inputs = [v for v, _ in keep]
                    node.meta["expected"] = tuple(t for _, t in keep)
                else:
                    removals.append(nid)
            facts = facts | frozenset(pairs)
        facts_out[nid] = facts
    for nid in removals:
        unlink_pinned(g, nid)
    return changed


def phase_constant_fold(g: IrGraph) -> IrGraph:
    assert g.tier == TIER_HIGH
    consts: dict = {}
    for nid, node in g.nodes.items():
        if node.opcode == "Const":
            v = node.meta.get("value")
            if isinstance(v, (int, float, str, bool, type(None))):
                consts.setdefault((type(v).__name__, v), nid)
    while True:
        changed = _fold_value_ops(g, consts)
        changed |= _fold_guards(g)
        changed |= _simplify_phis(g)
        if not changed:
            break
    prune_dead_values(g)
    return g


# ---------------------------------------------------------------------------
# Memory optimization (Mid)
# ---------------------------------------------------------------------------

def _field_key(g: IrGraph, obj: int, idx: int):
    is_const, v = _const_value(g, idx)
    if is_const and type(v) is int:
        return (obj, v)
    return None


_MEM_BARRIER_OPS = {"Call"}


def _kills_memory(node) -> bool:
    return node.opcode == "Call"


def _can_deopt(node) -> bool:
    if node.opcode in ("Guard", "CheckedAddWord"):
        return True
    if node.opcode in ("Add", "Sub", "Mul") and node.meta.get("checked"):
        return True
    return len(node.control_next) > 1


def phase_mem_opt(g: IrGraph) -> IrGraph:
    assert g.tier == TIER_MID
    while _redundant_load_pass(g) or _dead_store_pass(g):
        pass
    prune_dead_values(g)
    return g


def _redundant_load_pass(g: IrGraph) -> bool:
    preds = control_preds(g, include_back=False)
    avail_out: dict[int, dict] = {}
    replace: list[tuple[int, int]] = []
    for nid in g.control_order():
        node = g.nodes[nid]
        if node.opcode == "LoopBegin":
            avail: dict = {}
        else:
            in_states = [avail_out[p] for p in preds[nid] if p in avail_out]
            if in_states:
                avail = dict(in_states[0])
                for other in in_states[1:]:
                    avail = {k: v for k, v in avail.items()
                             if other.get(k) == v}
            else:
                avail = {}
        if node.opcode == "LoadField":
            key = _field_key(g, node.data_inputs[0], node.data_inputs[1])
            if key is not None:
                if key in avail:
                    replace.append((nid, avail[key]))
                else:
                    avail[key] = nid
        elif node.opcode == "StoreField":
            key = _field_key(g, node.data_inputs[0], node.data_inputs[1])
            avail = {}
            if key is not None:
                avail[key] = node.data_inputs[2]
        elif _kills_memory(node):
            avail = {}
        avail_out[nid] = avail
    for load_id, value_id in replace:
        if load_id in g.nodes and value_id in g.nodes:
            unlink_pinned(g, load_id)
            g.replace_input(load_id, value_id)
    return bool(replace)


def _dead_store_pass(g: IrGraph) -> bool:
    """Remove a store overwritten by a later store to the same field with
    no intervening read, call, trap, deopt point, or control flow.  Only
    pinned nodes appear on the control walk; Begin and Alloc are the only
    ones transparent to memory."""
    pending: dict[tuple, int] = {}
    removals: list[int] = []
    for nid in g.control_order():
        node = g.nodes[nid]
        op = node.opcode
        if op == "StoreField":
            key = _field_key(g, node.data_inputs[0], node.data_inputs[1])
            if key is not None:
                if key in pending:
                    removals.append(pending[key])
                pending[key] = nid
            else:
                pending.clear()
        elif op in ("Begin", "Alloc"):
            continue
        else:
            pending.clear()
    for nid in removals:
        if nid in g.nodes:
            unlink_pinned(g, nid)
    return bool(removals)


# ---------------------------------------------------------------------------
# Low-tier cleanup
# ---------------------------------------------------------------------------

_DOUBLING = {"fmul": "fadd", "xmul": "xadd"}


def phase_low_cleanup(g: IrGraph) -> IrGraph:
    assert g.tier == TIER_LOW
    changed = True
    while changed:
        changed = False
        for nid, node in list(g.nodes.items()):
            # x*2 -> x+x (exact for words, BigInts and binary64 floats)
            if node.opcode == "CheckedAddWord" and node.meta.get("op") == "mul":
                new_meta_op = "add"
            elif node.opcode == "RawOp" and node.meta.get("op") in _DOUBLING:
                new_meta_op = _DOUBLING[node.meta["op"]]
            else:
                continue
            a, b = node.data_inputs
            ca, va = _const_value(g, a)
            cb, vb = _const_value(g, b)
            two = 2.0 if node.meta.get("tag") == TAG_FLOAT else 2
            if cb and vb == two and type(vb) is type(two):
                other = a
            elif ca and va == two and type(va) is type(two):
                other = b
            else:
                continue
            node.meta["op"] = new_meta_op
            node.data_inputs = [other, other]
            changed = True
        # dead pinned loads feed nothing and cannot trap (lea checks)
        users = g.users()
        for nid, node in list(g.nodes.items()):
            if (node.opcode == "RawOp" and node.meta.get("op") == "load"
                    and not users[nid]):
                unlink_pinned(g, nid)
                changed = True
    prune_dead_values(g)
    return g
