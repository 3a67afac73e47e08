"""Lowering: deconstructs each tier's operations for the next one.

High->Mid   guarded Int arithmetic becomes explicit checked word ops with
            an overflow deopt edge; Float/BigInt/Str arithmetic and
            comparisons become raw machine ops.
Mid->Low    field access expands into base+offset address arithmetic
            (lea + load/store raw ops); allocation becomes a raw op;
            structured If becomes Branch.
Low->Final  Guards become raw guard ops, Deopts become FrameRestores;
            the verifier then admits only machine-level opcodes.
"""

from __future__ import annotations

from ..values import TAG_BIGINT, TAG_FLOAT, TAG_INT, TAG_STR
from .ir import IrGraph, TIER_FINAL, TIER_HIGH, TIER_LOW, TIER_MID, verify

_FLOAT_OPS = {"Add": "fadd", "Sub": "fsub", "Mul": "fmul"}
_EXACT_OPS = {"Add": "xadd", "Sub": "xsub", "Mul": "xmul"}
_CHECKED_OPS = {"Add": "add", "Sub": "sub", "Mul": "mul"}


def lower(g: IrGraph) -> IrGraph:
    if g.tier == TIER_HIGH:
        _lower_high_to_mid(g)
        g.tier = TIER_MID
    elif g.tier == TIER_MID:
        _lower_mid_to_low(g)
        g.tier = TIER_LOW
    elif g.tier == TIER_LOW:
        _lower_low_to_final(g)
        g.tier = TIER_FINAL
    else:
        raise ValueError(f"cannot lower tier {g.tier}")
    problems = verify(g)
    if problems:
        raise AssertionError(f"lowering to {g.tier} broke the graph: {problems}")
    return g


def _lower_high_to_mid(g: IrGraph) -> None:
    for node in list(g.nodes.values()):
        op = node.opcode
        tag = node.meta.get("tag")
        if op in ("Add", "Sub", "Mul"):
            if node.meta.get("checked"):
                node.opcode = "CheckedAddWord"
                node.meta["op"] = _CHECKED_OPS[op]
            elif tag == TAG_FLOAT:
                node.opcode = "RawOp"
                node.meta["op"] = _FLOAT_OPS[op]
            elif tag == TAG_STR:
                node.opcode = "RawOp"
                node.meta["op"] = "concat"
            else:
                node.opcode = "RawOp"
                node.meta["op"] = _EXACT_OPS[op]
        elif op == "Div":
            node.opcode = "RawOp"
            node.meta["op"] = "fdiv" if tag == TAG_FLOAT else "idiv"
        elif op == "Compare":
            node.opcode = "RawOp"
            node.meta["op"] = f"cmp_{node.meta['op']}"


def _lower_mid_to_low(g: IrGraph) -> None:
    for node in list(g.nodes.values()):
        op = node.opcode
        if op == "LoadField":
            obj, idx = node.data_inputs
            lea = g.add("RawOp", data_inputs=[obj, idx], op="lea",
                        src=node.meta.get("src"))
            lea.meta["guard_id"] = node.meta.get("guard_id")
            if "frame" in node.meta:
                lea.meta["frame"] = node.meta["frame"]
            lea.control_next = list(node.control_next)
            node.opcode = "RawOp"
            node.meta["op"] = "load"
            node.data_inputs = [lea.id]
            node.control_next = [node.control_next[0]] if node.control_next else []
            lea.control_next = [node.id] + lea.control_next[1:]
            _repoint_preds(g, node.id, lea.id, skip={lea.id})
        elif op == "StoreField":
            obj, idx, value = node.data_inputs
            if node.meta.get("safe"):
                lea = g.add("RawOp", data_inputs=[obj, idx], op="lea",
                            src=node.meta.get("src"), safe=True)
            else:
                lea = g.add("RawOp", data_inputs=[obj, idx], op="lea",
                            src=node.meta.get("src"))
                lea.meta["guard_id"] = node.meta.get("guard_id")
            lea.control_next = list(node.control_next)
            node.opcode = "RawOp"
            node.meta["op"] = "store"
            node.data_inputs = [lea.id, value]
            node.control_next = [node.control_next[0]] if node.control_next else []
            lea.control_next = [node.id] + lea.control_next[1:]
            _repoint_preds(g, node.id, lea.id, skip={lea.id})
        elif op == "Alloc":
            node.opcode = "RawOp"
            node.meta["op"] = "alloc"
        elif op == "If":
            node.opcode = "Branch"


def _repoint_preds(g: IrGraph, old: int, new: int, skip: set) -> None:
    for other in g.nodes.values():
        if other.id in skip:
            continue
        other.control_next = [new if s == old else s
                              for s in other.control_next]
        if "preds" in other.meta:
            other.meta["preds"] = [new if p == old else p
                                   for p in other.meta["preds"]]


def _lower_low_to_final(g: IrGraph) -> None:
    for node in list(g.nodes.values()):
        if node.opcode == "Guard":
            node.opcode = "RawOp"
            node.meta["op"] = "guard"
        elif node.opcode == "Deopt":
            node.opcode = "FrameRestore"
