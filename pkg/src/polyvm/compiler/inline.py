"""Late inlining over independently parsed, cached callee graphs.

A call site qualifies when its profiled execution count meets the
threshold, the callee's cached High-tier graph fits the node budget, and
the callee is not already on the site's inline chain (so recursion inlines
exactly one level).  Frame states compose: every Deopt copied out of the
callee gains the caller's frame as its parent, giving multi-frame deopts.
"""

from __future__ import annotations

from .ir import FrameDesc, IrGraph
from .pe import prune_dead_values
from .ir import verify

INLINE_NODE_BUDGET = 50
INLINE_MIN_SITES = 8

_ID_METAS = ("anchor", "merge", "body", "exit", "branch")


def phase_inline(g: IrGraph, cache, load_callee,
                 budget: int = INLINE_NODE_BUDGET,
                 min_sites: int = INLINE_MIN_SITES) -> IrGraph:
    """load_callee(name) -> High-tier IrGraph (cached, copy) or None."""
    worklist = [nid for nid, n in g.nodes.items()
                if n.opcode == "Call" and str(n.meta.get("callee", "")).startswith("fn:")]
    inlined = 0
    while worklist:
        cid = worklist.pop(0)
        if cid not in g.nodes:
            continue
        call = g.nodes[cid]
        name = call.meta["callee"][3:]
        chain = call.meta.get("inline_chain", ())
        if name in chain:
            continue
        if call.meta.get("site_count", 0) < min_sites:
            continue
        callee = load_callee(name)
        if callee is None or len(callee) > budget:
            continue
        new_calls = _inline_site(g, call, callee, chain + (name,))
        worklist.extend(new_calls)
        inlined += 1
    for node in g.nodes.values():
        if node.opcode == "Call":
            node.meta.pop("frame", None)
            node.meta.pop("frame_inputs", None)
    prune_dead_values(g)
    problems = verify(g)
    if problems:
        raise AssertionError(f"inlining broke the graph: {problems}")
    g.meta_inlined = inlined
    return g


def _inline_site(g: IrGraph, call, callee: IrGraph, chain: tuple) -> list[int]:
    args = list(call.data_inputs)
    caller_desc: FrameDesc = call.meta["frame"]
    caller_inputs: list[int] = call.meta["frame_inputs"]

    mapping: dict[int, int] = {}
    for old_id in sorted(callee.nodes):
        old = callee.nodes[old_id]
        new = g.add(old.opcode)
        new.meta = dict(old.meta)
        mapping[old_id] = new.id
    for old_id, new_id in mapping.items():
        old = callee.nodes[old_id]
        new = g.nodes[new_id]
        new.data_inputs = [mapping[i] for i in old.data_inputs]
        new.control_next = [mapping[s] for s in old.control_next]
        for key in _ID_METAS:
            if key in new.meta:
                new.meta[key] = mapping[new.meta[key]]
        if "preds" in new.meta:
            new.meta["preds"] = [mapping[p] for p in new.meta["preds"]]
        if "phis" in new.meta:
            new.meta["phis"] = [mapping[p] for p in new.meta["phis"]]
        if "frame_inputs" in new.meta:
            new.meta["frame_inputs"] = [mapping[i] for i in new.meta["frame_inputs"]]
        if new.opcode == "Call":
            new.meta["inline_chain"] = chain
    for src, dst in callee.back_edges:
        g.back_edges.add((mapping[src], mapping[dst]))

    # bind parameters to argument values
    for old_id, new_id in list(mapping.items()):
        node = g.nodes.get(new_id)
        if node is None or node.opcode != "Param":
            continue
        arg = args[node.meta["index"]]
        g.remove(new_id)
        g.replace_input(new_id, arg)
        for other in g.nodes.values():
            if "frame_inputs" in other.meta:
                other.meta["frame_inputs"] = [
                    arg if i == new_id else i for i in other.meta["frame_inputs"]]

    # compose frame states outward through this call site
    for old_id, new_id in mapping.items():
        node = g.nodes.get(new_id)
        if node is None:
            continue
        if node.opcode == "Deopt" or (node.opcode == "Call" and "frame" in node.meta):
            if node.opcode == "Deopt":
                base = len(node.data_inputs)
                node.data_inputs.extend(caller_inputs)
            else:
                base = len(node.meta["frame_inputs"])
                node.meta["frame_inputs"] = list(node.meta["frame_inputs"]) + list(caller_inputs)
            rebased = caller_desc.remap_slots(
                {i: base + i for i in range(len(caller_inputs))})
            inner: FrameDesc = node.meta["frame"]
            node.meta["frame"] = FrameDesc(
                inner.func, inner.node_id, dict(inner.var_slots),
                dict(inner.pending_slots), dict(inner.virtuals),
                parent=rebased, parent_call_node=call.meta.get("src"))

    # control splice: preds -> callee entry ... returns -> merge -> fallthrough
    entry_new = mapping[callee.entry]
    fallthrough = call.control_next[0]
    for other in g.nodes.values():
        other.control_next = [entry_new if s == call.id else s
                              for s in other.control_next]
    returns = [mapping[old_id] for old_id, old in callee.nodes.items()
               if old.opcode == "Return"]
    preds_of = {r: [o.id for o in g.nodes.values() if r in o.control_next]
                for r in returns}
    if len(returns) == 1:
        ret = g.nodes[returns[0]]
        result = ret.data_inputs[0]
        exit_pred = preds_of[returns[0]][0]
        for other in g.nodes.values():
            other.control_next = [fallthrough if s == returns[0] else s
                                  for s in other.control_next]
        g.remove(returns[0])
    else:
        merge = g.add("Merge", preds=[preds_of[r][0] for r in returns])
        phi = g.add("Phi", data_inputs=[g.nodes[r].data_inputs[0] for r in returns],
                    anchor=merge.id, var="<ret>")
        merge.meta["phis"] = [phi.id]
        merge.control_next = [fallthrough]
        for r in returns:
            for other in g.nodes.values():
                other.control_next = [merge.id if s == r else s
                                      for s in other.control_next]
            g.remove(r)
        result = phi.id
        exit_pred = merge.id

    # the call's value is now the inlined result
    for other in g.nodes.values():
        if "preds" in other.meta:
            other.meta["preds"] = [exit_pred if p == call.id else p
                                   for p in other.meta["preds"]]
    g.remove(call.id)
    g.replace_input(call.id, result)
    for other in g.nodes.values():
        if "frame_inputs" in other.meta:
            other.meta["frame_inputs"] = [
                result if i == call.id else i for i in other.meta["frame_inputs"]]

    return [mapping[old_id] for old_id, old in callee.nodes.items()
            if old.opcode == "Call"
            and str(old.meta.get("callee", "")).startswith("fn:")
            and mapping[old_id] in g.nodes]
