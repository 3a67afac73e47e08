"""The compilation pipeline: partial evaluation, High/Mid/Low phases with
lowering between tiers, then register allocation.  Verification runs after
every phase; a verifier failure is an internal bug, never an input error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..asttree import RewritePolicy
from .inline import INLINE_MIN_SITES, INLINE_NODE_BUDGET, phase_inline
from .ir import IrGraph, dump, verify
from .lowering import lower
from .pe import GraphCache, NotCompilable, NotStable, partial_evaluate, \
    spec_signature
from .pea import EscapeInfo, phase_escape_analysis
from .phases import phase_constant_fold, phase_low_cleanup, phase_mem_opt
from .regalloc import NUM_REGS, RegProgram, allocate_registers


class InternalCompilerError(Exception):
    pass


@dataclass
class PipelineOptions:
    inline: bool = True
    pea: bool = True
    memopt: bool = True
    inline_budget: int = INLINE_NODE_BUDGET
    inline_min_sites: int = INLINE_MIN_SITES
    num_regs: int = NUM_REGS
    dump_tiers: tuple = ()      # subset of ("high", "mid", "low", "final")


@dataclass
class CompileResult:
    program: RegProgram
    escape_info: EscapeInfo | None
    dumps: dict[str, str] = field(default_factory=dict)
    graph_final: IrGraph | None = None


def _check(g: IrGraph, phase: str) -> None:
    problems = verify(g)
    if problems:
        raise InternalCompilerError(f"verify failed after {phase}: {problems}")


def compile_pipeline(decl, profile, policy: RewritePolicy, *,
                     cache: GraphCache | None = None,
                     load_callee=None,
                     decl_names=None,
                     options: PipelineOptions | None = None) -> CompileResult:
    """Requires is_stable(decl.body); raises NotStable otherwise and
    NotCompilable for the few constructs the compiler refuses."""
    options = options or PipelineOptions()
    cache = cache if cache is not None else GraphCache()
    names = frozenset(decl_names) if decl_names is not None else frozenset({decl.name})

    key = (decl.name, spec_signature(decl))
    g = cache.get(key)
    if g is None:
        g = partial_evaluate(decl, profile, policy, decl_names=names)
        cache.put(key, g)
    _check(g, "partial evaluation")

    dumps: dict[str, str] = {}
    escape_info: EscapeInfo | None = None

    phase_constant_fold(g)
    _check(g, "constant folding")
    if options.inline and load_callee is not None:
        phase_inline(g, cache, load_callee,
                     budget=options.inline_budget,
                     min_sites=options.inline_min_sites)
        _check(g, "inlining")
        phase_constant_fold(g)
        _check(g, "post-inline folding")
    else:
        # frame snapshots are only consumed by the inliner
        for node in g.nodes.values():
            if node.opcode == "Call":
                node.meta.pop("frame", None)
                node.meta.pop("frame_inputs", None)
    if options.pea:
        g, escape_info = phase_escape_analysis(g)
        _check(g, "escape analysis")
    if "high" in options.dump_tiers:
        dumps["high"] = dump(g)

    lower(g)
    if options.memopt:
        phase_mem_opt(g)
        _check(g, "memory optimization")
    if "mid" in options.dump_tiers:
        dumps["mid"] = dump(g)

    lower(g)
    phase_low_cleanup(g)
    _check(g, "low cleanup")
    if "low" in options.dump_tiers:
        dumps["low"] = dump(g)

    lower(g)
    _check(g, "final lowering")
    if "final" in options.dump_tiers:
        dumps["final"] = dump(g)

    try:
        program = allocate_registers(g, num_regs=options.num_regs)
    except (KeyError, AssertionError) as err:
        raise InternalCompilerError(f"register allocation failed: {err}") from err
    return CompileResult(program, escape_info, dumps, g)


__all__ = [
    "CompileResult", "GraphCache", "InternalCompilerError", "NotCompilable",
    "NotStable", "PipelineOptions", "compile_pipeline",
]
