"""The execution engine: hot-spot counting, interpreted/compiled dispatch,
dynamic deoptimization, recompilation policy, AOT mode, and deterministic
counters.

One engine instance hosts one guest language and is single-threaded:
calls, compilation and deoptimization all happen on the caller's thread,
which keeps the event log ordering deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .asttree import (
    EventLog, GENERIC, RewritePolicy, STATE_GENERIC, force_generic, is_stable,
    snapshot_profile,
)
from .compiler.pe import GraphCache, NotCompilable, NotStable, partial_evaluate, \
    spec_signature
from .compiler.pipeline import CompileResult, InternalCompilerError, \
    PipelineOptions, compile_pipeline
from .interp import SpecializingInterpreter
from .langs import SourceProgram, parse
from .langs.base import FunctionDecl, NodeFactory, Program
from .langs.builtins import is_foreign
from .values import FuncValue, GObject, GuestError
from .vm import DeoptSignal, run_program

MODES = ("interp", "jit", "aot")

DEOPT_BLACKLIST_LIMIT = 3


@dataclass
class EngineConfig:
    mode: str = "jit"
    compile_threshold: int = 100
    rewrite_limit: int = 3
    stability_window: int = 16
    inline: bool = True
    pea: bool = True
    memopt: bool = True
    dump_tiers: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown engine mode {self.mode!r}")
        if self.compile_threshold < 1:
            raise ValueError("compile_threshold must be positive")


@dataclass
class Counters:
    interp_node_execs: int = 0
    compiled_instr_execs: int = 0
    compiles: int = 0
    deopts: int = 0
    guest_allocations: int = 0
    call_dispatches: int = 0
    interop_bytes_copied: int = 0

    FIELDS = ("interp_node_execs", "compiled_instr_execs", "compiles",
              "deopts", "guest_allocations", "call_dispatches",
              "interop_bytes_copied")

    def snapshot(self) -> "Counters":
        return replace(self)

    def reset(self) -> None:
        for name in self.FIELDS:
            setattr(self, name, 0)

    def delta(self, before: "Counters") -> "Counters":
        return Counters(*(getattr(self, f) - getattr(before, f)
                          for f in self.FIELDS))

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}


@dataclass
class CompiledUnit:
    function: str
    tree_version: int
    program: object            # RegProgram
    escape_info: object = None
    dumps: dict = field(default_factory=dict)


@dataclass
class FunctionState:
    decl: FunctionDecl
    invocation_count: int = 0
    compiled: CompiledUnit | None = None
    version: int = 0
    guard_deopts: dict = field(default_factory=dict)
    uncompilable: bool = False


@dataclass
class DeoptEvent:
    function: str
    guard_id: int
    failing_tags: tuple
    restored_vars: tuple
    ordinal: int


class Engine:
    """A single-language execution engine."""

    def __init__(self, lang: str, config: EngineConfig | None = None,
                 out=None, trace_sink=None):
        self.lang = lang
        self.config = config or EngineConfig()
        self.policy = RewritePolicy(self.config.rewrite_limit,
                                    self.config.stability_window)
        self.counters = Counters()
        self.log = EventLog(trace_sink)
        self.out = out if out is not None else []
        self.globals: dict[str, object] = {}
        self.functions: dict[str, FunctionState] = {}
        self.programs: list[Program] = []
        self.factory = NodeFactory()
        self.cache = GraphCache()
        self.interp = SpecializingInterpreter(self)
        self.poly = None
        self.deopt_events: list[DeoptEvent] = []
        self.ir_dumps: dict[str, dict] = {}
        self._nodes: dict[int, object] = {}
        self._decl_of_node: dict[int, str] = {}

    # -- program loading ---------------------------------------------------

    @property
    def decls(self) -> dict[str, FunctionDecl]:
        return {name: st.decl for name, st in self.functions.items()}

    def load(self, text: str, origin: str = "<inline>"):
        """Parse, register functions, AOT-compile if configured, then run
        top-level statements.  Returns the value of the last statement."""
        program = parse(SourceProgram(self.lang, text, origin), self.factory)
        self.programs.append(program)
        for name, decl in program.decls.items():
            if name in self.functions:
                raise GuestError(f"function {name} already defined")
            self.functions[name] = FunctionState(decl)
        self._nodes.update(program.nodes)
        for name, decl in program.decls.items():
            for node in decl.body.walk():
                self._decl_of_node[node.id] = name
        if self.config.mode == "aot":
            self.aot_prepare(program)
        return self.interp.run_top(program)

    def node_of(self, node_id: int):
        return self._nodes.get(node_id)

    # -- interpreter host hooks ----------------------------------------------

    def count_allocation(self) -> None:
        self.counters.guest_allocations += 1

    def call_function(self, name: str, args: list):
        return self.call(name, args)

    def poly_import(self, name: str):
        if self.poly is None:
            raise GuestError(f"use {name}: engine is not in a polyglot context")
        return self.poly.import_for(self.lang, name)

    def poly_export(self, name: str, value) -> None:
        if self.poly is None:
            raise GuestError(f"export {name}: engine is not in a polyglot context")
        self.poly.export_from(self.lang, name, value)

    def read_global(self, name: str):
        if name in self.globals:
            return self.globals[name]
        if name in self.functions:
            return FuncValue(name, self.lang)
        raise GuestError(f"unbound variable {name}")

    def call_value(self, target, args: list):
        if isinstance(target, FuncValue) and target.lang == self.lang:
            return self.call(target.name, args)
        if is_foreign(target):
            return target.interop_execute(args)
        raise GuestError(f"value is not callable")

    def call_dynamic(self, name: str, args: list):
        target = self.globals.get(name)
        if target is None and name not in self.globals:
            raise GuestError(f"unknown function {name}")
        return self.call_value(target, args)

    # -- the hot path -----------------------------------------------------------

    def call(self, name: str, args: list):
        state = self.functions.get(name)
        if state is None:
            raise GuestError(f"unknown function {name}")
        decl = state.decl
        if len(args) != len(decl.params):
            raise GuestError(f"{name} takes {len(decl.params)} arguments, "
                             f"got {len(args)}")
        args = [self._localize(a) for a in args]
        self.counters.call_dispatches += 1
        state.invocation_count += 1
        unit = state.compiled
        use_compiled = (unit is not None and unit.tree_version == state.version)
        if (self.config.mode == "jit" and not use_compiled
                and not state.uncompilable
                and state.invocation_count >= self.config.compile_threshold
                and is_stable(decl.body, self.policy)):
            self._compile(state)
        if use_compiled:
            try:
                return run_program(self, unit.program, args)
            except DeoptSignal as sig:
                return self.deoptimize(state, unit, sig)
        return self.interp.run_function(decl, args)

    def _localize(self, value):
        if is_foreign(value) and value.origin == self.lang:
            return value.payload
        return value

    # -- compilation ---------------------------------------------------------

    def _pipeline_options(self) -> PipelineOptions:
        return PipelineOptions(inline=self.config.inline,
                               pea=self.config.pea,
                               memopt=self.config.memopt,
                               dump_tiers=self.config.dump_tiers)

    def _load_callee(self, name: str):
        state = self.functions.get(name)
        if state is None or state.uncompilable:
            return None
        decl = state.decl
        if not is_stable(decl.body, self.policy):
            return None
        key = (name, spec_signature(decl))
        g = self.cache.get(key)
        if g is not None:
            return g
        try:
            profile = snapshot_profile(decl.body, state.invocation_count)
            g = partial_evaluate(decl, profile, self.policy,
                                 decl_names=frozenset(self.functions))
        except (NotStable, NotCompilable):
            return None
        self.cache.put(key, g)
        return self.cache.get(key)

    def _compile(self, state: FunctionState) -> bool:
        decl = state.decl
        try:
            profile = snapshot_profile(decl.body, state.invocation_count)
            result = compile_pipeline(
                decl, profile, self.policy,
                cache=self.cache,
                load_callee=self._load_callee,
                decl_names=frozenset(self.functions),
                options=self._pipeline_options())
        except (NotStable, NotCompilable):
            state.uncompilable = True
            return False
        state.compiled = CompiledUnit(decl.name, state.version,
                                      result.program, result.escape_info,
                                      result.dumps)
        if result.dumps:
            self.ir_dumps[decl.name] = result.dumps
        self.counters.compiles += 1
        self.log.compile(decl.name, state.invocation_count, state.version)
        return True

    def aot_prepare(self, program: Program | None = None) -> None:
        """Force every tree Generic and compile everything up front; no
        runtime compiles or deopts can follow."""
        if self.config.mode != "aot":
            raise ValueError("aot_prepare requires mode=aot")
        targets = (program.decls if program is not None
                   else {n: s.decl for n, s in self.functions.items()})
        for name in targets:
            state = self.functions[name]
            if state.compiled is not None or state.uncompilable:
                continue
            force_generic(state.decl.body)
            self._compile(state)

    # -- deoptimization -----------------------------------------------------------

    def deoptimize(self, state: FunctionState, unit: CompiledUnit,
                   sig: DeoptSignal):
        record = unit.program.guard_table.get(sig.pc)
        if record is None:
            raise InternalCompilerError(
                f"deopt at pc {sig.pc} has no guard table entry")
        node = self.node_of(record.guard_id)
        frames = self._restore_frames(record.frame, sig.frame, record.reason)
        if record.reason in ("guard", "objcheck") and node is not None \
                and node.guard is not None:
            node.guard.fail_count += 1
            self.log.guard_fail(node.id, node.spec)
        self.counters.deopts += 1
        self.log.deopt(state.decl.name, record.guard_id, record.reason)
        _, failing_node, env, pending, _ = frames[0]
        from .values import classify
        tags = tuple(classify(pending.get(c.id)) for c in failing_node.children
                     if c.id in pending)
        self.deopt_events.append(DeoptEvent(
            state.decl.name, record.guard_id, tags,
            tuple(sorted(env)), len(self.deopt_events)))
        # invalidate; counting restarts for the recompile policy
        state.compiled = None
        state.version += 1
        state.invocation_count = 0
        count = state.guard_deopts.get(record.guard_id, 0) + 1
        state.guard_deopts[record.guard_id] = count
        result = self.interp.resume_frames(frames)
        if count >= DEOPT_BLACKLIST_LIMIT and node is not None \
                and node.spec.state != GENERIC:
            node.spec = STATE_GENERIC
            node.guard = None
        return result

    def _restore_frames(self, rframe, machine_frame: list, reason: str) -> list:
        frames = []
        mode = reason
        while rframe is not None:
            decl = self.functions[rframe.func].decl
            node = self.node_of(rframe.node_id)
            env = {name: self._read_loc(loc, machine_frame)
                   for name, loc in rframe.vars.items()}
            pending = {ast_id: self._read_loc(loc, machine_frame)
                       for ast_id, loc in rframe.pending.items()}
            target = node if mode is not None else self.node_of(
                rframe.node_id)
            frames.append((decl, target, env, pending,
                           mode if mode is not None else "call"))
            mode = None
            rframe = rframe.parent
        return frames

    def _read_loc(self, loc, machine_frame: list):
        if type(loc) is int:
            return machine_frame[loc]
        if loc[0] == "c":
            return loc[1]
        if loc[0] == "virt":
            self.counters.guest_allocations += 1
            return GObject([self._read_loc(l, machine_frame) for l in loc[1]])
        raise AssertionError(f"bad frame location {loc!r}")

    # -- introspection ---------------------------------------------------------

    def recompile_decision(self, name: str) -> str:
        """What the next call boundary would decide for this function."""
        state = self.functions[name]
        if state.uncompilable:
            return "interpret-only"
        if state.compiled is not None and state.compiled.tree_version == state.version:
            return "run-compiled"
        if self.config.mode != "jit":
            return "interpret"
        if state.invocation_count + 1 < self.config.compile_threshold:
            return "count"
        if not is_stable(state.decl.body, self.policy):
            return "wait-stability"
        return "compile"

    def counters_snapshot(self) -> Counters:
        return self.counters.snapshot()

    def counters_reset(self) -> None:
        self.counters.reset()
