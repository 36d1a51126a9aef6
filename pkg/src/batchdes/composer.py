"""Ahead-of-runtime batch composition.

Every batch id in ``[0, B]`` gets one generated function whose body is the
in-order concatenation of its handlers' bodies.  Handler source is parsed,
its locals are renamed per batch slot, its globals are bound under
per-handler names, and ``event.time`` / ``event.payload`` become plain
parameters.  No calls to handlers remain in a composed body, so whatever
compiles the generated module sees each batch as one procedure.

Two backends compile the generated module:

``numba``
    each reachable batch is compiled eagerly with LLVM; dead stores and the
    loops feeding them are removed across handler boundaries.
``python``
    the module goes through CPython's ``compile``.  Cheap to build, no
    cross-handler optimization; used for large randomized test sweeps.

Ids containing an interior "no event" digit decode to the same sequence as
their projection and share its compiled function.
"""
from __future__ import annotations

import ast
import builtins
import inspect
import itertools
import linecache
import textwrap
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import codec
from .codec import CodecConfig, ConfigTooLarge
from .core import (
    HandlerOutcome,
    ModelDefinition,
    drain_emit_buffer,
    emit,
    new_emit_buffer,
    validate_model,
)

DEFAULT_GENERATION_CAP = 100_000
BACKENDS = ("numba", "python")

_FORBIDDEN = (
    ast.Return,
    ast.Yield,
    ast.YieldFrom,
    ast.Await,
    ast.FunctionDef,
    ast.AsyncFunctionDef,
    ast.Lambda,
    ast.ClassDef,
    ast.Global,
    ast.Nonlocal,
    ast.Import,
    ast.ImportFrom,
)
_EVENT_FIELDS = {"time": "t", "payload": "p"}
_EMIT_NAME = "_emit"


class CompositionError(ValueError):
    """A handler cannot be inlined into a composed batch."""


def _handler_label(fn: Callable) -> str:
    return getattr(fn, "__qualname__", repr(fn))


class HandlerTemplate:
    """Parsed handler body that can be rendered into any batch slot."""

    def __init__(self, fn: Callable, type_id: int):
        self.fn = getattr(fn, "py_func", fn)
        self.type_id = type_id
        self.label = _handler_label(self.fn)
        try:
            src = textwrap.dedent(inspect.getsource(self.fn))
        except (OSError, TypeError) as exc:
            raise CompositionError(f"source of handler {self.label} is not available") from exc
        tree = ast.parse(src)
        defs = [n for n in tree.body if isinstance(n, ast.FunctionDef)]
        if len(defs) != 1:
            raise CompositionError(f"handler {self.label} must be a plain def statement")
        fdef = defs[0]
        self._check_signature(fdef)
        self.state_arg, self.event_arg, self.out_arg = (a.arg for a in fdef.args.args)
        self.body = fdef.body
        self._scan()
        self.namespace = self._resolve_globals()
        self.emits = any(
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in self._emit_aliases
            for stmt in self.body
            for node in ast.walk(stmt)
        )
        self._rendered: dict[int, list[str]] = {}

    def _check_signature(self, fdef: ast.FunctionDef):
        a = fdef.args
        if (
            len(a.args) != 3
            or a.posonlyargs
            or a.vararg
            or a.kwarg
            or a.kwonlyargs
            or a.defaults
        ):
            raise CompositionError(
                f"handler {self.label} must take exactly (state, event, out)"
            )

    def _scan(self):
        stored: set[str] = set()
        loaded: set[str] = set()
        params = {self.state_arg, self.event_arg, self.out_arg}
        for stmt in self.body:
            for node in ast.walk(stmt):
                if isinstance(node, _FORBIDDEN):
                    raise CompositionError(
                        f"handler {self.label}: {type(node).__name__} is not allowed in a handler body"
                    )
                if isinstance(node, ast.Name):
                    if isinstance(node.ctx, (ast.Store, ast.Del)):
                        stored.add(node.id)
                    else:
                        loaded.add(node.id)
                elif isinstance(node, ast.Attribute) and isinstance(node.value, ast.Name):
                    if node.value.id == self.event_arg and node.attr not in _EVENT_FIELDS:
                        raise CompositionError(
                            f"handler {self.label}: event.{node.attr} is not available; use .time or .payload"
                        )
        if stored & params:
            raise CompositionError(
                f"handler {self.label} rebinds parameter(s) {sorted(stored & params)}"
            )
        # the event object itself only exists through its fields
        for stmt in self.body:
            parents = {}
            for node in ast.walk(stmt):
                for child in ast.iter_child_nodes(node):
                    parents[child] = node
            for node in ast.walk(stmt):
                if isinstance(node, ast.Name) and node.id == self.event_arg:
                    parent = parents.get(node)
                    if not (isinstance(parent, ast.Attribute) and parent.value is node):
                        raise CompositionError(
                            f"handler {self.label} uses the event object directly; only .time and .payload may be read"
                        )
        self.locals = stored
        self.free = loaded - stored - params

    def _resolve_globals(self) -> dict[str, Any]:
        cv = inspect.getclosurevars(self.fn)
        scope = {**cv.globals, **cv.nonlocals}
        fn_globals = self.fn.__globals__
        ns: dict[str, Any] = {}
        self._global_map: dict[str, str] = {}
        self._emit_aliases: set[str] = set()
        for name in sorted(self.free):
            if name in scope:
                obj = scope[name]
            elif name in fn_globals:
                obj = fn_globals[name]
            elif hasattr(builtins, name):
                continue
            else:
                raise CompositionError(f"handler {self.label}: unresolved name {name!r}")
            if obj is emit or getattr(obj, "py_func", None) is emit:
                self._emit_aliases.add(name)
                continue
            bound = f"_h{self.type_id}_{name}"
            self._global_map[name] = bound
            ns[bound] = obj
        return ns

    def render(self, slot: int) -> list[str]:
        """Source lines of this handler's body placed at batch position ``slot``."""
        if slot not in self._rendered:
            xf = _SlotRenamer(self, slot)
            lines = []
            for stmt in self.body:
                new = xf.visit(ast.parse(ast.unparse(stmt)).body[0])
                ast.fix_missing_locations(new)
                lines.extend(ast.unparse(new).splitlines())
            self._rendered[slot] = lines
        return self._rendered[slot]


class _SlotRenamer(ast.NodeTransformer):
    def __init__(self, tpl: HandlerTemplate, slot: int):
        self.tpl = tpl
        self.slot = slot

    def visit_Attribute(self, node: ast.Attribute):
        if isinstance(node.value, ast.Name) and node.value.id == self.tpl.event_arg:
            return ast.copy_location(
                ast.Name(id=f"{_EVENT_FIELDS[node.attr]}{self.slot}", ctx=ast.Load()), node
            )
        self.generic_visit(node)
        return node

    def visit_Call(self, node: ast.Call):
        self.generic_visit(node)
        if isinstance(node.func, ast.Name) and node.func.id == _EMIT_NAME:
            args = list(node.args)
            for kw in node.keywords:
                if kw.arg == "payload" and len(args) == 3:
                    args.append(kw.value)
                else:
                    raise CompositionError(
                        f"handler {self.tpl.label}: emit() takes (out, type_id, time[, payload])"
                    )
            if len(args) == 3:
                args.append(ast.Constant(0.0))
            if len(args) != 4:
                raise CompositionError(
                    f"handler {self.tpl.label}: emit() takes (out, type_id, time[, payload])"
                )
            node.args = args + [ast.Constant(self.slot)]
            node.keywords = []
        return node

    def visit_Name(self, node: ast.Name):
        tpl = self.tpl
        name = node.id
        if name == tpl.state_arg:
            node.id = "state"
        elif name == tpl.out_arg:
            node.id = "out"
        elif name in tpl.locals:
            node.id = f"_s{self.slot}_{name}"
        elif name in tpl._emit_aliases:
            node.id = _EMIT_NAME
        elif name in tpl._global_map:
            node.id = tpl._global_map[name]
        return node


@dataclass(frozen=True)
class ComposedBatch:
    """One entry of the batch table.

    ``fn(state, out, t0, p0, t1, p1, ...)`` is the raw compiled procedure and
    returns the number of events it requested; calling the entry itself is
    the convenience form used outside the engine's hot loop.
    """

    bid: int
    types: tuple[int, ...]
    fn: Callable
    reachable: bool
    max_emits: int

    def __call__(self, state: np.ndarray, events: Sequence[Any] = ()) -> HandlerOutcome:
        if len(events) != len(self.types):
            raise ValueError(f"batch {self.bid} expects {len(self.types)} events, got {len(events)}")
        out = new_emit_buffer(self.max_emits * max(len(self.types), 1))
        args = []
        for ev in events:
            args.append(float(ev.time))
            args.append(float(ev.payload))
        with np.errstate(over="ignore"):
            count = self.fn(state, out, *args)
        return HandlerOutcome(drain_emit_buffer(out, int(count)))


@dataclass
class BatchTable:
    entries: list[ComposedBatch]
    cfg: CodecConfig
    model: ModelDefinition
    backend: str
    source: str
    namespace: dict[str, Any] = field(repr=False)
    _kernels: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, bid: int) -> ComposedBatch:
        return self.entries[bid]

    def __len__(self):
        return len(self.entries)

    @property
    def max_batch_len(self) -> int:
        return self.cfg.max_batch_len

    @property
    def emits(self) -> bool:
        return self.namespace.get("_any_emit", True)

    def reachable_ids(self) -> list[int]:
        return [e.bid for e in self.entries if e.reachable]


def _batch_name(bid: int) -> str:
    return f"_batch_{bid}"


def _batch_source(bid: int, seq: Sequence[int], templates: Sequence[HandlerTemplate]) -> str:
    params = ["state", "out"]
    for k in range(len(seq)):
        params += [f"t{k}", f"p{k}"]
    lines = [f"def {_batch_name(bid)}({', '.join(params)}):"]
    any_emit = False
    for k, t in enumerate(seq):
        tpl = templates[t - 1]
        any_emit |= tpl.emits
        lines.append(f"    # slot {k}: type {t} ({tpl.label})")
        lines.extend("    " + ln for ln in tpl.render(k))
    lines.append("    return int(out[0])" if any_emit else "    return 0")
    return "\n".join(lines)


def _dispatch_source(ids: Sequence[int], cfg: CodecConfig) -> str:
    """Binary decision tree from batch id to composed procedure."""
    lens = {bid: len(codec.decode(bid, cfg)) for bid in ids}
    lines = ["def _dispatch(bid, state, out, bt, bp):"]

    def call(bid):
        args = ["state", "out"]
        for k in range(lens[bid]):
            args += [f"bt[{k}]", f"bp[{k}]"]
        return f"{_batch_name(bid)}({', '.join(args)})"

    def tree(lo, hi, depth):
        pad = "    " * depth
        if hi - lo <= 2:
            for bid in ids[lo:hi]:
                lines.append(f"{pad}if bid == {bid}:")
                lines.append(f"{pad}    return {call(bid)}")
            return
        mid = (lo + hi) // 2
        lines.append(f"{pad}if bid < {ids[mid]}:")
        tree(lo, mid, depth + 1)
        lines.append(f"{pad}else:")
        tree(mid, hi, depth + 1)

    if ids:
        tree(0, len(ids), 1)
    lines.append("    return -1")
    return "\n".join(lines)


_counter = itertools.count()


def generate_batch_table(
    model: ModelDefinition,
    max_batch_len: int,
    backend: str = "numba",
    generation_cap: int = DEFAULT_GENERATION_CAP,
) -> BatchTable:
    """Compose every batch of up to ``max_batch_len`` events for ``model``."""
    validate_model(model)
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    cfg = CodecConfig(model.alphabet_size, max_batch_len)
    total = codec.total_batch_count(cfg)
    if total + 1 > generation_cap:
        raise ConfigTooLarge(
            f"{total + 1} batch entries exceed the generation cap of {generation_cap}"
        )
    templates = [HandlerTemplate(fn, t) for t, fn in zip(model.type_ids(), model.handlers)]

    ns: dict[str, Any] = {"__name__": "batchdes._generated"}
    for tpl in templates:
        ns.update(tpl.namespace)

    # only ν-free ids get their own code; the rest alias their projection
    reachable = [0] + [bid for bid in range(1, total + 1) if codec.is_reachable(bid, cfg)]
    seqs = {bid: codec.decode(bid, cfg) for bid in reachable}
    chunks = [f"# composed batches: |Σ|={cfg.alphabet_size}, n={cfg.max_batch_len}, model={model.name}"]
    chunks += [_batch_source(bid, seqs[bid], templates) for bid in reachable]
    chunks.append(_dispatch_source(reachable[1:], cfg))
    source = "\n\n\n".join(chunks) + "\n"

    filename = f"<batchdes-composed-{next(_counter)}>"
    linecache.cache[filename] = (len(source), None, source.splitlines(True), filename)
    code = compile(source, filename, "exec")

    if backend == "numba":
        fns = _compile_numba(code, ns, reachable, seqs, model)
    else:
        ns[_EMIT_NAME] = emit
        exec(code, ns)
        fns = {bid: ns[_batch_name(bid)] for bid in reachable}
    ns["_any_emit"] = any(t.emits for t in templates)

    entries = []
    for bid in range(total + 1):
        seq = codec.decode(bid, cfg)
        proj = codec.encode(seq, cfg)
        entries.append(
            ComposedBatch(
                bid=bid,
                types=tuple(seq),
                fn=fns[proj],
                reachable=bid == proj and bid > 0,
                max_emits=model.max_emits,
            )
        )
    return BatchTable(entries, cfg, model, backend, source, ns)


def _compile_numba(code, ns, reachable, seqs, model):
    import numba
    from numba import types

    ns[_EMIT_NAME] = numba.njit(emit)
    exec(code, ns)
    state_t = numba.typeof(np.ascontiguousarray(model.initial_state))
    out_t = types.float64[::1]
    fns = {}
    for bid in reachable:
        sig = types.int64(state_t, out_t, *([types.float64] * (2 * len(seqs[bid]))))
        fn = numba.njit(sig)(ns[_batch_name(bid)])
        ns[_batch_name(bid)] = fn
        fns[bid] = fn
    ns["_dispatch"] = numba.njit(ns["_dispatch"])
    return fns


def report_generation_stats(table: BatchTable) -> tuple[int, int, int]:
    """(total composed batches excluding id 0, reachable, redundant)."""
    total = len(table.entries) - 1
    reachable = sum(1 for e in table.entries if e.reachable)
    return total, reachable, total - reachable
