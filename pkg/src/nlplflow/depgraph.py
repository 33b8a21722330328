"""Per-file dependency graphs: def-use data edges plus control-dependency edges.

Statement granularity, flow-insensitive within loops, intraprocedural with a
module-level fallback for names not bound in the local function. Every call's
argument expressions get their own nodes so slices can start exactly at an LLM
call's arguments. Compound statements (if/for/while/try) are nodes spanning
only their header lines; their bodies are separate nodes with control edges
pointing at every enclosing compound.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import SourceParseError
from .records import Callsite

_COMPOUND = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.Try)
_LOOPS = (ast.For, ast.AsyncFor, ast.While)


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str  # "stmt" | "compound" | "call_arg"
    start_line: int
    end_line: int

    @property
    def lines(self) -> frozenset[int]:
        return frozenset(range(self.start_line, self.end_line + 1))


@dataclass(frozen=True)
class DataEdge:
    src: str  # definition node
    dst: str  # using node
    var: str


@dataclass(frozen=True)
class ControlEdge:
    src: str  # dependent statement
    dst: str  # enclosing compound


@dataclass
class DepGraph:
    file: str
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    data_edges: list[DataEdge] = field(default_factory=list)
    control_edges: list[ControlEdge] = field(default_factory=list)
    node_uses: dict[str, frozenset[str]] = field(default_factory=dict)
    defs_by_name: dict[str, tuple[str, ...]] = field(default_factory=dict)
    external_names: frozenset[str] = frozenset()
    call_args_by_line: dict[int, tuple[str, ...]] = field(default_factory=dict)

    def defs_of(self, name: str) -> tuple[str, ...]:
        return self.defs_by_name.get(name, ())

    def call_arg_nodes(self, line: int) -> tuple[str, ...]:
        """Argument-expression nodes of calls starting at the given line."""
        return self.call_args_by_line.get(line, ())


def _assigned_names(target: ast.AST) -> Iterable[str]:
    for n in ast.walk(target):
        if isinstance(n, ast.Name) and isinstance(n.ctx, (ast.Store, ast.Del)):
            yield n.id


def _load_names(node: ast.AST) -> set[str]:
    return {
        n.id
        for n in ast.walk(node)
        if isinstance(n, ast.Name) and isinstance(n.ctx, ast.Load)
    }


def _header_end(stmt: ast.stmt) -> int:
    if isinstance(stmt, (ast.If, ast.While)):
        return stmt.test.end_lineno or stmt.lineno
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return stmt.iter.end_lineno or stmt.lineno
    return stmt.lineno  # try:


class _ScopeInfo:
    def __init__(self, node: ast.AST, is_module: bool):
        self.node = node
        self.is_module = is_module
        self.defs: dict[str, list[tuple[str, int]]] = {}  # name -> [(node_id, order)]
        self.uses: list[tuple[str, str]] = []  # (name, node_id)

    def add_def(self, name: str, node_id: str, order: int) -> None:
        self.defs.setdefault(name, []).append((node_id, order))


class _GraphBuilder:
    def __init__(self, source: str, path: str):
        try:
            self.tree = ast.parse(source)
        except SyntaxError as exc:
            raise SourceParseError(path, exc.msg or "invalid syntax", exc.lineno) from exc
        self.graph = DepGraph(file=path)
        self.module_scope = _ScopeInfo(self.tree, True)
        self.scopes: list[_ScopeInfo] = [self.module_scope]
        self.node_order: dict[str, int] = {}
        self.node_loops: dict[str, frozenset[int]] = {}
        self._uses_acc: dict[str, set[str]] = {}
        self._call_args: dict[int, list[str]] = {}
        self._order = 0
        self._counter = 0

    # ---------- node bookkeeping ----------

    def _new_node(
        self, kind: str, start: int, end: int, order: int, loops: frozenset[int]
    ) -> str:
        self._counter += 1
        prefix = {"stmt": "s", "compound": "c", "call_arg": "e"}[kind]
        node_id = f"{prefix}{self._counter}"
        self.graph.nodes[node_id] = GraphNode(node_id, kind, start, max(end, start))
        self.node_order[node_id] = order
        self.node_loops[node_id] = loops
        return node_id

    def _record_uses(self, names: set[str], node_id: str, scope: _ScopeInfo) -> None:
        if not names:
            return
        self._uses_acc.setdefault(node_id, set()).update(names)
        for name in names:
            scope.uses.append((name, node_id))

    def _control(self, node_id: str, compounds: tuple[str, ...]) -> None:
        for comp in compounds:
            self.graph.control_edges.append(ControlEdge(node_id, comp))

    def _call_arg_nodes(
        self,
        exprs: list[ast.expr],
        scope: _ScopeInfo,
        compounds: tuple[str, ...],
        order: int,
        loops: frozenset[int],
    ) -> None:
        for expr in exprs:
            if expr is None:
                continue
            for call in (n for n in ast.walk(expr) if isinstance(n, ast.Call)):
                for arg in list(call.args) + [kw.value for kw in call.keywords]:
                    arg_id = self._new_node(
                        "call_arg", arg.lineno, arg.end_lineno or arg.lineno, order, loops
                    )
                    self._control(arg_id, compounds)
                    self._record_uses(_load_names(arg), arg_id, scope)
                    self._call_args.setdefault(call.lineno, []).append(arg_id)

    # ---------- traversal ----------

    def build(self) -> DepGraph:
        self._visit_body(self.tree.body, self.module_scope, (), frozenset())
        self._emit_edges()
        self.graph.node_uses = {k: frozenset(v) for k, v in self._uses_acc.items()}
        defs: dict[str, list[str]] = {}
        for scope in self.scopes:
            for name, entries in scope.defs.items():
                defs.setdefault(name, []).extend(nid for nid, _ in entries)
        self.graph.defs_by_name = {k: tuple(dict.fromkeys(v)) for k, v in defs.items()}
        used = {name for scope in self.scopes for (name, _) in scope.uses}
        self.graph.external_names = frozenset(used - set(self.graph.defs_by_name))
        self.graph.call_args_by_line = {k: tuple(v) for k, v in self._call_args.items()}
        return self.graph

    def _visit_body(
        self,
        body: list[ast.stmt],
        scope: _ScopeInfo,
        compounds: tuple[str, ...],
        loops: frozenset[int],
    ) -> None:
        for stmt in body or []:
            self._visit_stmt(stmt, scope, compounds, loops)

    def _visit_stmt(
        self,
        stmt: ast.stmt,
        scope: _ScopeInfo,
        compounds: tuple[str, ...],
        loops: frozenset[int],
    ) -> None:
        order = self._order
        self._order += 1

        if isinstance(stmt, _COMPOUND):
            node_id = self._new_node("compound", stmt.lineno, _header_end(stmt), order, loops)
            self._control(node_id, compounds)
            inner_compounds = compounds + (node_id,)
            inner_loops = loops | {id(stmt)} if isinstance(stmt, _LOOPS) else loops

            if isinstance(stmt, (ast.If, ast.While)):
                self._record_uses(_load_names(stmt.test), node_id, scope)
                self._call_arg_nodes([stmt.test], scope, compounds, order, loops)
            elif isinstance(stmt, (ast.For, ast.AsyncFor)):
                self._record_uses(_load_names(stmt.iter), node_id, scope)
                self._call_arg_nodes([stmt.iter], scope, compounds, order, loops)
                for name in _assigned_names(stmt.target):
                    scope.add_def(name, node_id, order)
                if isinstance(stmt, _LOOPS):
                    self.node_loops[node_id] = inner_loops  # target redefined per iteration

            self._visit_body(getattr(stmt, "body", []), scope, inner_compounds, inner_loops)
            self._visit_body(getattr(stmt, "orelse", []), scope, inner_compounds, inner_loops)
            self._visit_body(getattr(stmt, "finalbody", []), scope, inner_compounds, inner_loops)
            for handler in getattr(stmt, "handlers", []) or []:
                if handler.name:
                    scope.add_def(handler.name, node_id, order)
                if handler.type is not None:
                    self._record_uses(_load_names(handler.type), node_id, scope)
                self._visit_body(handler.body, scope, inner_compounds, inner_loops)
            return

        node_id = self._new_node("stmt", stmt.lineno, stmt.end_lineno or stmt.lineno, order, loops)
        self._control(node_id, compounds)

        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            scope.add_def(stmt.name, node_id, order)
            fn_scope = _ScopeInfo(stmt, False)
            self.scopes.append(fn_scope)
            args = stmt.args
            for arg in (
                list(args.posonlyargs)
                + list(args.args)
                + list(args.kwonlyargs)
                + ([args.vararg] if args.vararg else [])
                + ([args.kwarg] if args.kwarg else [])
            ):
                fn_scope.add_def(arg.arg, node_id, -1)
            outer_exprs = [d for d in args.defaults + args.kw_defaults if d is not None]
            outer_exprs += list(stmt.decorator_list)
            for expr in outer_exprs:
                self._record_uses(_load_names(expr), node_id, scope)
            self._visit_body(stmt.body, fn_scope, compounds, frozenset())
            return

        if isinstance(stmt, ast.ClassDef):
            scope.add_def(stmt.name, node_id, order)
            for expr in list(stmt.bases) + list(stmt.decorator_list):
                self._record_uses(_load_names(expr), node_id, scope)
            cls_scope = _ScopeInfo(stmt, False)
            self.scopes.append(cls_scope)
            self._visit_body(stmt.body, cls_scope, compounds, frozenset())
            return

        if isinstance(stmt, (ast.Import, ast.ImportFrom)):
            for alias in stmt.names:
                scope.add_def(alias.asname or alias.name.split(".")[0], node_id, order)
            return

        if isinstance(stmt, (ast.With, ast.AsyncWith)):
            exprs = []
            for item in stmt.items:
                exprs.append(item.context_expr)
                if item.optional_vars is not None:
                    for name in _assigned_names(item.optional_vars):
                        scope.add_def(name, node_id, order)
            for expr in exprs:
                self._record_uses(_load_names(expr), node_id, scope)
            self._call_arg_nodes(exprs, scope, compounds, order, loops)
            # `with` is not condition-bearing: the body keeps the outer compounds.
            self._visit_body(stmt.body, scope, compounds, loops)
            return

        if isinstance(stmt, ast.Global) or isinstance(stmt, ast.Nonlocal):
            return

        value_exprs: list[ast.expr] = []
        uses: set[str] = set()
        if isinstance(stmt, ast.Assign):
            for target in stmt.targets:
                for name in _assigned_names(target):
                    scope.add_def(name, node_id, order)
                for n in ast.walk(target):
                    if isinstance(n, (ast.Subscript, ast.Attribute)):
                        uses |= _load_names(n)
            value_exprs = [stmt.value]
        elif isinstance(stmt, ast.AnnAssign):
            if isinstance(stmt.target, ast.Name):
                if stmt.value is not None:
                    scope.add_def(stmt.target.id, node_id, order)
            else:
                uses |= _load_names(stmt.target)
            if stmt.value is not None:
                value_exprs = [stmt.value]
        elif isinstance(stmt, ast.AugAssign):
            if isinstance(stmt.target, ast.Name):
                scope.add_def(stmt.target.id, node_id, order)
                uses.add(stmt.target.id)
            else:
                uses |= _load_names(stmt.target)
            value_exprs = [stmt.value]
        else:
            value_exprs = [n for n in ast.iter_child_nodes(stmt) if isinstance(n, ast.expr)]
            for n in ast.walk(stmt):
                if isinstance(n, ast.NamedExpr) and isinstance(n.target, ast.Name):
                    scope.add_def(n.target.id, node_id, order)

        for expr in value_exprs:
            uses |= _load_names(expr)
        self._record_uses(uses, node_id, scope)
        self._call_arg_nodes(value_exprs, scope, compounds, order, loops)

    # ---------- edges ----------

    def _emit_edges(self) -> None:
        seen: set[tuple[str, str, str]] = set()
        for scope in self.scopes:
            for name, use_node in scope.uses:
                defs = scope.defs.get(name)
                cross_scope = False
                if not defs and not scope.is_module:
                    defs = self.module_scope.defs.get(name)
                    cross_scope = True
                if not defs:
                    continue
                use_order = self.node_order[use_node]
                use_loops = self.node_loops[use_node]
                for def_node, def_order in defs:
                    if def_node == use_node:
                        continue
                    reaches = (
                        cross_scope
                        or def_order < use_order
                        or bool(self.node_loops.get(def_node, frozenset()) & use_loops)
                    )
                    if not reaches:
                        continue
                    edge = (def_node, use_node, name)
                    if edge not in seen:
                        seen.add(edge)
                        self.graph.data_edges.append(DataEdge(def_node, use_node, name))


def build_depgraph(source: str, path: str = "<memory>") -> DepGraph:
    """Build the per-file def-use + control-dependency graph."""
    return _GraphBuilder(source, path).build()


def trace_placeholder_variables(
    callsite: Callsite, graph: DepGraph
) -> dict[int, frozenset[str]]:
    """Contributing variable names per placeholder index.

    Starts from the placeholder expression's own free variables and closes
    backward over def-use: names used by any definition of an already-known
    contributor are contributors too. Unresolved names stay in the set.
    """
    out: dict[int, frozenset[str]] = {}
    for idx, placeholder in enumerate(callsite.placeholders):
        result: set[str] = set(placeholder.variable_names)
        frontier = list(result)
        while frontier:
            name = frontier.pop()
            for def_node in graph.defs_of(name):
                for used in graph.node_uses.get(def_node, ()):
                    if used not in result:
                        result.add(used)
                        frontier.append(used)
        out[idx] = frozenset(result)
    return out
