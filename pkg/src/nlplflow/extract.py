"""Extraction of LLM callsites, prompt placeholders, and dangerous sinks.

Works on a single Python source file via the stdlib ast module. Placeholders
are the dynamic expressions that reach a matched call's prompt arguments
through f-strings, .format() calls, concatenation chains (including += onto an
accumulator), or recognized template-engine constructors, following local
assignments. Everything is a pure function of the file contents, so results
are deterministic, including ids and ordering.
"""

from __future__ import annotations

import ast
import string
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import SourceParseError
from .records import (
    Callsite,
    ExtractionKind,
    Framework,
    Placeholder,
    SINK_CWE,
    SinkKind,
    SinkOccurrence,
    Span,
    make_callsite_id,
)
from .rules import DetectionRules, default_rules

_MAX_DEPTH = 12


@dataclass
class _Draft:
    """A placeholder under construction, before index assignment."""

    original_expression: str
    extraction_kind: ExtractionKind
    start_line: int
    end_line: int
    variable_names: set[str]

    @property
    def key(self) -> tuple[str, str]:
        return (self.original_expression, self.extraction_kind.value)


@dataclass(frozen=True)
class _Lit:
    text: str


@dataclass(frozen=True)
class _Slot:
    draft: _Draft


_Part = Union[_Lit, _Slot]

TemplatePart = Union[str, int]  # literal text | placeholder index


@dataclass(frozen=True)
class CallsiteExtraction:
    callsite: Callsite
    template: tuple[TemplatePart, ...]


@dataclass(frozen=True)
class FileAnalysis:
    path: str
    callsites: tuple[CallsiteExtraction, ...]
    sinks: tuple[SinkOccurrence, ...]


@dataclass
class _Binding:
    index: int
    kind: str  # "assign" | "aug" | "opaque"
    value: Optional[ast.expr]


@dataclass
class _Scope:
    node: ast.AST
    is_module: bool
    assigns: dict[str, list[_Binding]] = field(default_factory=dict)

    def add(self, name: str, binding: _Binding) -> None:
        self.assigns.setdefault(name, []).append(binding)


@dataclass
class _Resolved:
    base: ast.expr
    base_pos: int
    base_scope: "_Scope"
    augs: list[tuple[ast.expr, int]]


def _free_names(node: ast.AST) -> set[str]:
    return {
        n.id
        for n in ast.walk(node)
        if isinstance(n, ast.Name) and isinstance(n.ctx, ast.Load)
    }


def _dotted_path(func: ast.AST) -> Optional[str]:
    parts: list[str] = []
    node = func
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
    elif isinstance(node, ast.Call):
        inner = _dotted_path(node.func)
        if inner is None:
            return None
        parts.append(inner)
    else:
        return None
    return ".".join(reversed(parts))


class _Analyzer:
    def __init__(self, source: str, rules: DetectionRules, path: str):
        self.source = source
        self.rules = rules
        self.path = path
        try:
            self.tree = ast.parse(source)
        except SyntaxError as exc:
            raise SourceParseError(path, exc.msg or "invalid syntax", exc.lineno) from exc
        self.lines = source.splitlines()
        self.stmt_order: dict[int, int] = {}
        self.stmt_scope: dict[int, _Scope] = {}
        self.expr_stmt: dict[int, ast.stmt] = {}
        self.module_scope = _Scope(self.tree, is_module=True)
        self.scopes: list[_Scope] = [self.module_scope]
        self.helper_defs: dict[str, ast.FunctionDef] = {}
        self._order = 0
        self._index(self.tree, self.module_scope)
        self.calls = sorted(
            (n for n in ast.walk(self.tree) if isinstance(n, ast.Call)),
            key=lambda n: (n.lineno, n.col_offset),
        )

    # ---------- indexing ----------

    def _index(self, node: ast.AST, scope: _Scope, current_stmt: Optional[ast.stmt] = None) -> None:
        for child in ast.iter_child_nodes(node):
            stmt = current_stmt
            child_scope = scope
            if isinstance(child, ast.stmt):
                stmt = child
                self.stmt_order[id(child)] = self._order
                self.stmt_scope[id(child)] = scope
                self._order += 1
                self._record_bindings(child, scope)
                if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    child_scope = _Scope(child, is_module=False)
                    self.scopes.append(child_scope)
                    if scope.is_module and isinstance(child, ast.FunctionDef):
                        self.helper_defs[child.name] = child
                elif isinstance(child, ast.ClassDef):
                    child_scope = _Scope(child, is_module=False)
                    self.scopes.append(child_scope)
            if stmt is not None:
                self.expr_stmt[id(child)] = stmt
            self._index(child, child_scope, stmt)

    def _record_bindings(self, stmt: ast.stmt, scope: _Scope) -> None:
        index = self.stmt_order[id(stmt)]
        if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1 and isinstance(stmt.targets[0], ast.Name):
            scope.add(stmt.targets[0].id, _Binding(index, "assign", stmt.value))
            return
        if isinstance(stmt, ast.AnnAssign) and isinstance(stmt.target, ast.Name) and stmt.value is not None:
            scope.add(stmt.target.id, _Binding(index, "assign", stmt.value))
            return
        if isinstance(stmt, ast.AugAssign) and isinstance(stmt.target, ast.Name):
            scope.add(stmt.target.id, _Binding(index, "aug", stmt.value))
            return
        # Any other binding form blocks resolution of the names it touches.
        targets: list[ast.AST] = []
        if isinstance(stmt, ast.Assign):
            targets = list(stmt.targets)
        elif isinstance(stmt, (ast.For, ast.AsyncFor)):
            targets = [stmt.target]
        elif isinstance(stmt, (ast.With, ast.AsyncWith)):
            targets = [i.optional_vars for i in stmt.items if i.optional_vars is not None]
        elif isinstance(stmt, (ast.Import, ast.ImportFrom)):
            for alias in stmt.names:
                name = alias.asname or alias.name.split(".")[0]
                scope.add(name, _Binding(index, "opaque", None))
            return
        for target in targets:
            for n in ast.walk(target):
                if isinstance(n, ast.Name):
                    scope.add(n.id, _Binding(index, "opaque", None))

    def _pos_of(self, node: ast.AST) -> int:
        stmt = self.expr_stmt.get(id(node))
        if stmt is None:
            return self._order
        return self.stmt_order[id(stmt)]

    def _scope_at(self, pos: int, node: ast.AST) -> _Scope:
        stmt = self.expr_stmt.get(id(node))
        if stmt is None:
            return self.module_scope
        return self.stmt_scope[id(stmt)]

    # ---------- name resolution ----------

    def _resolve(self, name: str, pos: int, scope: _Scope, visiting: frozenset) -> Optional[_Resolved]:
        key = (id(scope), name)
        if key in visiting:
            return None
        bindings = scope.assigns.get(name, ())
        local = [b for b in bindings if b.index < pos]
        lookup_scope = scope
        if not local and not scope.is_module:
            # Fall back to module scope; by call time all module bindings ran.
            lookup_scope = self.module_scope
            local = list(self.module_scope.assigns.get(name, ()))
        if not local:
            return None
        base: Optional[_Binding] = None
        for b in local:
            if b.kind == "assign":
                base = b
            elif b.kind == "opaque":
                base = None
        if base is None or base.value is None:
            return None
        augs = [
            (b.value, b.index)
            for b in local
            if b.kind == "aug" and b.index > base.index and b.value is not None
        ]
        return _Resolved(base.value, base.index, lookup_scope, augs)

    def _literal_str(self, node: ast.AST, pos: int, scope: _Scope, visiting: frozenset, depth: int = 0) -> Optional[str]:
        if depth > _MAX_DEPTH:
            return None
        if isinstance(node, ast.Constant) and isinstance(node.value, str):
            return node.value
        if isinstance(node, ast.Name):
            resolved = self._resolve(node.id, pos, scope, visiting)
            if resolved is None or resolved.augs:
                return None
            return self._literal_str(
                resolved.base,
                resolved.base_pos,
                resolved.base_scope,
                visiting | {(id(scope), node.id)},
                depth + 1,
            )
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
            left = self._literal_str(node.left, pos, scope, visiting, depth + 1)
            right = self._literal_str(node.right, pos, scope, visiting, depth + 1)
            if left is not None and right is not None:
                return left + right
        if isinstance(node, ast.JoinedStr) and all(
            isinstance(v, ast.Constant) for v in node.values
        ):
            return "".join(str(v.value) for v in node.values)
        return None

    # ---------- placeholder walking ----------

    def _draft(self, node: ast.AST, kind: ExtractionKind) -> _Slot:
        text = ast.get_source_segment(self.source, node)
        if text is None:
            text = ast.unparse(node)
        text = text.strip()
        start = getattr(node, "lineno", 1)
        end = getattr(node, "end_lineno", start) or start
        return _Slot(_Draft(text, kind, start, end, _free_names(node)))

    def _is_string_construction(self, node: ast.AST) -> bool:
        if isinstance(node, ast.Constant) and isinstance(node.value, str):
            return True
        if isinstance(node, (ast.JoinedStr,)):
            return True
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
            return True
        if isinstance(node, ast.Call):
            if isinstance(node.func, ast.Attribute) and node.func.attr == "format":
                return True
            path = _dotted_path(node.func)
            if path and self.rules.is_template_constructor(path):
                return True
            if isinstance(node.func, ast.Name) and node.func.id in self.helper_defs:
                return True
        return False

    def _walk_dynamic(
        self,
        node: ast.AST,
        pos: int,
        scope: _Scope,
        kind: ExtractionKind,
        depth: int,
        visiting: frozenset,
        bindings: dict[str, tuple[ast.expr, int, _Scope]],
    ) -> list[_Part]:
        if depth > _MAX_DEPTH:
            return [self._draft(node, kind)]
        if isinstance(node, ast.Constant):
            if node.value is None:
                return []
            return [_Lit(str(node.value))]
        if isinstance(node, ast.JoinedStr):
            parts: list[_Part] = []
            for value in node.values:
                if isinstance(value, ast.Constant):
                    parts.append(_Lit(str(value.value)))
                elif isinstance(value, ast.FormattedValue):
                    parts.extend(
                        self._walk_dynamic(
                            value.value, pos, scope, ExtractionKind.FSTRING, depth + 1, visiting, bindings
                        )
                    )
            return parts
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
            # Decompose only chains that build strings; an arithmetic-looking
            # slot like {a+b} stays one placeholder.
            if self._add_chain_builds_string(node, pos, scope, visiting, depth):
                return self._walk_dynamic(
                    node.left, pos, scope, ExtractionKind.CONCATENATION, depth + 1, visiting, bindings
                ) + self._walk_dynamic(
                    node.right, pos, scope, ExtractionKind.CONCATENATION, depth + 1, visiting, bindings
                )
            return [self._draft(node, kind)]
        if isinstance(node, ast.Name):
            if node.id in bindings:
                expr, bpos, bscope = bindings[node.id]
                return self._walk_dynamic(expr, bpos, bscope, kind, depth + 1, visiting, {})
            resolved = self._resolve(node.id, pos, scope, visiting)
            if resolved is not None and (
                self._is_string_construction(resolved.base) or resolved.augs
            ):
                inner_visiting = visiting | {(id(scope), node.id)}
                parts = self._walk_dynamic(
                    resolved.base,
                    resolved.base_pos,
                    resolved.base_scope,
                    kind,
                    depth + 1,
                    inner_visiting,
                    {},
                )
                for aug_value, aug_pos in resolved.augs:
                    parts.extend(
                        self._walk_dynamic(
                            aug_value,
                            aug_pos,
                            resolved.base_scope,
                            ExtractionKind.CONCATENATION,
                            depth + 1,
                            inner_visiting,
                            {},
                        )
                    )
                return parts
            return [self._draft(node, kind)]
        if isinstance(node, ast.Call):
            func = node.func
            if isinstance(func, ast.Attribute) and func.attr == "format":
                return self._format_parts(node, pos, scope, depth, visiting, bindings)
            path = _dotted_path(func)
            if path and self.rules.is_template_constructor(path):
                return self._template_constructor_parts(node, pos, scope, visiting)
            if isinstance(func, ast.Name) and func.id in self.helper_defs:
                inlined = self._inline_helper(node, pos, scope, depth, visiting)
                if inlined is not None:
                    return inlined
            return [self._draft(node, kind)]
        return [self._draft(node, kind)]

    def _add_chain_builds_string(self, node, pos, scope, visiting, depth) -> bool:
        operands: list[ast.AST] = []
        stack = [node]
        while stack:
            n = stack.pop()
            if isinstance(n, ast.BinOp) and isinstance(n.op, ast.Add):
                stack.extend([n.left, n.right])
            else:
                operands.append(n)
        for op in operands:
            if self._is_string_construction(op):
                return True
            if isinstance(op, ast.Name):
                resolved = self._resolve(op.id, pos, scope, visiting)
                if resolved is not None and (
                    resolved.augs or self._is_string_construction(resolved.base)
                ):
                    return True
        return False

    def _format_parts(self, call, pos, scope, depth, visiting, bindings) -> list[_Part]:
        base_lit = self._literal_str(call.func.value, pos, scope, visiting)
        kwargs = {kw.arg: kw.value for kw in call.keywords if kw.arg}
        if base_lit is None:
            out: list[_Part] = []
            for arg in list(call.args) + [kw.value for kw in call.keywords if kw.arg]:
                out.extend(
                    self._walk_dynamic(arg, pos, scope, ExtractionKind.FORMAT_CALL, depth + 1, visiting, bindings)
                )
            return out
        out = []
        auto = 0
        for literal, fname, _spec, _conv in string.Formatter().parse(base_lit):
            if literal:
                out.append(_Lit(literal))
            if fname is None:
                continue
            root = fname.split(".")[0].split("[")[0]
            value: Optional[ast.expr] = None
            if root == "":
                if auto < len(call.args):
                    value = call.args[auto]
                auto += 1
            elif root.isdigit():
                idx = int(root)
                if idx < len(call.args):
                    value = call.args[idx]
            else:
                value = kwargs.get(root)
            if value is None:
                out.append(_Lit("{" + fname + "}"))
            else:
                out.extend(
                    self._walk_dynamic(value, pos, scope, ExtractionKind.FORMAT_CALL, depth + 1, visiting, bindings)
                )
        return out

    def _template_constructor_parts(self, call, pos, scope, visiting) -> list[_Part]:
        template_expr: Optional[ast.expr] = None
        for kw in call.keywords:
            if kw.arg == "template":
                template_expr = kw.value
                break
        if template_expr is None:
            for arg in call.args:
                if self._literal_str(arg, pos, scope, visiting) is not None:
                    template_expr = arg
                    break
        lit = (
            self._literal_str(template_expr, pos, scope, visiting)
            if template_expr is not None
            else None
        )
        if lit is None:
            return [self._draft(call, ExtractionKind.TEMPLATE_ENGINE)]
        out: list[_Part] = []
        auto = 0
        for literal, fname, _spec, _conv in string.Formatter().parse(lit):
            if literal:
                out.append(_Lit(literal))
            if fname is None:
                continue
            root = fname.split(".")[0].split("[")[0]
            if root == "":
                root = f"arg{auto}"
                auto += 1
            draft = _Draft(
                original_expression=root,
                extraction_kind=ExtractionKind.TEMPLATE_ENGINE,
                start_line=call.lineno,
                end_line=call.end_lineno or call.lineno,
                variable_names={root},
            )
            out.append(_Slot(draft))
        return out

    def _inline_helper(self, call, pos, scope, depth, visiting) -> Optional[list[_Part]]:
        """One level of local call following for simple same-file helpers."""
        fn = self.helper_defs[call.func.id]
        body = [s for s in fn.body if not (isinstance(s, ast.Expr) and isinstance(s.value, ast.Constant))]
        if len(body) != 1 or not isinstance(body[0], ast.Return) or body[0].value is None:
            return None
        params = [a.arg for a in fn.args.args]
        bindings: dict[str, tuple[ast.expr, int, _Scope]] = {}
        for param, arg in zip(params, call.args):
            bindings[param] = (arg, pos, scope)
        for kw in call.keywords:
            if kw.arg and kw.arg in params:
                bindings[kw.arg] = (kw.value, pos, scope)
        fn_scope = next((s for s in self.scopes if s.node is fn), scope)
        return self._walk_dynamic(
            body[0].value,
            self.stmt_order.get(id(body[0]), pos),
            fn_scope,
            ExtractionKind.CONCATENATION,
            depth + 1,
            visiting,
            bindings,
        )

    def _walk_root(
        self, node: ast.AST, pos: int, scope: _Scope, depth: int, visiting: frozenset
    ) -> list[_Part]:
        if depth > _MAX_DEPTH:
            return [self._draft(node, ExtractionKind.CONCATENATION)]
        if isinstance(node, ast.Dict):
            keys = {
                k.value: v
                for k, v in zip(node.keys, node.values)
                if isinstance(k, ast.Constant) and isinstance(k.value, str)
            }
            if "role" in keys and "content" in keys:
                return self._walk_root(keys["content"], pos, scope, depth + 1, visiting)
            out: list[_Part] = []
            for v in node.values:
                if v is not None:
                    out.extend(self._walk_root(v, pos, scope, depth + 1, visiting))
            return out
        if isinstance(node, (ast.List, ast.Tuple, ast.Set)):
            out = []
            for elt in node.elts:
                group = self._walk_root(elt, pos, scope, depth + 1, visiting)
                if group and out:
                    out.append(_Lit("\n"))
                out.extend(group)
            return out
        if isinstance(node, ast.Name):
            resolved = self._resolve(node.id, pos, scope, visiting)
            if resolved is not None and not resolved.augs and isinstance(
                resolved.base, (ast.Dict, ast.List, ast.Tuple, ast.Set)
            ):
                return self._walk_root(
                    resolved.base,
                    resolved.base_pos,
                    resolved.base_scope,
                    depth + 1,
                    visiting | {(id(scope), node.id)},
                )
        return self._walk_dynamic(
            node, pos, scope, ExtractionKind.CONCATENATION, depth, visiting, {}
        )

    # ---------- callsites ----------

    def _call_paths(self, call: ast.Call) -> tuple[Optional[str], Optional[str]]:
        raw = _dotted_path(call.func)
        resolved: Optional[str] = None
        node = call.func
        attrs: list[str] = []
        while isinstance(node, ast.Attribute):
            attrs.append(node.attr)
            node = node.value
        if isinstance(node, ast.Name) and attrs:
            res = self._resolve(
                node.id, self._pos_of(call), self._scope_at(self._pos_of(call), call), frozenset()
            )
            if res is not None and isinstance(res.base, ast.Call):
                base_path = _dotted_path(res.base.func)
                if base_path:
                    resolved = ".".join([base_path] + list(reversed(attrs)))
        return raw, resolved

    def _bound_template_parts(self, call: ast.Call, pos: int, scope: _Scope) -> list[_Part]:
        """Template parts attached to the receiver of a framework call.

        Follows chain = SomeChain(prompt=PromptTemplate(...)) one level so the
        template's slots become placeholders of the run()/invoke() callsite.
        """
        node = call.func
        if not isinstance(node, ast.Attribute) or not isinstance(node.value, ast.Name):
            return []
        res = self._resolve(node.value.id, pos, scope, frozenset())
        if res is None or not isinstance(res.base, ast.Call):
            return []
        ctor = res.base
        for kw in ctor.keywords:
            if kw.arg in ("prompt", "template"):
                expr = kw.value
                if isinstance(expr, ast.Name):
                    inner = self._resolve(expr.id, res.base_pos, res.base_scope, frozenset())
                    if inner is not None:
                        expr = inner.base
                if isinstance(expr, ast.Call):
                    path = _dotted_path(expr.func)
                    if path and self.rules.is_template_constructor(path):
                        return self._template_constructor_parts(
                            expr, res.base_pos, res.base_scope, frozenset()
                        )
        return []

    def extract(self) -> FileAnalysis:
        extractions: list[CallsiteExtraction] = []
        sinks: list[SinkOccurrence] = []
        ordinals: dict[tuple[int, str], int] = {}

        for call in self.calls:
            raw, resolved = self._call_paths(call)
            if raw is None and resolved is None:
                continue
            pattern = self.rules.match_llm_call(raw or "", resolved or "")
            if pattern is not None:
                extractions.append(self._build_callsite(call, raw or resolved or "", pattern, ordinals))
            sink_kind = self.rules.match_sink(raw or "", resolved or "")
            if sink_kind is not None:
                snippet = ""
                if 1 <= call.lineno <= len(self.lines):
                    snippet = self.lines[call.lineno - 1].strip()
                sinks.append(
                    SinkOccurrence(
                        file=self.path,
                        line=call.lineno,
                        sink_kind=sink_kind,
                        cwe=SINK_CWE[sink_kind],
                        snippet=snippet,
                    )
                )
        return FileAnalysis(self.path, tuple(extractions), tuple(sinks))

    def _build_callsite(
        self,
        call: ast.Call,
        callee: str,
        pattern,
        ordinals: dict[tuple[int, str], int],
    ) -> CallsiteExtraction:
        pos = self._pos_of(call)
        scope = self._scope_at(pos, call)

        parts: list[_Part] = list(self._bound_template_parts(call, pos, scope))
        slot_names = {
            p.draft.original_expression: p.draft
            for p in parts
            if isinstance(p, _Slot) and p.draft.extraction_kind == ExtractionKind.TEMPLATE_ENGINE
        }

        roots: list[tuple[Optional[str], ast.expr]] = [(None, a) for a in call.args]
        for kw in call.keywords:
            if kw.arg is None or kw.arg in self.rules.excluded_kwargs:
                continue
            roots.append((kw.arg, kw.value))

        positional_dynamic: list[ast.expr] = []
        for name, root in roots:
            if name is not None and name in slot_names:
                slot_names[name].variable_names |= _free_names(root)
                continue
            if name is None and slot_names and isinstance(root, (ast.Name, ast.Attribute, ast.Call)):
                positional_dynamic.append(root)
                continue
            group = self._walk_root(root, pos, scope, 0, frozenset())
            if group and parts:
                parts.append(_Lit("\n"))
            parts.extend(group)

        # A single positional argument to a single-slot template binds that slot.
        if len(slot_names) == 1 and len(positional_dynamic) == 1:
            next(iter(slot_names.values())).variable_names |= _free_names(positional_dynamic[0])
        else:
            for root in positional_dynamic:
                group = self._walk_root(root, pos, scope, 0, frozenset())
                if group and parts:
                    parts.append(_Lit("\n"))
                parts.extend(group)

        placeholders: list[Placeholder] = []
        index_by_key: dict[tuple[str, str], int] = {}
        template: list[TemplatePart] = []
        for part in parts:
            if isinstance(part, _Lit):
                if template and isinstance(template[-1], str):
                    template[-1] = template[-1] + part.text
                else:
                    template.append(part.text)
                continue
            draft = part.draft
            if draft.key not in index_by_key:
                index_by_key[draft.key] = len(placeholders)
                placeholders.append(
                    Placeholder(
                        original_expression=draft.original_expression,
                        guessed_value="",
                        extraction_kind=draft.extraction_kind,
                        span=Span(self.path, draft.start_line, draft.end_line),
                        variable_names=frozenset(draft.variable_names),
                    )
                )
            else:
                idx = index_by_key[draft.key]
                merged = placeholders[idx].variable_names | draft.variable_names
                placeholders[idx] = Placeholder(
                    original_expression=placeholders[idx].original_expression,
                    guessed_value="",
                    extraction_kind=placeholders[idx].extraction_kind,
                    span=placeholders[idx].span,
                    variable_names=merged,
                )
            template.append(index_by_key[draft.key])

        key = (call.lineno, callee)
        ordinal = ordinals.get(key, 0)
        ordinals[key] = ordinal + 1
        callsite = Callsite(
            callsite_id=make_callsite_id(self.source, call.lineno, callee, ordinal),
            file=self.path,
            line=call.lineno,
            callee=callee,
            framework=pattern.framework,
            rendered_prompt="",
            placeholders=tuple(placeholders),
        )
        return CallsiteExtraction(callsite, tuple(template))


def analyze_source(
    source: str, rules: Optional[DetectionRules] = None, path: str = "<memory>"
) -> FileAnalysis:
    """Parse one file and extract callsites (with templates) and sinks."""
    return _Analyzer(source, rules or default_rules(), path).extract()


def extract_callsites(
    source: str, rules: Optional[DetectionRules] = None, path: str = "<memory>"
) -> list[Callsite]:
    return [e.callsite for e in analyze_source(source, rules, path).callsites]


def extract_sinks(
    source: str, rules: Optional[DetectionRules] = None, path: str = "<memory>"
) -> list[SinkOccurrence]:
    return list(analyze_source(source, rules, path).sinks)


def template_text(extraction: CallsiteExtraction) -> str:
    """Display form of a callsite template, slots shown as {expression}."""
    out = []
    for part in extraction.template:
        if isinstance(part, str):
            out.append(part)
        else:
            out.append("{" + extraction.callsite.placeholders[part].original_expression + "}")
    return "".join(out)


def render_template(extraction: CallsiteExtraction, values: list[str]) -> str:
    """Fill template slots with concrete values (one per placeholder index)."""
    out = []
    for part in extraction.template:
        if isinstance(part, str):
            out.append(part)
        else:
            out.append(values[part])
    return "".join(out)
