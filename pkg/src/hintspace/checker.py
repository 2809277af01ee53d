"""External type-checker hook: edit one annotation, run the checker.

The hook rewrites a single symbol's annotation in a copy of the source,
invokes a configured checker command on it with a hard timeout, and maps
the exit status to accept (no type error) or reject. Anything that
prevents a verdict (no command, unsupported edit, crash, timeout)
yields a skip.
"""

from __future__ import annotations

import ast
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Optional

__all__ = ["CheckerResult", "annotate_source", "checker_hook"]

CHECKER_TIMEOUT_SECONDS = 20.0


@dataclass(frozen=True)
class CheckerResult:
    verdict: str  # accept | reject | skip
    detail: str = ""


def _line_splice(lines: list[str], line: int, col: int, end_line: int,
                 end_col: int, replacement: str) -> list[str]:
    """Replace source span [line:col, end_line:end_col) (1-based lines)."""
    out = lines[: line - 1]
    head = lines[line - 1][:col]
    tail = lines[end_line - 1][end_col:]
    out.append(head + replacement + tail)
    out.extend(lines[end_line:])
    return out


def _find_scope(tree: ast.AST, path: list[str]) -> Optional[ast.AST]:
    node: ast.AST = tree
    for part in path:
        found = None
        for child in ast.walk(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)) \
                    and child.name == part:
                found = child
                break
        if found is None:
            return None
        node = found
    return node


def annotate_source(source: str, kind: str, qualname: str, type_text: str) -> Optional[str]:
    """Insert or replace one annotation; None when the edit is unsupported."""
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return None
    lines = source.splitlines(keepends=True)
    parts = qualname.split(".")

    if kind == "return":
        fn = _find_scope(tree, parts)
        if not isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return None
        if fn.returns is not None:
            r = fn.returns
            new = _line_splice(lines, r.lineno, r.col_offset, r.end_lineno,
                               r.end_col_offset, type_text)
            return "".join(new)
        # insert "-> T" before the header colon, right after the ")"
        args_end = None
        for lineno in range(fn.lineno, (fn.body[0].lineno if fn.body else fn.lineno) + 1):
            text = lines[lineno - 1]
            idx = text.rfind("):")
            if idx >= 0:
                args_end = (lineno, idx + 1)
                break
        if args_end is None:
            return None
        lineno, col = args_end
        text = lines[lineno - 1]
        lines[lineno - 1] = text[:col] + f" -> {type_text}" + text[col:]
        return "".join(lines)

    if kind == "parameter":
        fn = _find_scope(tree, parts[:-1])
        if not isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return None
        name = parts[-1]
        a = fn.args
        for arg in [*a.posonlyargs, *a.args, *a.kwonlyargs, a.vararg, a.kwarg]:
            if arg is not None and arg.arg == name:
                if arg.annotation is not None:
                    ann = arg.annotation
                    new = _line_splice(lines, ann.lineno, ann.col_offset,
                                       ann.end_lineno, ann.end_col_offset, type_text)
                    return "".join(new)
                end_line, end_col = arg.lineno, arg.col_offset + len(name)
                text = lines[end_line - 1]
                lines[end_line - 1] = (text[:end_col] + f": {type_text}" + text[end_col:])
                return "".join(lines)
        return None

    if kind == "variable":
        scope = _find_scope(tree, parts[:-1]) if len(parts) > 1 else tree
        if scope is None:
            return None
        name = parts[-1]
        body = scope.body if hasattr(scope, "body") else []
        for stmt in body:
            if isinstance(stmt, ast.AnnAssign) and isinstance(stmt.target, ast.Name) \
                    and stmt.target.id == name:
                ann = stmt.annotation
                new = _line_splice(lines, ann.lineno, ann.col_offset,
                                   ann.end_lineno, ann.end_col_offset, type_text)
                return "".join(new)
            if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1 \
                    and isinstance(stmt.targets[0], ast.Name) \
                    and stmt.targets[0].id == name:
                t = stmt.targets[0]
                new = _line_splice(lines, t.lineno, t.col_offset, t.end_lineno,
                                   t.end_col_offset, f"{name}: {type_text}")
                return "".join(new)
        return None
    return None


def checker_hook(source: str, kind: str, qualname: str, type_text: str,
                 command: Optional[str],
                 timeout: float = CHECKER_TIMEOUT_SECONDS) -> CheckerResult:
    """Run the configured checker against the singly-annotated source."""
    if not command:
        return CheckerResult("skip", "no checker configured")
    edited = annotate_source(source, kind, qualname, type_text)
    if edited is None:
        return CheckerResult("skip", f"cannot edit {kind} {qualname}")
    tmp = tempfile.NamedTemporaryFile("w", suffix=".py", delete=False, encoding="utf-8")
    try:
        tmp.write(edited)
        tmp.close()
        try:
            proc = subprocess.run(
                [*shlex.split(command), tmp.name],
                capture_output=True,
                timeout=timeout,
                text=True,
            )
        except subprocess.TimeoutExpired:
            return CheckerResult("skip", f"checker timed out after {timeout:.0f}s")
        except OSError as exc:
            return CheckerResult("skip", f"checker failed to start: {exc}")
        if proc.returncode == 0:
            return CheckerResult("accept")
        return CheckerResult("reject", (proc.stdout or proc.stderr or "").strip()[:500])
    finally:
        os.unlink(tmp.name)
