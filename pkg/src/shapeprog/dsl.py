"""Shape-program AST, statement registry, and the s-expression surface syntax.

Grammar (whitespace-insensitive, ``;`` starts a line comment)::

    program   := "(" "program" block* ")"
    block     := "(" "block" item ")"
    item      := draw | for
    for       := "(" "for" INT ("trans" REAL REAL REAL | "rot") draw+ ")"
    draw      := "(" "draw" IDENT REAL* ")"

All AST values are immutable; parsing is pure, and registering a statement
definition produces a new registry rather than mutating the old one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

__all__ = [
    "ARCHETYPE_ARITY",
    "Block",
    "Diagnostic",
    "DslError",
    "ParseError",
    "Program",
    "RegistryError",
    "Statement",
    "StatementDef",
    "StatementRegistry",
    "builtin_registry",
    "format_program",
    "parse_program",
    "parameter_groups",
    "register_statement",
    "validate_program",
]

DEGENERATE_LINE_EPS = 1e-9

# Parameter counts are fixed by the archetype.
ARCHETYPE_ARITY = {
    "cuboid-center": 9,
    "cuboid-corner": 7,
    "line-cylinder": 7,
    "cylinder-center": 8,
}

_ARCHETYPE_PARAMS = {
    "cuboid-center": (
        ("center_x", "length"), ("center_y", "length"), ("center_z", "length"),
        ("size_x", "length"), ("size_y", "length"), ("size_z", "length"),
        ("angle_x", "angle"), ("angle_y", "angle"), ("angle_z", "angle"),
    ),
    "cuboid-corner": (
        ("corner_x", "length"), ("corner_y", "length"), ("corner_z", "length"),
        ("size_x", "length"), ("size_y", "length"), ("size_z", "length"),
        ("elevation", "angle"),
    ),
    "line-cylinder": (
        ("start_x", "length"), ("start_y", "length"), ("start_z", "length"),
        ("end_x", "length"), ("end_y", "length"), ("end_z", "length"),
        ("radius", "length"),
    ),
    "cylinder-center": (
        ("center_x", "length"), ("center_y", "length"), ("center_z", "length"),
        ("height", "length"), ("radius", "length"),
        ("angle_x", "angle"), ("angle_y", "angle"), ("angle_z", "angle"),
    ),
}


class DslError(Exception):
    """Base class for everything this module raises."""


class ParseError(DslError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class RegistryError(DslError):
    pass


@dataclass(frozen=True)
class StatementDef:
    """A named draw statement: an alias over one of the four archetypes."""

    name: str
    archetype: str
    param_names: tuple[str, ...] = ()
    param_units: tuple[str, ...] = ()

    def __post_init__(self):
        if self.archetype not in ARCHETYPE_ARITY:
            raise RegistryError(f"unknown archetype {self.archetype!r}")
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", self.name):
            raise RegistryError(f"invalid statement name {self.name!r}")
        defaults = _ARCHETYPE_PARAMS[self.archetype]
        if not self.param_names:
            object.__setattr__(self, "param_names", tuple(n for n, _ in defaults))
        if not self.param_units:
            object.__setattr__(self, "param_units", tuple(u for _, u in defaults))
        if len(self.param_names) != self.arity or len(self.param_units) != self.arity:
            raise RegistryError(
                f"{self.name}: archetype {self.archetype} takes {self.arity} "
                f"parameters, got {len(self.param_names)} names"
            )

    @property
    def arity(self) -> int:
        return ARCHETYPE_ARITY[self.archetype]


@dataclass(frozen=True)
class Statement:
    def_name: str
    params: tuple[float, ...]


@dataclass(frozen=True)
class Block:
    kind: str  # "single" | "translation-for" | "rotation-for"
    body: tuple[Statement, ...]
    loop_count: Optional[int] = None
    loop_delta: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class Program:
    blocks: tuple[Block, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    block: Optional[int]
    statement: Optional[int]
    message: str

    def __str__(self) -> str:
        where = [] if self.block is None else [f"block {self.block}"]
        if self.statement is not None:
            where.append(f"statement {self.statement}")
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


class StatementRegistry:
    """Immutable name -> StatementDef catalog; registration copies."""

    def __init__(self, defs: Iterable[StatementDef] = ()):
        table: dict[str, StatementDef] = {}
        for d in defs:
            if d.name in table:
                raise RegistryError(f"duplicate statement name {d.name!r}")
            table[d.name] = d
        self._defs = table

    def register(self, definition: StatementDef) -> "StatementRegistry":
        if definition.name in self._defs:
            raise RegistryError(f"statement {definition.name!r} already registered")
        return StatementRegistry(list(self._defs.values()) + [definition])

    def resolve(self, name: str) -> StatementDef:
        try:
            return self._defs[name]
        except KeyError:
            raise RegistryError(f"unknown statement {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(self._defs)

    def __contains__(self, name: str) -> bool:
        return name in self._defs

    def __len__(self) -> int:
        return len(self._defs)


def register_statement(registry: StatementRegistry, definition: StatementDef) -> StatementRegistry:
    """Enroll a new statement; returns the extended registry."""
    return registry.register(definition)


_BUILTIN_DEFS = (
    StatementDef("cuboid", "cuboid-center"),
    StatementDef("chair_back", "cuboid-corner"),
    StatementDef("table_top", "cuboid-corner"),
    StatementDef("chair_seat", "cuboid-corner"),
    StatementDef("cabinet_body", "cuboid-corner"),
    StatementDef("line", "line-cylinder"),
    StatementDef("chair_leg", "line-cylinder"),
    StatementDef("table_leg", "line-cylinder"),
    StatementDef("cylinder", "cylinder-center"),
)


def builtin_registry() -> StatementRegistry:
    """Fresh registry holding the built-in statement catalog."""
    return StatementRegistry(_BUILTIN_DEFS)


# ---------------------------------------------------------------------------
# lexer / parser

_REAL_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z")
_INT_RE = re.compile(r"\d+\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[_Token], text: str):
        self._tokens = tokens
        self._pos = 0
        last_line = text.count("\n") + 1
        self._eof = _Token("", last_line, 1)

    def peek(self) -> _Token:
        if self._pos < len(self._tokens):
            return self._tokens[self._pos]
        return self._eof

    def next(self) -> _Token:
        tok = self.peek()
        if tok is not self._eof:
            self._pos += 1
        return tok

    def expect(self, text: str, what: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            got = repr(tok.text) if tok.text else "end of input"
            raise ParseError(f"expected {what}, got {got}", tok.line, tok.column)
        return tok

    def at_end(self) -> bool:
        return self._pos >= len(self._tokens)


def parse_program(text: str, registry: StatementRegistry) -> Program:
    """Parse program text; raises ParseError with line/column on bad input."""
    stream = _TokenStream(_tokenize(text), text)
    stream.expect("(", "'('")
    head = stream.next()
    if head.text != "program":
        raise ParseError(f"expected 'program', got {head.text!r}", head.line, head.column)
    blocks = []
    while True:
        tok = stream.peek()
        if tok.text == ")":
            stream.next()
            break
        if tok.text == "(":
            blocks.append(_parse_block(stream, registry))
        else:
            got = repr(tok.text) if tok.text else "end of input"
            raise ParseError(f"expected block or ')', got {got}", tok.line, tok.column)
    if not stream.at_end():
        tok = stream.peek()
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.column)
    return Program(tuple(blocks))


def _parse_block(stream: _TokenStream, registry: StatementRegistry) -> Block:
    stream.expect("(", "'('")
    stream.expect("block", "'block'")
    tok = stream.peek()
    if tok.text != "(":
        got = repr(tok.text) if tok.text else "end of input"
        raise ParseError(f"expected draw or for, got {got}", tok.line, tok.column)
    block = _parse_item(stream, registry)
    stream.expect(")", "')' closing block")
    return block


def _parse_item(stream: _TokenStream, registry: StatementRegistry) -> Block:
    open_tok = stream.expect("(", "'('")
    head = stream.next()
    if head.text == "draw":
        stmt = _parse_draw_tail(stream, registry, open_tok)
        return Block("single", (stmt,))
    if head.text == "for":
        return _parse_for_tail(stream, registry)
    raise ParseError(f"expected 'draw' or 'for', got {head.text!r}", head.line, head.column)


def _parse_for_tail(stream: _TokenStream, registry: StatementRegistry) -> Block:
    count_tok = stream.next()
    if not _INT_RE.fullmatch(count_tok.text):
        raise ParseError(
            f"expected loop count, got {count_tok.text!r}", count_tok.line, count_tok.column
        )
    count = int(count_tok.text)
    if count < 1:
        raise ParseError("loop count must be positive", count_tok.line, count_tok.column)
    mode = stream.next()
    if mode.text == "trans":
        delta = tuple(_parse_real(stream, "loop delta") for _ in range(3))
        kind = "translation-for"
    elif mode.text == "rot":
        delta = None
        kind = "rotation-for"
    else:
        raise ParseError(f"expected 'trans' or 'rot', got {mode.text!r}", mode.line, mode.column)
    body = []
    while True:
        tok = stream.peek()
        if tok.text == ")":
            stream.next()
            break
        open_tok = stream.expect("(", "'(' or ')'")
        head = stream.next()
        if head.text != "draw":
            raise ParseError(f"expected 'draw', got {head.text!r}", head.line, head.column)
        body.append(_parse_draw_tail(stream, registry, open_tok))
    if not body:
        raise ParseError("for loop needs at least one draw", mode.line, mode.column)
    return Block(kind, tuple(body), loop_count=count, loop_delta=delta)


def _parse_draw_tail(stream: _TokenStream, registry: StatementRegistry, open_tok: _Token) -> Statement:
    name_tok = stream.next()
    if not _IDENT_RE.fullmatch(name_tok.text):
        got = repr(name_tok.text) if name_tok.text else "end of input"
        raise ParseError(f"expected statement name, got {got}", name_tok.line, name_tok.column)
    if name_tok.text not in registry:
        raise ParseError(
            f"unknown statement {name_tok.text!r}", name_tok.line, name_tok.column
        )
    definition = registry.resolve(name_tok.text)
    params = []
    while True:
        tok = stream.peek()
        if tok.text == ")":
            stream.next()
            break
        params.append(_parse_real(stream, "parameter"))
    if len(params) != definition.arity:
        raise ParseError(
            f"{definition.name} takes {definition.arity} parameters, got {len(params)}",
            open_tok.line,
            open_tok.column,
        )
    return Statement(definition.name, tuple(params))


def _parse_real(stream: _TokenStream, what: str) -> float:
    tok = stream.next()
    if not _REAL_RE.fullmatch(tok.text):
        got = repr(tok.text) if tok.text else "end of input"
        raise ParseError(f"expected {what}, got {got}", tok.line, tok.column)
    return float(tok.text)


# ---------------------------------------------------------------------------
# formatter


def _fmt_real(x: float) -> str:
    # repr gives the shortest decimal that round-trips float64 exactly
    return repr(float(x))


def format_program(program: Program) -> str:
    """Emit program text that parses back to a structurally equal AST."""
    if not program.blocks:
        return "(program)"
    lines = ["(program"]
    for block in program.blocks:
        lines.append(f"  {_fmt_block(block)}")
    lines[-1] += ")"
    return "\n".join(lines)


def _fmt_block(block: Block) -> str:
    draws = [_fmt_draw(s) for s in block.body]
    if block.kind == "single":
        return f"(block {draws[0]})"
    if block.kind == "translation-for":
        delta = " ".join(_fmt_real(d) for d in block.loop_delta)
        head = f"(for {block.loop_count} trans {delta}"
    else:
        head = f"(for {block.loop_count} rot"
    body = " ".join(draws)
    return f"(block {head} {body}))"


def _fmt_draw(stmt: Statement) -> str:
    params = " ".join(_fmt_real(p) for p in stmt.params)
    return f"(draw {stmt.def_name} {params})" if params else f"(draw {stmt.def_name})"


# ---------------------------------------------------------------------------
# validation


def validate_program(program: Program, registry: StatementRegistry) -> list[Diagnostic]:
    """Structural and geometric checks; empty result means lowering cannot fail."""
    diags: list[Diagnostic] = []
    for k, block in enumerate(program.blocks):
        if block.kind not in ("single", "translation-for", "rotation-for"):
            diags.append(Diagnostic(k, None, f"unknown block kind {block.kind!r}"))
            continue
        if not block.body:
            diags.append(Diagnostic(k, None, "empty block body"))
        if block.kind == "single":
            if len(block.body) > 1:
                diags.append(Diagnostic(k, None, "single block holds more than one statement"))
            if block.loop_count is not None or block.loop_delta is not None:
                diags.append(Diagnostic(k, None, "single block carries loop fields"))
        else:
            if block.loop_count is None or block.loop_count < 1:
                diags.append(Diagnostic(k, None, "loop count must be a positive integer"))
            if block.kind == "translation-for":
                if block.loop_delta is None or len(block.loop_delta) != 3:
                    diags.append(Diagnostic(k, None, "translation loop needs a 3-vector delta"))
                elif not all(math.isfinite(d) for d in block.loop_delta):
                    diags.append(Diagnostic(k, None, "non-finite loop delta"))
            elif block.loop_delta is not None:
                diags.append(Diagnostic(k, None, "rotation loop takes no delta"))
        for j, stmt in enumerate(block.body):
            diags.extend(_validate_statement(k, j, stmt, registry))
    return diags


def _validate_statement(k: int, j: int, stmt: Statement, registry: StatementRegistry) -> Iterator[Diagnostic]:
    if stmt.def_name not in registry:
        yield Diagnostic(k, j, f"unknown statement {stmt.def_name!r}")
        return
    definition = registry.resolve(stmt.def_name)
    if len(stmt.params) != definition.arity:
        yield Diagnostic(
            k, j,
            f"{definition.name} takes {definition.arity} parameters, got {len(stmt.params)}",
        )
        return
    if not all(math.isfinite(p) for p in stmt.params):
        yield Diagnostic(k, j, "non-finite parameter")
        return
    p = stmt.params
    archetype = definition.archetype
    if archetype in ("cuboid-center", "cuboid-corner"):
        if min(p[3], p[4], p[5]) <= 0.0:
            yield Diagnostic(k, j, "non-positive size")
    elif archetype == "line-cylinder":
        if p[6] <= 0.0:
            yield Diagnostic(k, j, "non-positive size")
        gap = math.dist(p[0:3], p[3:6])
        if gap < DEGENERATE_LINE_EPS:
            yield Diagnostic(k, j, "degenerate line")
    elif archetype == "cylinder-center":
        if min(p[3], p[4]) <= 0.0:
            yield Diagnostic(k, j, "non-positive size")


def parameter_groups(program: Program) -> Iterator[tuple[int, Optional[int], int]]:
    """Yield (block, statement, count) for each continuous-parameter group.

    Groups appear in flat layout order: per block, the translation loop's
    delta first (statement None, count 3), then each statement's parameter
    vector. Loop counts and statement identities are discrete and carry no
    slots.
    """
    for k, block in enumerate(program.blocks):
        if block.kind == "translation-for":
            yield k, None, 3
        for j, stmt in enumerate(block.body):
            yield k, j, len(stmt.params)
