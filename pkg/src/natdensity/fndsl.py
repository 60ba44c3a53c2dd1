"""A small piecewise-function DSL for user-defined maps on the naturals.

Grammar (EBNF)::

    spec := case+
    case := "when" bool "->" expr ";"
    bool := cmp (("and" | "or") cmp)*
    cmp  := expr ("<" | "<=" | "==" | ">=" | ">") expr
    expr := term (("+" | "-") term)*
    term := atom (("*" | "div" | "mod") atom)*
    atom := integer | "k" | "i" | "pow2" "(" expr ")" | "blog" "(" expr ")"
          | "(" expr ")"

"k" is the argument, "i" is sugar for blog(k) = floor(log2 k), "div" is
floor division, and "#" starts a line comment.  Evaluation picks the first
case whose guard holds ("and"/"or" chain left to right with short-circuit).
All arithmetic is on checked nonnegative 64-bit integers: subtraction below
zero, division or modulo by zero, blog(0), pow2 past 2^63, and a final
result of 0 are errors, never wraps.  A missing case is a totality error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import maps as maps_mod
from .core import U64_MAX, Interval

_KEYWORDS = {"when", "and", "or", "div", "mod", "pow2", "blog", "k", "i"}
_CMP_OPS = ("<=", "==", ">=", "<", ">")
_ATOM_EXPECTED = ["integer", "'k'", "'i'", "'pow2'", "'blog'", "'('"]

MAX_CHECK_WINDOW = 1 << 22


class ParseError(Exception):
    """Syntax error with a position inside the source text."""

    def __init__(self, message: str, line: int, column: int,
                 expected: Optional[list[str]] = None):
        self.message = message
        self.line = line
        self.column = column
        self.expected = expected or []
        where = f"line {line}, column {column}"
        tail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}: {message}{tail}")


class EvalError(Exception):
    """Arithmetic or totality failure while evaluating a spec at some k."""

    def __init__(self, message: str, k: int):
        self.k = k
        super().__init__(f"at k={k}: {message}")


class NonTotalError(EvalError):
    def __init__(self, k: int):
        super().__init__("no case matches", k)


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str  # "k" or "i"


@dataclass(frozen=True)
class Call:
    fn: str  # "pow2" or "blog"
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * div mod
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Call, BinOp]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BoolChain:
    first: Cmp
    rest: tuple[tuple[str, Cmp], ...]  # ("and"|"or", cmp), left-associative


@dataclass(frozen=True)
class Case:
    guard: BoolChain
    body: Expr
    line: int = field(compare=False, default=0)


@dataclass(frozen=True)
class MapSpec:
    cases: tuple[Case, ...]
    source: str = field(compare=False, default="")
    filename: str = field(compare=False, default="<dsl>")


# --------------------------------------------------------------------------
# tokenizer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER IDENT ARROW SEMI LPAREN RPAREN OP CMP EOF
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch == "\n":
            line += 1
            col = 1
            pos += 1
            continue
        if ch in " \t\r":
            pos += 1
            col += 1
            continue
        if ch == "#":
            while pos < n and text[pos] != "\n":
                pos += 1
            continue
        start_col = col
        if ch.isdigit():
            end = pos
            while end < n and text[end].isdigit():
                end += 1
            tokens.append(_Token("NUMBER", text[pos:end], line, start_col))
            col += end - pos
            pos = end
            continue
        if ch.isalpha() or ch == "_":
            end = pos
            while end < n and (text[end].isalnum() or text[end] == "_"):
                end += 1
            word = text[pos:end]
            if word not in _KEYWORDS:
                raise ParseError(f"unknown identifier {word!r}", line, start_col,
                                 expected=sorted(_KEYWORDS))
            tokens.append(_Token("IDENT", word, line, start_col))
            col += end - pos
            pos = end
            continue
        if text.startswith("->", pos):
            tokens.append(_Token("ARROW", "->", line, start_col))
            pos += 2
            col += 2
            continue
        two = text[pos:pos + 2]
        if two in ("<=", ">=", "=="):
            tokens.append(_Token("CMP", two, line, start_col))
            pos += 2
            col += 2
            continue
        if ch in "<>":
            tokens.append(_Token("CMP", ch, line, start_col))
            pos += 1
            col += 1
            continue
        if ch == ";":
            tokens.append(_Token("SEMI", ";", line, start_col))
            pos += 1
            col += 1
            continue
        if ch == "(":
            tokens.append(_Token("LPAREN", "(", line, start_col))
            pos += 1
            col += 1
            continue
        if ch == ")":
            tokens.append(_Token("RPAREN", ")", line, start_col))
            pos += 1
            col += 1
            continue
        if ch in "+-*":
            tokens.append(_Token("OP", ch, line, start_col))
            pos += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, start_col)
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# --------------------------------------------------------------------------
# recursive-descent parser
# --------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.cur
        self.pos += 1
        return tok

    def fail(self, message: str, expected: Optional[list[str]] = None):
        tok = self.cur
        shown = tok.text or "end of input"
        raise ParseError(f"{message}, found {shown!r}", tok.line, tok.column,
                         expected=expected)

    def expect(self, kind: str, text: Optional[str] = None, what: str = "") -> _Token:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            self.fail(f"expected {what or text or kind}",
                      expected=[text or kind])
        return self.advance()

    def parse_spec(self) -> tuple[Case, ...]:
        cases = []
        if self.cur.kind == "EOF":
            self.fail("empty spec: at least one case required", expected=["'when'"])
        while self.cur.kind != "EOF":
            cases.append(self.parse_case())
        return tuple(cases)

    def parse_case(self) -> Case:
        start = self.expect("IDENT", "when", what="'when'")
        guard = self.parse_bool()
        self.expect("ARROW", what="'->'")
        body = self.parse_expr()
        self.expect("SEMI", what="';'")
        return Case(guard=guard, body=body, line=start.line)

    def parse_bool(self) -> BoolChain:
        first = self.parse_cmp()
        rest = []
        while self.cur.kind == "IDENT" and self.cur.text in ("and", "or"):
            joiner = self.advance().text
            rest.append((joiner, self.parse_cmp()))
        return BoolChain(first=first, rest=tuple(rest))

    def parse_cmp(self) -> Cmp:
        left = self.parse_expr()
        if self.cur.kind != "CMP":
            self.fail("expected a comparison operator", expected=list(_CMP_OPS))
        op = self.advance().text
        right = self.parse_expr()
        return Cmp(op=op, left=left, right=right)

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.cur.kind == "OP" and self.cur.text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op=op, left=node, right=self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_atom()
        while ((self.cur.kind == "OP" and self.cur.text == "*")
               or (self.cur.kind == "IDENT" and self.cur.text in ("div", "mod"))):
            op = self.advance().text
            node = BinOp(op=op, left=node, right=self.parse_atom())
        return node

    def parse_atom(self) -> Expr:
        tok = self.cur
        if tok.kind == "NUMBER":
            self.advance()
            value = int(tok.text)
            if value > U64_MAX:
                raise ParseError(f"integer literal {tok.text} exceeds 64-bit range",
                                 tok.line, tok.column)
            return Num(value)
        if tok.kind == "IDENT" and tok.text in ("k", "i"):
            self.advance()
            return Var(tok.text)
        if tok.kind == "IDENT" and tok.text in ("pow2", "blog"):
            self.advance()
            self.expect("LPAREN", what="'('")
            arg = self.parse_expr()
            self.expect("RPAREN", what="')'")
            return Call(fn=tok.text, arg=arg)
        if tok.kind == "LPAREN":
            self.advance()
            inner = self.parse_expr()
            self.expect("RPAREN", what="')'")
            return inner
        self.fail("expected an expression", expected=_ATOM_EXPECTED)


def parse(text: str, filename: str = "<dsl>") -> MapSpec:
    """Parse DSL source into a MapSpec; raises ParseError with a position."""
    cases = _Parser(_tokenize(text)).parse_spec()
    return MapSpec(cases=cases, source=text, filename=filename)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _eval_expr(node: Expr, k: int) -> int:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name == "k":
            return k
        return k.bit_length() - 1  # i = blog(k); k >= 1 always
    if isinstance(node, Call):
        arg = _eval_expr(node.arg, k)
        if node.fn == "pow2":
            if arg > 63:
                raise EvalError(f"pow2({arg}) exceeds 64-bit range", k)
            return 1 << arg
        if arg < 1:
            raise EvalError("blog(0) is undefined", k)
        return arg.bit_length() - 1
    # BinOp
    left = _eval_expr(node.left, k)
    right = _eval_expr(node.right, k)
    if node.op == "+":
        value = left + right
        if value > U64_MAX:
            raise EvalError(f"{left} + {right} exceeds 64-bit range", k)
        return value
    if node.op == "-":
        if right > left:
            raise EvalError(f"{left} - {right} underflows below 0", k)
        return left - right
    if node.op == "*":
        value = left * right
        if value > U64_MAX:
            raise EvalError(f"{left} * {right} exceeds 64-bit range", k)
        return value
    if node.op == "div":
        if right == 0:
            raise EvalError("division by zero", k)
        return left // right
    if right == 0:
        raise EvalError("modulo by zero", k)
    return left % right


def _eval_cmp(node: Cmp, k: int) -> bool:
    left = _eval_expr(node.left, k)
    right = _eval_expr(node.right, k)
    if node.op == "<":
        return left < right
    if node.op == "<=":
        return left <= right
    if node.op == "==":
        return left == right
    if node.op == ">=":
        return left >= right
    return left > right


def _eval_guard(guard: BoolChain, k: int) -> bool:
    value = _eval_cmp(guard.first, k)
    for joiner, cmp_node in guard.rest:
        if joiner == "and":
            value = value and _eval_cmp(cmp_node, k)
        else:
            value = value or _eval_cmp(cmp_node, k)
    return value


def evaluate(spec: MapSpec, k: int) -> int:
    """Value of the first case whose guard holds at k; errors are raised."""
    if k < 1:
        raise EvalError("argument must be >= 1", k)
    for case in spec.cases:
        if _eval_guard(case.guard, k):
            value = _eval_expr(case.body, k)
            if value < 1:
                raise EvalError("result 0 is not a natural", k)
            return value
    raise NonTotalError(k)


# --------------------------------------------------------------------------
# checking, pretty-printing, map adapter
# --------------------------------------------------------------------------

class DslMap(maps_mod.Map1to1):
    """Map1to1 adapter for a parsed spec (no inverse, no reach bound)."""

    def __init__(self, spec: MapSpec, name: str = "dsl"):
        self.spec = spec
        self.name = name

    def apply(self, n: int) -> int:
        return evaluate(self.spec, n)


def load_map(path) -> DslMap:
    p = Path(path)
    return DslMap(parse(p.read_text(encoding="utf-8"), filename=str(p)), name=p.stem)


@dataclass(frozen=True)
class DslCheckReport:
    window: Interval
    total: bool
    first_missing: Optional[int]
    injectivity: Optional[maps_mod.InjectivityReport]

    @property
    def ok(self) -> bool:
        return self.total and self.injectivity is not None and self.injectivity.ok


def check(spec: MapSpec, window: Interval) -> DslCheckReport:
    """Totality on the window, then injectivity via the map verifier."""
    if window.size > MAX_CHECK_WINDOW:
        raise ValueError(f"check window size {window.size} exceeds {MAX_CHECK_WINDOW}")
    for k in range(window.a, window.b + 1):
        try:
            evaluate(spec, k)
        except NonTotalError:
            return DslCheckReport(window=window, total=False, first_missing=k,
                                  injectivity=None)
    report = maps_mod.verify_injective(DslMap(spec), window)
    return DslCheckReport(window=window, total=True, first_missing=None,
                          injectivity=report)


def _pretty_expr(node: Expr, parent_prec: int = 0) -> str:
    # precedence: + - at 1, * div mod at 2, atoms at 3
    if isinstance(node, Num):
        return str(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({_pretty_expr(node.arg, 0)})"
    prec = 1 if node.op in ("+", "-") else 2
    text = (f"{_pretty_expr(node.left, prec)} {node.op} "
            f"{_pretty_expr(node.right, prec + 1)}")
    if prec < parent_prec:
        return f"({text})"
    return text


def pretty(spec: MapSpec) -> str:
    """Canonical text form; parse(pretty(s)) equals s structurally."""
    lines = []
    for case in spec.cases:
        guard = _pretty_expr(case.guard.first.left, 0)
        guard += f" {case.guard.first.op} {_pretty_expr(case.guard.first.right, 0)}"
        for joiner, cmp_node in case.guard.rest:
            guard += (f" {joiner} {_pretty_expr(cmp_node.left, 0)}"
                      f" {cmp_node.op} {_pretty_expr(cmp_node.right, 0)}")
        lines.append(f"when {guard} -> {_pretty_expr(case.body, 0)};")
    return "\n".join(lines) + "\n"
