"""Mini expression language for metric entries and rescale functions.

Grammar (infix, usual precedence, left associative):

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom
    atom    := NUMBER | COORD | FUNC '(' expr ')' | 'pow' '(' expr ',' INT ')'
             | '(' expr ')'

Coordinates are x1 ... xn; NUMBER is an integer or decimal literal (stored as
an exact Fraction); FUNC is one of exp, sin, cos.  Parse errors carry
line/column positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .jets import Jet


class ExpressionError(ValueError):
    """Raised on syntax errors, with line/column info."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Coord:
    index: int  # zero-based


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*', '/'
    left: object
    right: object


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str  # 'exp' | 'sin' | 'cos'
    arg: object


_FUNCS = ("exp", "sin", "cos")


class _Tokenizer:
    def __init__(self, text: str, line: int = 1):
        self.text = text
        self.pos = 0
        self.line = line

    def _col(self):
        return self.pos + 1

    def error(self, msg):
        raise ExpressionError(msg, self.line, self._col())

    def tokens(self):
        out = []
        s = self.text
        while self.pos < len(s):
            ch = s[self.pos]
            if ch.isspace():
                self.pos += 1
                continue
            col = self._col()
            if ch in "+-*/(),":
                out.append((ch, ch, col))
                self.pos += 1
            elif ch.isdigit() or (ch == "." and self.pos + 1 < len(s) and s[self.pos + 1].isdigit()):
                start = self.pos
                while self.pos < len(s) and (s[self.pos].isdigit() or s[self.pos] == "."):
                    self.pos += 1
                lit = s[start : self.pos]
                try:
                    val = Fraction(lit)
                except ValueError:
                    self.error(f"bad number literal '{lit}'")
                out.append(("num", val, col))
            elif ch.isalpha() or ch == "_":
                start = self.pos
                while self.pos < len(s) and (s[self.pos].isalnum() or s[self.pos] == "_"):
                    self.pos += 1
                out.append(("name", s[start : self.pos], col))
            else:
                self.error(f"unexpected character '{ch}'")
        out.append(("end", None, self._col()))
        return out


class _Parser:
    def __init__(self, tokens, nvars: int, line: int):
        self.toks = tokens
        self.i = 0
        self.nvars = nvars
        self.line = line

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ExpressionError(f"expected '{kind}', got '{tok[1]}'", self.line, tok[2])
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"trailing input '{tok[1]}'", self.line, tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.next()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, val, col = self.next()
        if kind == "num":
            return Const(val)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val == "pow":
                self.expect("(")
                base = self.expr()
                self.expect(",")
                etok = self.next()
                if etok[0] == "-":
                    etok2 = self.next()
                    if etok2[0] != "num" or etok2[1].denominator != 1:
                        raise ExpressionError("pow exponent must be an integer", self.line, etok2[2])
                    exponent = -int(etok2[1])
                elif etok[0] == "num" and etok[1].denominator == 1:
                    exponent = int(etok[1])
                else:
                    raise ExpressionError("pow exponent must be an integer", self.line, etok[2])
                self.expect(")")
                return Pow(base, exponent)
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val.startswith("x") and val[1:].isdigit():
                idx = int(val[1:])
                if not 1 <= idx <= self.nvars:
                    raise ExpressionError(
                        f"coordinate '{val}' out of range for dimension {self.nvars}", self.line, col
                    )
                return Coord(idx - 1)
            raise ExpressionError(f"unknown name '{val}'", self.line, col)
        raise ExpressionError(f"unexpected token '{val}'", self.line, col)


def parse_expression(text: str, nvars: int, line: int = 1):
    """Parse a single expression in coordinates x1..x<nvars>."""
    return _Parser(_Tokenizer(text, line).tokens(), nvars, line).parse()


def eval_jet(node, coords: list) -> Jet:
    """Evaluate on coordinate jets, producing a scalar jet."""
    nvars, order = coords[0].nvars, coords[0].order
    if isinstance(node, Const):
        return Jet.constant(np.array(float(node.value)), nvars, order)
    if isinstance(node, Coord):
        return coords[node.index]
    if isinstance(node, Neg):
        return -eval_jet(node.arg, coords)
    if isinstance(node, BinOp):
        a = eval_jet(node.left, coords)
        b = eval_jet(node.right, coords)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        return eval_jet(node.base, coords).powi(node.exponent)
    if isinstance(node, Call):
        arg = eval_jet(node.arg, coords)
        return getattr(arg, node.func)()
    raise TypeError(f"not an expression node: {node!r}")


def eval_value(node, x: np.ndarray) -> float:
    """Plain float evaluation at a point."""
    coords = Jet.coordinates(np.asarray(x, dtype=float), 0)
    return float(eval_jet(node, coords).value())


def expr_to_str(node) -> str:
    if isinstance(node, Const):
        return str(node.value)
    if isinstance(node, Coord):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{expr_to_str(node.arg)})"
    if isinstance(node, BinOp):
        return f"({expr_to_str(node.left)} {node.op} {expr_to_str(node.right)})"
    if isinstance(node, Pow):
        return f"pow({expr_to_str(node.base)}, {node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({expr_to_str(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")
