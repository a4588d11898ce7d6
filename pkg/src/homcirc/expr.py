"""Tiny expression language for scalar device characteristics.

Grammar: floating-point numbers, a single free variable (normally ``u``),
``+ - * /``, integer powers with ``^``, ``sin(...)``, ``cos(...)`` and
parentheses.  Expressions are parsed to an immutable AST supporting exact
symbolic differentiation, so incremental parameters are evaluated without
truncation error.  Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ExpressionError(ValueError):
    """Parse or evaluation error; ``offset`` is a byte offset into the text."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


# --- AST nodes -------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Add:
    a: "Node"
    b: "Node"


@dataclass(frozen=True)
class Sub:
    a: "Node"
    b: "Node"


@dataclass(frozen=True)
class Mul:
    a: "Node"
    b: "Node"


@dataclass(frozen=True)
class Div:
    a: "Node"
    b: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Sin:
    a: "Node"


@dataclass(frozen=True)
class Cos:
    a: "Node"


Node = Const | Var | Add | Sub | Mul | Div | Pow | Sin | Cos


# --- Tokenizer -------------------------------------------------------------

_OPERATORS = set("+-*/^(),")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, lexeme, offset) triples; kind in num/name/op."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPERATORS:
            tokens.append(("op", c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_e = False
            while j < n:
                cj = text[j]
                if cj.isdigit() or cj == ".":
                    j += 1
                elif cj in "eE" and not seen_e and j + 1 < n and (
                    text[j + 1].isdigit() or text[j + 1] in "+-"
                ):
                    seen_e = True
                    j += 2 if text[j + 1] in "+-" else 1
                else:
                    break
            lexeme = text[i:j]
            try:
                float(lexeme)
            except ValueError:
                raise ExpressionError(f"malformed number {lexeme!r}", i)
            tokens.append(("num", lexeme, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ExpressionError(f"unexpected character {c!r}", i)
    return tokens


# --- Parser (recursive descent, standard precedence) -----------------------

class _Parser:
    def __init__(self, text: str, variables: tuple[str, ...]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ExpressionError("unexpected end of expression", len(self.text))
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        tok = self.next()
        if tok[0] != "op" or tok[1] != op:
            raise ExpressionError(f"expected {op!r}, found {tok[1]!r}", tok[2])

    def parse(self) -> Node:
        node = self.sum()
        tok = self.peek()
        if tok is not None:
            raise ExpressionError(f"unexpected trailing token {tok[1]!r}", tok[2])
        return node

    def sum(self) -> Node:
        node = self.term()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "+-":
            self.next()
            rhs = self.term()
            node = Add(node, rhs) if tok[1] == "+" else Sub(node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "*/":
            self.next()
            rhs = self.unary()
            node = Mul(node, rhs) if tok[1] == "*" else Div(node, rhs)
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] in "+-":
            self.next()
            operand = self.unary()
            if tok[1] == "+":
                return operand
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Sub(Const(0.0), operand)
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] == "^":
            self.next()
            node = Pow(node, self._exponent())
        return node

    def _exponent(self) -> int:
        tok = self.next()
        sign = 1
        if tok[0] == "op" and tok[1] == "-":
            sign = -1
            tok = self.next()
        if tok[0] != "num":
            raise ExpressionError(f"exponent must be an integer, found {tok[1]!r}", tok[2])
        value = sign * float(tok[1])
        if value != int(value):
            raise ExpressionError(f"non-integer exponent {tok[1]!r}", tok[2])
        if value < 0:
            raise ExpressionError(f"negative exponent {tok[1]!r}", tok[2])
        return int(value)

    def atom(self) -> Node:
        tok = self.next()
        kind, lexeme, off = tok
        if kind == "num":
            return Const(float(lexeme))
        if kind == "name":
            if lexeme in ("sin", "cos"):
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return Sin(arg) if lexeme == "sin" else Cos(arg)
            if lexeme in self.variables:
                return Var(lexeme)
            raise ExpressionError(f"unknown identifier {lexeme!r}", off)
        if kind == "op" and lexeme == "(":
            node = self.sum()
            self.expect_op(")")
            return node
        raise ExpressionError(f"unexpected token {lexeme!r}", off)


def parse_expression(text: str, variables: tuple[str, ...] = ("u",)) -> Node:
    """Parse ``text`` into an AST; only names in ``variables`` are allowed."""
    return fold(_Parser(text, variables).parse())


# --- Evaluation ------------------------------------------------------------

def evaluate(node: Node, env: dict[str, float]) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExpressionError(f"unbound variable {node.name!r}")
    if isinstance(node, Add):
        return evaluate(node.a, env) + evaluate(node.b, env)
    if isinstance(node, Sub):
        return evaluate(node.a, env) - evaluate(node.b, env)
    if isinstance(node, Mul):
        return evaluate(node.a, env) * evaluate(node.b, env)
    if isinstance(node, Div):
        return evaluate(node.a, env) / evaluate(node.b, env)
    if isinstance(node, Pow):
        return evaluate(node.base, env) ** node.exponent
    if isinstance(node, Sin):
        return math.sin(evaluate(node.a, env))
    if isinstance(node, Cos):
        return math.cos(evaluate(node.a, env))
    raise TypeError(f"not an AST node: {node!r}")


def evaluate_at(node: Node, u: float, var: str = "u") -> float:
    return evaluate(node, {var: u})


def evaluate_vec(node: Node, env: dict) -> "object":
    """Evaluate over numpy arrays (or scalars) bound in ``env``.

    Division by zero follows numpy semantics (inf/nan) instead of raising;
    callers doing grid validation check finiteness themselves.
    """
    import numpy as np

    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Add):
        return evaluate_vec(node.a, env) + evaluate_vec(node.b, env)
    if isinstance(node, Sub):
        return evaluate_vec(node.a, env) - evaluate_vec(node.b, env)
    if isinstance(node, Mul):
        return evaluate_vec(node.a, env) * evaluate_vec(node.b, env)
    if isinstance(node, Div):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.true_divide(evaluate_vec(node.a, env), evaluate_vec(node.b, env))
    if isinstance(node, Pow):
        return evaluate_vec(node.base, env) ** node.exponent
    if isinstance(node, Sin):
        return np.sin(evaluate_vec(node.a, env))
    if isinstance(node, Cos):
        return np.cos(evaluate_vec(node.a, env))
    raise TypeError(f"not an AST node: {node!r}")


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Add, Sub, Mul, Div)):
        return free_variables(node.a) | free_variables(node.b)
    if isinstance(node, Pow):
        return free_variables(node.base)
    if isinstance(node, (Sin, Cos)):
        return free_variables(node.a)
    return set()


# --- Differentiation -------------------------------------------------------

def differentiate(node: Node, var: str = "u") -> Node:
    """Exact derivative of ``node`` with respect to ``var``, constant-folded."""
    return fold(_diff(node, var))


def _diff(node: Node, var: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == var else 0.0)
    if isinstance(node, Add):
        return Add(_diff(node.a, var), _diff(node.b, var))
    if isinstance(node, Sub):
        return Sub(_diff(node.a, var), _diff(node.b, var))
    if isinstance(node, Mul):
        return Add(Mul(_diff(node.a, var), node.b), Mul(node.a, _diff(node.b, var)))
    if isinstance(node, Div):
        num = Sub(Mul(_diff(node.a, var), node.b), Mul(node.a, _diff(node.b, var)))
        return Div(num, Pow(node.b, 2))
    if isinstance(node, Pow):
        if node.exponent == 0:
            return Const(0.0)
        inner = _diff(node.base, var)
        return Mul(Mul(Const(float(node.exponent)), Pow(node.base, node.exponent - 1)), inner)
    if isinstance(node, Sin):
        return Mul(Cos(node.a), _diff(node.a, var))
    if isinstance(node, Cos):
        return Mul(Sub(Const(0.0), Sin(node.a)), _diff(node.a, var))
    raise TypeError(f"not an AST node: {node!r}")


def fold(node: Node) -> Node:
    """Constant folding plus the 0/1 identities; no deeper rewriting."""
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, (Sin, Cos)):
        a = fold(node.a)
        if isinstance(a, Const):
            f = math.sin if isinstance(node, Sin) else math.cos
            return Const(f(a.value))
        return type(node)(a)
    if isinstance(node, Pow):
        base = fold(node.base)
        if node.exponent == 0:
            return Const(1.0)
        if node.exponent == 1:
            return base
        if isinstance(base, Const):
            return Const(base.value ** node.exponent)
        return Pow(base, node.exponent)
    a, b = fold(node.a), fold(node.b)
    ca = a.value if isinstance(a, Const) else None
    cb = b.value if isinstance(b, Const) else None
    if isinstance(node, Add):
        if ca is not None and cb is not None:
            return Const(ca + cb)
        if ca == 0.0:
            return b
        if cb == 0.0:
            return a
        return Add(a, b)
    if isinstance(node, Sub):
        if ca is not None and cb is not None:
            return Const(ca - cb)
        if cb == 0.0:
            return a
        return Sub(a, b)
    if isinstance(node, Mul):
        if ca is not None and cb is not None:
            return Const(ca * cb)
        if ca == 0.0 or cb == 0.0:
            return Const(0.0)
        if ca == 1.0:
            return b
        if cb == 1.0:
            return a
        return Mul(a, b)
    if isinstance(node, Div):
        if cb == 1.0:
            return a
        if ca is not None and cb is not None and cb != 0.0:
            return Const(ca / cb)
        if ca == 0.0:
            return Const(0.0)
        return Div(a, b)
    raise TypeError(f"not an AST node: {node!r}")


# --- Printing --------------------------------------------------------------

_PREC = {"sum": 1, "term": 2, "unary": 3, "power": 4, "atom": 5}


def to_string(node: Node) -> str:
    """Render the AST; ``parse_expression(to_string(a))`` is structurally ``a``."""
    return _render(node, 0)


def _render(node: Node, parent_prec: int) -> str:
    if isinstance(node, Const):
        v = node.value
        if v < 0 or (v == 0.0 and math.copysign(1.0, v) < 0):
            s = _fmt(-v)
            return f"(-{s})" if parent_prec > _PREC["sum"] else f"-{s}"
        return _fmt(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Sin):
        return f"sin({_render(node.a, 0)})"
    if isinstance(node, Cos):
        return f"cos({_render(node.a, 0)})"
    if isinstance(node, Pow):
        base = _render(node.base, _PREC["power"] + 1)
        return f"{base}^{node.exponent}"
    if isinstance(node, Sub) and isinstance(node.a, Const) and node.a.value == 0.0:
        s = f"-{_render(node.b, _PREC['unary'])}"
        return f"({s})" if parent_prec > _PREC["sum"] else s
    if isinstance(node, (Add, Sub)):
        op = " + " if isinstance(node, Add) else " - "
        s = f"{_render(node.a, _PREC['sum'])}{op}{_render(node.b, _PREC['sum'] + 1)}"
        return f"({s})" if parent_prec > _PREC["sum"] else s
    if isinstance(node, (Mul, Div)):
        op = "*" if isinstance(node, Mul) else "/"
        s = f"{_render(node.a, _PREC['term'])}{op}{_render(node.b, _PREC['term'] + 1)}"
        return f"({s})" if parent_prec > _PREC["term"] else s
    raise TypeError(f"not an AST node: {node!r}")


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)
