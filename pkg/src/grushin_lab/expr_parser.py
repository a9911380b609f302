"""Small expression language for polynomials (exact) and symbol fields (numeric).

Grammar::

    expr     := term (('+'|'-') term)*
    term     := factor (('*'|'/') factor)*
    factor   := base ('^' exponent)?
    base     := integer | 'i' | ident | call | '(' expr ')'
    call     := ('re'|'im'|'conj') '(' expr ')' | 'abs_eta' ['(' ')']
    ident    := ('y'|'e') digits | 'x' [digits]
    exponent := ['-'] integer | '(' ['-'] integer '/' integer ')'

``y1..yN`` are base coordinates, ``e1..eN`` the frequency coordinates,
``abs_eta`` the frequency norm; fractional exponents are allowed only on
``abs_eta``, where homogeneity lives.  Exact mode restricts to one variable
``x`` (alias ``x1``), rational coefficients, and nonnegative integer powers,
and lowers to the dense rational polynomial of the classifier.

Parse errors carry the byte offset, the expected-token set, and the offending
lexeme; mode violations are reported distinctly from syntax errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import GrushinLabError, SymbolDomainError

EXACT_POLY = "exact_poly"
NUMERIC_SYMBOL = "numeric_symbol"

_FUNCTIONS = ("re", "im", "conj")


class ParseError(GrushinLabError, ValueError):
    """Syntax or mode violation with position diagnostics."""

    def __init__(self, message: str, *, position: int, expected=(),
                 found: str = "", kind: str = "syntax"):
        super().__init__(f"{message} at offset {position}"
                         + (f" (found {found!r})" if found else "")
                         + (f"; expected one of {sorted(expected)}" if expected else ""))
        self.position = position
        self.expected = tuple(sorted(expected))
        self.found = found
        self.kind = kind


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: Fraction
    pos: int = 0


@dataclass(frozen=True)
class Imag:
    pos: int = 0


@dataclass(frozen=True)
class Var:
    axis: str  # 'y' | 'e' | 'x'
    index: int
    pos: int = 0


@dataclass(frozen=True)
class AbsEta:
    pos: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*', '/'
    left: object
    right: object
    pos: int = 0


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: Fraction
    pos: int = 0


@dataclass(frozen=True)
class Call:
    name: str
    arg: object
    pos: int = 0


# nodes compare ignoring positions
for _cls in (Num, Imag, Var, AbsEta, BinOp, Pow, Call):
    _cls.__eq__ = lambda self, other, _c=_cls: (  # type: ignore[assignment]
        isinstance(other, _c)
        and all(getattr(self, f) == getattr(other, f)
                for f in _c.__dataclass_fields__ if f != "pos"))
    _cls.__hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# lexer

@dataclass(frozen=True)
class _Token:
    kind: str  # INT IDENT OP LPAREN RPAREN END
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            out.append(_Token("INT", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(_Token("IDENT", text[i:j], i))
            i = j
            continue
        if ch in "+-*/^":
            out.append(_Token("OP", ch, i))
            i += 1
            continue
        if ch == "(":
            out.append(_Token("LPAREN", ch, i))
            i += 1
            continue
        if ch == ")":
            out.append(_Token("RPAREN", ch, i))
            i += 1
            continue
        raise ParseError("unexpected character", position=i, found=ch,
                         expected={"digit", "identifier", "operator", "(", ")"})
    out.append(_Token("END", "", n))
    return out


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str, mode: str, dim: int):
        if not text or not text.strip():
            raise ParseError("empty expression", position=0, expected={"expression"})
        if mode not in (EXACT_POLY, NUMERIC_SYMBOL):
            raise ParseError(f"unknown mode {mode!r}", position=0, kind="mode")
        self.text = text
        self.mode = mode
        self.dim = dim
        self.tokens = _tokenize(text)
        self.k = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.k]

    def advance(self) -> _Token:
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            raise ParseError("unexpected token", position=tok.pos,
                             found=tok.text or "<end>",
                             expected={text or kind})
        return self.advance()

    def _mode_violation(self, message: str, pos: int):
        raise ParseError(message, position=pos, kind="mode")

    def parse(self):
        node = self.expr()
        if self.cur.kind != "END":
            raise ParseError("trailing input", position=self.cur.pos,
                             found=self.cur.text, expected={"end of input"})
        return node

    def expr(self):
        # leading sign
        if self.cur.kind == "OP" and self.cur.text in "+-":
            op = self.advance()
            node = self.term()
            if op.text == "-":
                node = BinOp("-", Num(Fraction(0), op.pos), node, op.pos)
        else:
            node = self.term()
        while self.cur.kind == "OP" and self.cur.text in "+-":
            op = self.advance()
            node = BinOp(op.text, node, self.term(), op.pos)
        return node

    def term(self):
        node = self.factor()
        while self.cur.kind == "OP" and self.cur.text in "*/":
            op = self.advance()
            right = self.factor()
            if op.text == "/" and isinstance(right, Num) and right.value == 0:
                raise ParseError("division by syntactic zero", position=op.pos,
                                 kind="domain")
            node = BinOp(op.text, node, right, op.pos)
        return node

    def factor(self):
        node = self.base()
        if self.cur.kind == "OP" and self.cur.text == "^":
            caret = self.advance()
            exponent = self.exponent()
            if exponent.denominator != 1 and not isinstance(node, AbsEta):
                self._mode_violation(
                    "fractional exponents are allowed only on abs_eta", caret.pos)
            if self.mode == EXACT_POLY and (exponent.denominator != 1
                                            or exponent < 0):
                self._mode_violation(
                    "exact mode allows nonnegative integer powers only", caret.pos)
            node = Pow(node, exponent, caret.pos)
        return node

    def exponent(self) -> Fraction:
        if self.cur.kind == "INT":
            return Fraction(int(self.advance().text))
        if self.cur.kind == "OP" and self.cur.text == "-":
            self.advance()
            tok = self.expect("INT")
            return Fraction(-int(tok.text))
        if self.cur.kind == "LPAREN":
            self.advance()
            sign = 1
            if self.cur.kind == "OP" and self.cur.text == "-":
                self.advance()
                sign = -1
            num = int(self.expect("INT").text)
            self.expect("OP", "/")
            den = int(self.expect("INT").text)
            self.expect("RPAREN")
            if den == 0:
                raise ParseError("zero denominator in exponent",
                                 position=self.cur.pos)
            return Fraction(sign * num, den)
        raise ParseError("malformed exponent", position=self.cur.pos,
                         found=self.cur.text or "<end>",
                         expected={"integer", "(p/q)"})

    def base(self):
        tok = self.cur
        if tok.kind == "INT":
            self.advance()
            return Num(Fraction(int(tok.text)), tok.pos)
        if tok.kind == "LPAREN":
            self.advance()
            node = self.expr()
            self.expect("RPAREN")
            return node
        if tok.kind == "IDENT":
            return self.ident_or_call()
        raise ParseError("expected a value", position=tok.pos,
                         found=tok.text or "<end>",
                         expected={"integer", "identifier", "("})

    def ident_or_call(self):
        tok = self.advance()
        name = tok.text
        if name == "i":
            if self.mode == EXACT_POLY:
                self._mode_violation("imaginary unit not allowed in exact mode",
                                     tok.pos)
            return Imag(tok.pos)
        if name == "abs_eta":
            if self.mode == EXACT_POLY:
                self._mode_violation("abs_eta not allowed in exact mode", tok.pos)
            if self.cur.kind == "LPAREN":
                self.advance()
                self.expect("RPAREN")
            return AbsEta(tok.pos)
        if name in _FUNCTIONS:
            if self.mode == EXACT_POLY:
                self._mode_violation(f"{name}() not allowed in exact mode",
                                     tok.pos)
            self.expect("LPAREN")
            arg = self.expr()
            self.expect("RPAREN")
            return Call(name, arg, tok.pos)
        axis = name[0]
        digits = name[1:]
        if axis in ("y", "e", "x") and (digits.isdigit() or
                                        (axis == "x" and digits == "")):
            index = int(digits) if digits else 1
            if axis == "x":
                if self.mode == NUMERIC_SYMBOL:
                    self._mode_violation(
                        "x is the exact-mode variable; use y/e in symbol mode",
                        tok.pos)
                if index != 1:
                    self._mode_violation("exact mode is univariate (x or x1)",
                                         tok.pos)
            else:
                if self.mode == EXACT_POLY:
                    self._mode_violation(
                        "y/e variables not allowed in exact mode", tok.pos)
                if not 1 <= index <= self.dim:
                    raise ParseError(
                        f"variable index out of range for dim={self.dim}",
                        position=tok.pos, found=name, kind="domain")
            return Var(axis, index, tok.pos)
        raise ParseError("unknown identifier", position=tok.pos, found=name,
                         expected={"i", "abs_eta", "re", "im", "conj",
                                   "x", "y<k>", "e<k>"})


def parse(text: str, mode: str = NUMERIC_SYMBOL, dim: int = 1):
    """Parse to an AST; exact_poly mode additionally checks polynomial rules."""
    node = _Parser(text, mode, dim).parse()
    if mode == EXACT_POLY:
        _check_exact_division(node)
    return node


def _check_exact_division(node):
    if isinstance(node, BinOp):
        _check_exact_division(node.left)
        _check_exact_division(node.right)
        if node.op == "/" and not _is_constant(node.right):
            raise ParseError("exact mode divides by rational constants only",
                             position=node.pos, kind="mode")
    elif isinstance(node, Pow):
        _check_exact_division(node.base)
    elif isinstance(node, Call):
        _check_exact_division(node.arg)


def _is_constant(node) -> bool:
    if isinstance(node, Num):
        return True
    if isinstance(node, BinOp):
        return _is_constant(node.left) and _is_constant(node.right)
    if isinstance(node, Pow):
        return _is_constant(node.base)
    return False


# ---------------------------------------------------------------------------
# evaluation (numeric mode)

def evaluate(node, y, eta):
    """Numeric value at coordinate-first arrays (y, eta); deterministic
    left-to-right IEEE evaluation, no re-association."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return _eval(node, np.atleast_1d(y) if y.ndim == 0 else y,
                 np.atleast_1d(eta) if eta.ndim == 0 else eta)


def _eval(node, y, eta):
    if isinstance(node, Num):
        return complex(node.value)
    if isinstance(node, Imag):
        return 1j
    if isinstance(node, Var):
        if node.axis == "y":
            return y[node.index - 1] + 0j
        if node.axis == "e":
            return eta[node.index - 1] + 0j
        return y[node.index - 1] + 0j  # 'x' aliases the first base coordinate
    if isinstance(node, AbsEta):
        norm = np.sqrt(sum(eta[j] ** 2 for j in range(len(eta))))
        if np.any(np.asarray(norm) == 0):
            raise SymbolDomainError("abs_eta evaluated at eta = 0")
        return norm + 0j
    if isinstance(node, BinOp):
        a = _eval(node.left, y, eta)
        b = _eval(node.right, y, eta)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        base = _eval(node.base, y, eta)
        if node.exponent.denominator == 1:
            return base ** int(node.exponent)
        return np.power(np.real(base), float(node.exponent)) + 0j
    if isinstance(node, Call):
        a = _eval(node.arg, y, eta)
        if node.name == "re":
            return np.real(a) + 0j
        if node.name == "im":
            return np.imag(a) + 0j
        return np.conj(a)
    raise TypeError(f"not an expression node: {node!r}")


def compile_symbol(text: str, dim: int = 1):
    """Parse once and return a numeric handle f(y, eta)."""
    node = parse(text, NUMERIC_SYMBOL, dim)

    def handle(y, eta):
        return _eval(node, y, eta)

    handle.expression = text  # type: ignore[attr-defined]
    return handle


# ---------------------------------------------------------------------------
# exact lowering and printing

def to_poly(node):
    """Lower an exact-mode AST to the classifier's dense rational polynomial."""
    from .classifier import Poly

    def lower(nd) -> Poly:
        if isinstance(nd, Num):
            return Poly((nd.value,))
        if isinstance(nd, Var):
            return Poly((Fraction(0), Fraction(1)))
        if isinstance(nd, BinOp):
            a = lower(nd.left)
            b = lower(nd.right)
            if nd.op == "+":
                return a + b
            if nd.op == "-":
                return a - b
            if nd.op == "*":
                return a * b
            if b.degree > 0 or b.is_zero:
                raise ParseError("exact mode divides by rational constants only",
                                 position=nd.pos, kind="mode")
            return a.scale(1 / b.coeffs[0])
        if isinstance(nd, Pow):
            return lower(nd.base).pow(int(nd.exponent))
        raise ParseError("node not allowed in exact mode",
                         position=getattr(nd, "pos", 0), kind="mode")

    return lower(node)


def parse_poly(text: str):
    """Convenience: parse + lower an exact polynomial in x."""
    return to_poly(parse(text, EXACT_POLY, 1))


def to_string(node) -> str:
    """Canonical printer; parse(to_string(parse(s))) == parse(s)."""
    return _print(node, 0)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _print(node, parent_prec: int) -> str:
    if isinstance(node, Num):
        v = node.value
        if v.denominator == 1 and v >= 0:
            return str(v.numerator)
        # not producible by the parser; parseable spelling for manual trees
        return f"({v.numerator}/{v.denominator})" if v >= 0 \
            else f"(0 - {abs(v.numerator)}/{abs(v.denominator)})"
    if isinstance(node, Imag):
        return "i"
    if isinstance(node, Var):
        if node.axis == "x":
            return "x" if node.index == 1 else f"x{node.index}"
        return f"{node.axis}{node.index}"
    if isinstance(node, AbsEta):
        return "abs_eta"
    if isinstance(node, Call):
        return f"{node.name}({_print(node.arg, 0)})"
    if isinstance(node, Pow):
        base = _print(node.base, 3)
        e = node.exponent
        if e.denominator == 1 and e >= 0:
            s = f"{base}^{e.numerator}"
        else:
            s = f"{base}^({e.numerator}/{e.denominator})"
        return f"({s})" if parent_prec >= 3 else s
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = _print(node.left, prec - 1)
        right = _print(node.right, prec)
        s = f"{left} {node.op} {right}" if node.op in "+-" else \
            f"{left}{node.op}{right}"
        return f"({s})" if parent_prec >= prec else s
    raise TypeError(f"not an expression node: {node!r}")
