"""Piecewise-polynomial coefficient specifications.

A specification is a string of pieces separated by ``;``::

    2*x
    16*x**2 - 40*x*m1 + 25*m1**2 + u**2
    x if x in [0, 0.5) ; 0.5

Each piece is a polynomial in the allowed variables, optionally followed by
``if VAR in INTERVAL`` with ``[``/``(`` and ``]``/``)`` brackets. The first
piece whose condition holds is used; a trailing unconditioned piece acts as
the fallback. Points covered by no piece raise ``SpecError`` on evaluation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import SpecError

_COND = re.compile(
    r"^(?P<expr>.*?)\s+if\s+(?P<var>[A-Za-z_]\w*)\s+in\s*"
    r"(?P<lb>[\[(])\s*(?P<lo>[^,]+?)\s*,\s*(?P<hi>[^\])]+?)\s*(?P<rb>[\])])\s*$"
)


def parse_number(text: str) -> float:
    """Parse ``'0.25'``, ``'-3'`` or ``'1/25'`` into a float."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise SpecError(f"not a number: {text!r}") from exc


@dataclass(frozen=True)
class _Piece:
    expr: sympy.Expr
    func: object
    var: str | None = None
    lo: float = -np.inf
    hi: float = np.inf
    lo_closed: bool = True
    hi_closed: bool = True
    condition: str = ""

    def mask(self, values: dict) -> np.ndarray | bool:
        if self.var is None:
            return True
        v = np.asarray(values[self.var], dtype=float)
        lo_ok = v >= self.lo if self.lo_closed else v > self.lo
        hi_ok = v <= self.hi if self.hi_closed else v < self.hi
        return lo_ok & hi_ok


class Coefficient:
    """Evaluable piecewise polynomial in a fixed tuple of variable names."""

    def __init__(self, text: str | float | int, variables: tuple[str, ...], name: str = "coefficient"):
        self.name = name
        self.variables = tuple(variables)
        self.text = str(text).strip()
        if not self.text:
            raise SpecError(f"{name}: empty specification")
        symbols = {v: sympy.Symbol(v, real=True) for v in self.variables}
        self._symbols = symbols
        self.pieces = tuple(self._parse_piece(p.strip(), symbols) for p in self.text.split(";"))
        if any(not p for p in self.text.split(";")):
            raise SpecError(f"{name}: empty piece in {self.text!r}")

    def _parse_piece(self, piece: str, symbols: dict) -> _Piece:
        match = _COND.match(piece)
        cond = {}
        body = piece
        if match:
            body = match["expr"]
            var = match["var"]
            cond["condition"] = piece[len(match["expr"]):].strip()
            if var not in symbols:
                raise SpecError(f"{self.name}: condition on unknown variable {var!r}")
            cond.update(
                var=var,
                lo=parse_number(match["lo"]),
                hi=parse_number(match["hi"]),
                lo_closed=match["lb"] == "[",
                hi_closed=match["rb"] == "]",
            )
        elif " if " in f" {piece} ":
            raise SpecError(f"{self.name}: malformed condition in {piece!r}")
        if not re.fullmatch(r"[\w\s.+\-*/()]+", body):
            raise SpecError(f"{self.name}: illegal characters in {body!r}")
        try:
            expr = parse_expr(body, local_dict=dict(symbols), transformations=standard_transformations)
        except Exception as exc:  # sympy raises a zoo of exception types
            raise SpecError(f"{self.name}: cannot parse {body!r}: {exc}") from exc
        if not isinstance(expr, sympy.Expr):
            raise SpecError(f"{self.name}: {body!r} is not an expression")
        unknown = {str(s) for s in expr.free_symbols} - set(self.variables)
        if unknown:
            raise SpecError(
                f"{self.name}: unknown variables {sorted(unknown)}; allowed {list(self.variables)}"
            )
        if not expr.is_polynomial(*symbols.values()):
            raise SpecError(f"{self.name}: {body!r} is not a polynomial")
        func = sympy.lambdify([symbols[v] for v in self.variables], expr, "numpy")
        return _Piece(expr=expr, func=func, **cond)

    def derivative(self, var: str) -> "Coefficient":
        """Piecewise derivative with respect to ``var`` (same piece conditions)."""
        sym = self._symbols[var]
        parts = []
        for piece in self.pieces:
            text = sympy.sstr(sympy.expand(sympy.diff(piece.expr, sym)))
            parts.append(f"{text} {piece.condition}".strip())
        return Coefficient(" ; ".join(parts), self.variables, name=f"d{self.name}/d{var}")

    def depends_on(self, var: str) -> bool:
        sym = self._symbols.get(var)
        return any(sym in p.expr.free_symbols or p.var == var for p in self.pieces)

    def __call__(self, *args) -> np.ndarray | float:
        if len(args) != len(self.variables):
            raise TypeError(f"{self.name} expects {len(self.variables)} arguments")
        arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args]) if args else []
        values = dict(zip(self.variables, arrays))
        shape = arrays[0].shape if arrays else ()
        out = np.full(shape, np.nan)
        todo = np.ones(shape, dtype=bool)
        for piece in self.pieces:
            sel = todo & piece.mask(values)
            if np.any(sel):
                val = np.broadcast_to(np.asarray(piece.func(*arrays), dtype=float), shape)
                out = np.where(sel, val, out)
                todo = todo & ~sel
            if not np.any(todo):
                break
        if np.any(todo):
            raise SpecError(f"{self.name}: no piece covers some evaluation points")
        return out if shape else float(out)

    def __repr__(self) -> str:
        return f"Coefficient({self.text!r}, {self.variables})"
