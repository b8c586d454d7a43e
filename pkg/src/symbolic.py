"""Closed-form expressions extracted from gated networks.

Softplus neurons print as log(1 + exp(z)); a weighted sum of such terms is
folded into one log of a product of powers. Numeric evaluation stays in log
space wherever the tree allows it, so the full-precision expression tracks the
network's own forward pass to rounding error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy
from scipy.special import expit
from sympy.parsing.sympy_parser import parse_expr

from src.errors import CorruptCheckpoint
from src.gates import GateMode
from src.nets import Activation, NetworkModel

CONST = "const"
SYMBOL = "symbol"
ADD = "add"
MUL = "mul"
POW = "pow"
EXP = "exp"
LOG = "log"
SIGMOID = "sigmoid"

NODE_KINDS = (CONST, SYMBOL, ADD, MUL, POW, EXP, LOG, SIGMOID)


@dataclass(frozen=True)
class ExprNode:
    kind: str
    children: tuple[ExprNode, ...] = ()
    value: float | None = None
    name: str | None = None

    def to_dict(self) -> dict:
        payload: dict = {"kind": self.kind}
        if self.value is not None:
            payload["value"] = self.value
        if self.name is not None:
            payload["name"] = self.name
        if self.children:
            payload["children"] = [c.to_dict() for c in self.children]
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> ExprNode:
        try:
            kind = payload["kind"]
            if kind not in NODE_KINDS:
                raise ValueError(f"unknown node kind {kind!r}")
            value = payload.get("value")
            return cls(kind, tuple(cls.from_dict(c) for c in payload.get("children", [])),
                       None if value is None else float(value), payload.get("name"))
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptCheckpoint(f"Invalid expression tree: {e}") from None

    def symbols(self) -> set[str]:
        if self.kind == SYMBOL:
            return {self.name}
        out: set[str] = set()
        for c in self.children:
            out |= c.symbols()
        return out

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


def const(v: float) -> ExprNode:
    return ExprNode(CONST, value=float(v))


def symbol(name: str) -> ExprNode:
    return ExprNode(SYMBOL, name=name)


def add(*terms: ExprNode) -> ExprNode:
    return ExprNode(ADD, tuple(terms))


def mul(*factors: ExprNode) -> ExprNode:
    return ExprNode(MUL, tuple(factors))


def power(base: ExprNode, exponent: float) -> ExprNode:
    return ExprNode(POW, (base,), value=float(exponent))


def exp(x: ExprNode) -> ExprNode:
    return ExprNode(EXP, (x,))


def log(x: ExprNode) -> ExprNode:
    return ExprNode(LOG, (x,))


def sigmoid(x: ExprNode) -> ExprNode:
    return ExprNode(SIGMOID, (x,))


def softplus(x: ExprNode) -> ExprNode:
    return log(add(const(1.0), exp(x)))


def _is_const(node: ExprNode, v: float | None = None) -> bool:
    return node.kind == CONST and (v is None or node.value == v)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

def extract_network(model: NetworkModel, inputs: Sequence[ExprNode],
                    mode: GateMode = GateMode.TEST) -> list[ExprNode]:
    """Output expressions of `model` with deterministic gates; zero parameters are left out."""
    if len(inputs) != model.n_inputs:
        raise ValueError(f"Expected {model.n_inputs} input expressions, got {len(inputs)}")
    x0 = list(inputs)
    a = x0
    arrays = model.arrays(mode)
    last = len(arrays) - 1
    for l, (W, P, b) in enumerate(arrays):
        out = []
        for j in range(W.shape[0]):
            terms = [const(b[j])] if b[j] != 0.0 else []
            terms += [mul(const(W[j, i]), a[i]) for i in range(W.shape[1]) if W[j, i] != 0.0]
            if P is not None:
                terms += [mul(const(P[j, k]), x0[k]) for k in range(P.shape[1]) if P[j, k] != 0.0]
            z = add(*terms) if terms else const(0.0)
            if l < last:
                z = softplus(z) if model.activation is Activation.SOFTPLUS else sigmoid(z)
            elif model.output_activation is not None:
                z = softplus(z) if model.output_activation is Activation.SOFTPLUS else sigmoid(z)
            out.append(z)
        a = out
    return a


def extract_expression(model: NetworkModel, inputs: Sequence[ExprNode],
                       wrapper: Callable[[ExprNode], ExprNode] | None = None,
                       mode: GateMode = GateMode.TEST, simplified: bool = True) -> ExprNode:
    """Scalar expression of the network output, optionally passed through a physics wrapper."""
    out = extract_network(model, inputs, mode)[0]
    if wrapper is not None:
        out = wrapper(out)
    return simplify(out) if simplified else out


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _is_positive(node: ExprNode) -> bool:
    if node.kind == CONST:
        return node.value > 0.0
    if node.kind in (EXP, SIGMOID):
        return True
    if node.kind == POW:
        return _is_positive(node.children[0])
    if node.kind in (ADD, MUL):
        return all(_is_positive(c) for c in node.children)
    return False


def _eval(node: ExprNode, env: Mapping[str, np.ndarray]):
    kind = node.kind
    if kind == CONST:
        return node.value
    if kind == SYMBOL:
        return env[node.name]
    if kind == ADD:
        total = 0.0
        for c in node.children:
            total = total + _eval(c, env)
        return total
    if kind == MUL:
        total = 1.0
        for c in node.children:
            total = total * _eval(c, env)
        return total
    if kind == POW:
        base = node.children[0]
        if _is_positive(base) and base.kind != CONST:
            return np.exp(node.value * _eval_log(base, env))
        return np.power(_eval(base, env), node.value)
    if kind == EXP:
        return np.exp(_eval(node.children[0], env))
    if kind == LOG:
        return _eval_log(node.children[0], env)
    if kind == SIGMOID:
        return expit(_eval(node.children[0], env))
    raise ValueError(f"Unknown node kind: {kind}")


def _eval_log(node: ExprNode, env: Mapping[str, np.ndarray]):
    """log(node) without forming node itself when the structure allows it."""
    if node.kind == EXP:
        return _eval(node.children[0], env)
    if node.kind == POW and _is_positive(node.children[0]):
        return node.value * _eval_log(node.children[0], env)
    if node.kind == MUL and all(_is_positive(c) for c in node.children):
        total = 0.0
        for c in node.children:
            total = total + _eval_log(c, env)
        return total
    if node.kind == ADD and len(node.children) == 2:
        c, e = node.children
        if _is_const(c) and c.value > 0.0 and e.kind == EXP:
            return np.logaddexp(math.log(c.value), _eval(e.children[0], env))
    return np.log(_eval(node, env))


def evaluate(expr: ExprNode, env: Mapping[str, float | np.ndarray]) -> np.ndarray:
    env = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    missing = expr.symbols() - set(env)
    if missing:
        raise KeyError(f"No values for symbols: {sorted(missing)}")
    with np.errstate(over="ignore"):
        out = _eval(expr, env)
    shape = np.broadcast_shapes(*(v.shape for v in env.values())) if env else ()
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------

def _finite_const(v: float) -> ExprNode | None:
    return const(v) if math.isfinite(v) else None


def _log_term(node: ExprNode) -> tuple[float, ExprNode] | None:
    """(w, X) when node is w * log(X) with X structurally positive."""
    if node.kind == LOG and _is_positive(node.children[0]):
        return 1.0, node.children[0]
    if node.kind == MUL and len(node.children) == 2:
        c, l = node.children
        if _is_const(c) and l.kind == LOG and _is_positive(l.children[0]):
            return c.value, l.children[0]
    return None


def _simplify_add(children: list[ExprNode]) -> ExprNode:
    flat: list[ExprNode] = []
    for c in children:
        flat.extend(c.children if c.kind == ADD else (c,))
    c_total = sum(c.value for c in flat if c.kind == CONST)
    terms = [c for c in flat if c.kind != CONST]

    logs = [(k, lt) for k, lt in enumerate(_log_term(t) for t in terms) if lt is not None]
    if len(logs) >= 2:
        product = _rewrite(MUL, [_rewrite(POW, [x], w) for _, (w, x) in logs])
        folded = _rewrite(LOG, [product])
        first = logs[0][0]
        skip = {k for k, _ in logs}
        terms = [folded if k == first else t for k, t in enumerate(terms) if k == first or k not in skip]

    if c_total != 0.0 or not terms:
        terms = [const(c_total)] + terms
    return terms[0] if len(terms) == 1 else ExprNode(ADD, tuple(terms))


def _simplify_mul(children: list[ExprNode]) -> ExprNode:
    flat: list[ExprNode] = []
    for c in children:
        flat.extend(c.children if c.kind == MUL else (c,))
    c_total = 1.0
    for c in flat:
        if c.kind == CONST:
            c_total *= c.value
    if c_total == 0.0:
        return const(0.0)
    others = [c for c in flat if c.kind != CONST]
    exps = [c for c in others if c.kind == EXP]
    if len(exps) >= 2:
        merged = _rewrite(EXP, [_rewrite(ADD, [e.children[0] for e in exps])])
        others = [c for c in others if c.kind != EXP] + [merged]
        if merged.kind == MUL or merged.kind == CONST:
            return _simplify_mul([const(c_total)] + others)
    factors = ([const(c_total)] if c_total != 1.0 or not others else []) + others
    return factors[0] if len(factors) == 1 else ExprNode(MUL, tuple(factors))


def _simplify_exp(child: ExprNode) -> ExprNode:
    if child.kind == CONST:
        return _finite_const(math.exp(child.value)) if child.value < 700.0 else exp(child)
    if child.kind == LOG:
        return child.children[0]
    if child.kind == ADD:
        factor, pows, rest = 1.0, [], []
        for t in child.children:
            lt = _log_term(t)
            if t.kind == CONST and t.value < 700.0:
                factor *= math.exp(t.value)
            elif lt is not None:
                pows.append(_rewrite(POW, [lt[1]], lt[0]))
            else:
                rest.append(t)
        if factor != 1.0 or pows:
            parts = [const(factor)] + pows
            if rest:
                parts.append(exp(rest[0] if len(rest) == 1 else ExprNode(ADD, tuple(rest))))
            return _simplify_mul(parts)
    lt = _log_term(child)
    if lt is not None:
        return _rewrite(POW, [lt[1]], lt[0])
    return exp(child)


def _simplify_pow(base: ExprNode, e: float) -> ExprNode:
    if e == 0.0:
        return const(1.0)
    if e == 1.0:
        return base
    if base.kind == CONST:
        if base.value > 0.0 or float(e).is_integer():
            try:
                folded = _finite_const(base.value ** e)
            except (OverflowError, ZeroDivisionError):
                folded = None
            if folded is not None:
                return folded
    if base.kind == POW and _is_positive(base.children[0]):
        return _simplify_pow(base.children[0], base.value * e)
    return power(base, e)


def _simplify_log(child: ExprNode) -> ExprNode:
    if child.kind == EXP:
        return child.children[0]
    if child.kind == CONST and child.value > 0.0:
        return const(math.log(child.value))
    return log(child)


def _rewrite(kind: str, children: list[ExprNode], value: float | None = None) -> ExprNode:
    if kind == ADD:
        return _simplify_add(children)
    if kind == MUL:
        return _simplify_mul(children)
    if kind == POW:
        return _simplify_pow(children[0], value)
    if kind == EXP:
        return _simplify_exp(children[0])
    if kind == LOG:
        return _simplify_log(children[0])
    if kind == SIGMOID:
        c = children[0]
        return const(float(expit(c.value))) if c.kind == CONST else sigmoid(c)
    raise ValueError(f"Unknown node kind: {kind}")


def simplify(expr: ExprNode) -> ExprNode:
    """Constant folding, zero-term removal and exp/log contraction; value-preserving."""
    if expr.kind in (CONST, SYMBOL):
        return expr
    return _rewrite(expr.kind, [simplify(c) for c in expr.children], expr.value)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_P_ADD, _P_MUL, _P_POW, _P_ATOM = 1, 2, 3, 4


def _number(v: float, decimals: int | None) -> str:
    if decimals is None:
        return repr(float(v))
    s = f"{v:.{decimals}f}"
    return s[1:] if s.startswith("-") and float(s) == 0.0 else s


def _negate(node: ExprNode) -> ExprNode:
    if node.kind == CONST:
        return const(-node.value)
    if node.kind == ADD:
        return ExprNode(ADD, tuple(_negate(c) for c in node.children))
    if node.kind == MUL and _is_const(node.children[0]):
        return ExprNode(MUL, (const(-node.children[0].value),) + node.children[1:])
    return ExprNode(MUL, (const(-1.0), node))


def _split_const(node: ExprNode) -> tuple[float, ExprNode | None]:
    if node.kind == CONST:
        return node.value, None
    if node.kind == ADD and _is_const(node.children[0]):
        rest = node.children[1:]
        return node.children[0].value, rest[0] if len(rest) == 1 else ExprNode(ADD, rest)
    return 0.0, node


def _join_sum(parts: list[str]) -> str:
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


def _plain(node: ExprNode, d: int | None) -> tuple[str, int]:
    kind = node.kind
    if kind == CONST:
        s = _number(node.value, d)
        return s, _P_ADD if s.startswith("-") else _P_ATOM
    if kind == SYMBOL:
        return node.name, _P_ATOM
    if kind == ADD:
        return _join_sum([_plain(c, d)[0] for c in node.children]), _P_ADD
    if kind == MUL:
        parts = []
        for k, c in enumerate(node.children):
            s, p = _plain(c, d)
            if p < _P_MUL and not (k == 0 and c.kind == CONST):
                s = f"({s})"
            parts.append(s)
        return "*".join(parts), _P_MUL
    if kind == POW:
        s, p = _plain(node.children[0], d)
        if p < _P_ATOM:
            s = f"({s})"
        e = _number(node.value, d)
        return f"{s}**({e})" if e.startswith("-") else f"{s}**{e}", _P_POW
    if kind == EXP:
        return f"exp({_plain(node.children[0], d)[0]})", _P_ATOM
    if kind == LOG:
        return f"log({_plain(node.children[0], d)[0]})", _P_ATOM
    if kind == SIGMOID:
        c, rest = _split_const(_negate(node.children[0]))
        if rest is None:
            return _number(float(expit(-c)), d), _P_ATOM
        if abs(c) > 700.0:
            return f"1/(1 + exp({_plain(_negate(node.children[0]), d)[0]}))", _P_MUL
        scale = "" if c == 0.0 else f"{_number(math.exp(c), d)}*"
        return f"1/(1 + {scale}exp({_plain(rest, d)[0]}))", _P_MUL
    raise ValueError(f"Unknown node kind: {kind}")


def _latex(node: ExprNode, d: int | None) -> tuple[str, int]:
    kind = node.kind
    if kind == CONST:
        s = _number(node.value, d)
        return s, _P_ADD if s.startswith("-") else _P_ATOM
    if kind == SYMBOL:
        name = node.name
        if len(name) > 1 and name[1:].isdigit():
            name = f"{name[0]}_{{{name[1:]}}}"
        elif name.startswith("pi") and name[2:].isdigit():
            name = f"\\pi_{{{name[2:]}}}"
        return name, _P_ATOM
    if kind == ADD:
        return _join_sum([_latex(c, d)[0] for c in node.children]), _P_ADD
    if kind == MUL:
        parts = []
        for k, c in enumerate(node.children):
            s, p = _latex(c, d)
            if p < _P_MUL and not (k == 0 and c.kind == CONST):
                s = f"\\left({s}\\right)"
            parts.append(s)
        return " \\cdot ".join(parts), _P_MUL
    if kind == POW:
        s, p = _latex(node.children[0], d)
        if p < _P_ATOM or node.children[0].kind == EXP:
            s = f"\\left({s}\\right)"
        return f"{s}^{{{_number(node.value, d)}}}", _P_POW
    if kind == EXP:
        return f"e^{{{_latex(node.children[0], d)[0]}}}", _P_POW
    if kind == LOG:
        return f"\\log\\left({_latex(node.children[0], d)[0]}\\right)", _P_ATOM
    if kind == SIGMOID:
        c, rest = _split_const(_negate(node.children[0]))
        if rest is None:
            return _number(float(expit(-c)), d), _P_ATOM
        if abs(c) > 700.0:
            return f"\\frac{{1}}{{1 + e^{{{_latex(_negate(node.children[0]), d)[0]}}}}}", _P_ATOM
        scale = "" if c == 0.0 else f"{_number(math.exp(c), d)} "
        return f"\\frac{{1}}{{1 + {scale}e^{{{_latex(rest, d)[0]}}}}}", _P_ATOM
    raise ValueError(f"Unknown node kind: {kind}")


def render(expr: ExprNode, fmt: str = "plain", decimals: int | None = 3) -> str:
    """Deterministic string form; `decimals=None` prints every constant at full precision."""
    if fmt == "plain":
        return _plain(expr, decimals)[0]
    if fmt == "latex":
        return _latex(expr, decimals)[0]
    raise ValueError(f"Unknown render format: {fmt}")


# ---------------------------------------------------------------------------
# sympy interop
# ---------------------------------------------------------------------------

def parse_plain(text: str, names: Sequence[str]) -> Callable[..., np.ndarray]:
    """Parse a plain rendering back with sympy and return a numpy callable of `names`."""
    syms = sympy.symbols(list(names))
    local = dict(zip(names, syms))
    parsed = parse_expr(text, local_dict=local)
    return sympy.lambdify(syms, parsed, modules="numpy")


def to_sympy(expr: ExprNode):
    kind = expr.kind
    if kind == CONST:
        return sympy.Float(expr.value)
    if kind == SYMBOL:
        return sympy.Symbol(expr.name)
    args = [to_sympy(c) for c in expr.children]
    if kind == ADD:
        return sympy.Add(*args)
    if kind == MUL:
        return sympy.Mul(*args)
    if kind == POW:
        return sympy.Pow(args[0], sympy.Float(expr.value))
    if kind == EXP:
        return sympy.exp(args[0])
    if kind == LOG:
        return sympy.log(args[0])
    if kind == SIGMOID:
        return 1 / (1 + sympy.exp(-args[0]))
    raise ValueError(f"Unknown node kind: {kind}")


def display_deviation(expr: ExprNode, env: Mapping[str, np.ndarray], decimals: int = 3) -> float:
    """Largest relative gap between the rounded display form and the full-precision tree."""
    names = sorted(expr.symbols())
    exact = evaluate(expr, env)
    rounded = parse_plain(render(expr, "plain", decimals), names)
    with np.errstate(over="ignore", invalid="ignore"):
        approx = np.broadcast_to(np.asarray(rounded(*(np.asarray(env[n], dtype=float) for n in names)),
                                            dtype=float), exact.shape)
    scale = max(float(np.max(np.abs(exact))), 1e-12)
    return float(np.max(np.abs(approx - exact)) / scale)


def parse_back_error(expr: ExprNode, env: Mapping[str, np.ndarray]) -> float:
    """Largest absolute gap between the tree and its full-precision plain rendering parsed by sympy."""
    names = sorted(expr.symbols())
    exact = evaluate(expr, env)
    parsed = parse_plain(render(expr, "plain", None), names)
    with np.errstate(over="ignore", invalid="ignore"):
        values = np.broadcast_to(np.asarray(parsed(*(np.asarray(env[n], dtype=float) for n in names)),
                                            dtype=float), exact.shape)
    return float(np.max(np.abs(values - exact)))
