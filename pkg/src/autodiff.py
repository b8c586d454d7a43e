"""Scalar reverse-mode automatic differentiation.

A `Tape` records every scalar operation in evaluation order. `gradient` sweeps it
backwards; with `create_graph=True` the sweep is itself recorded as operations on
the same tape, so the returned adjoints can be differentiated once more. This is
what lets a training loss be built from stresses that are input-gradients of a
network potential.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

from src.errors import NonFiniteValue, TapeMismatch

LEAF = "leaf"
ADD = "add"
MUL = "mul"
NEG = "neg"
RECIP = "recip"
EXP = "exp"
LN = "ln"
POW = "pow-const"
SIGMOID = "sigmoid"
SOFTPLUS = "softplus"
MAX_CONST = "max-const"
MIN_CONST = "min-const"

OP_KINDS = (ADD, MUL, NEG, RECIP, EXP, LN, POW, SIGMOID, SOFTPLUS, MAX_CONST, MIN_CONST)


def stable_sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def stable_softplus(x: float) -> float:
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def _forward(kind: str, args: Sequence[float], const: float | None) -> float:
    if kind == ADD:
        return args[0] + args[1]
    if kind == MUL:
        return args[0] * args[1]
    if kind == NEG:
        return -args[0]
    if kind == RECIP:
        return 1.0 / args[0]
    if kind == EXP:
        return math.exp(args[0])
    if kind == LN:
        return math.log(args[0])
    if kind == POW:
        return math.pow(args[0], const)
    if kind == SIGMOID:
        return stable_sigmoid(args[0])
    if kind == SOFTPLUS:
        return stable_softplus(args[0])
    if kind == MAX_CONST:
        return max(args[0], const)
    if kind == MIN_CONST:
        return min(args[0], const)
    raise ValueError(f"Unknown op kind: {kind}")


class Tape:
    """Append-only list of scalar nodes; parents always precede children."""

    __slots__ = ("values", "kinds", "parents", "consts")

    def __init__(self):
        self.values: list[float] = []
        self.kinds: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.consts: list[float | None] = []

    def __len__(self) -> int:
        return len(self.values)

    def _append(self, kind: str, parents: tuple[int, ...], value: float, const: float | None) -> Var:
        idx = len(self.values)
        self.values.append(value)
        self.kinds.append(kind)
        self.parents.append(parents)
        self.consts.append(const)
        return Var(self, idx, value)

    def variable(self, value: float) -> Var:
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteValue(LEAF, value)
        return self._append(LEAF, (), value, None)

    # Constants are leaves nobody differentiates with respect to.
    constant = variable

    def record(self, kind: str, inputs: Sequence[Var], const: float | None = None) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise TapeMismatch(f"Operand of '{kind}' belongs to a different tape")
        try:
            value = _forward(kind, [v.value for v in inputs], const)
        except (ValueError, OverflowError, ZeroDivisionError):
            raise NonFiniteValue(kind) from None
        if not math.isfinite(value):
            raise NonFiniteValue(kind, value)
        return self._append(kind, tuple(v.idx for v in inputs), value, const)

    def var_at(self, idx: int) -> Var:
        return Var(self, idx, self.values[idx])


class Var:
    __slots__ = ("tape", "idx", "value")
    # Let numpy scalars defer to our reflected operators.
    __array_ufunc__ = None

    def __init__(self, tape: Tape, idx: int, value: float):
        self.tape = tape
        self.idx = idx
        self.value = value

    def _lift(self, other) -> Var:
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise TapeMismatch("Vars from different tapes cannot be combined")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape.record(ADD, (self, self._lift(other)))

    def __radd__(self, other):
        return self.tape.record(ADD, (self._lift(other), self))

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        return self.tape.record(MUL, (self, self._lift(other)))

    def __rmul__(self, other):
        return self.tape.record(MUL, (self._lift(other), self))

    def __truediv__(self, other):
        return self * reciprocal(self._lift(other))

    def __rtruediv__(self, other):
        return self._lift(other) * reciprocal(self)

    def __neg__(self):
        return self.tape.record(NEG, (self,))

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("Only constant exponents are supported")
        return power(self, float(exponent))

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"Var({self.value!r}, idx={self.idx})"


def reciprocal(x: Var) -> Var:
    return x.tape.record(RECIP, (x,))


def exp(x: Var) -> Var:
    return x.tape.record(EXP, (x,))


def log(x: Var) -> Var:
    return x.tape.record(LN, (x,))


def power(x: Var, p: float) -> Var:
    return x.tape.record(POW, (x,), float(p))


def sigmoid(x: Var) -> Var:
    return x.tape.record(SIGMOID, (x,))


def softplus(x: Var) -> Var:
    return x.tape.record(SOFTPLUS, (x,))


def maximum(x: Var, c: float) -> Var:
    return x.tape.record(MAX_CONST, (x,), float(c))


def minimum(x: Var, c: float) -> Var:
    return x.tape.record(MIN_CONST, (x,), float(c))


def vsum(terms: Iterable[Var | float], start: Var | float = 0.0) -> Var | float:
    total = start
    for t in terms:
        total = total + t
    return total


def _check_same_tape(output: Var, wrt: Sequence[Var]) -> Tape:
    tape = output.tape
    for w in wrt:
        if w.tape is not tape:
            raise TapeMismatch("gradient() arguments must share the output's tape")
    return tape


def gradient(output: Var, wrt: Sequence[Var], create_graph: bool = False) -> list:
    """d output / d wrt_i.

    Returns floats, or Vars recorded on the tape when `create_graph` is set.
    Only nodes between the earliest `wrt` node and `output` are swept, so the
    cost is local to the sub-graph that produced `output`.
    """
    tape = _check_same_tape(output, wrt)
    if not wrt:
        return []
    lo = min(w.idx for w in wrt)
    if output.idx < lo:
        return [tape.constant(0.0) for _ in wrt] if create_graph else [0.0] * len(wrt)
    if create_graph:
        return _backward_graph(tape, output, wrt, lo)
    return _backward_float(tape, output, wrt, lo)


def _backward_float(tape: Tape, output: Var, wrt: Sequence[Var], lo: int) -> list[float]:
    values, kinds, parents, consts = tape.values, tape.kinds, tape.parents, tape.consts
    hi = output.idx
    adj = [0.0] * (hi - lo + 1)
    adj[hi - lo] = 1.0
    for i in range(hi, lo - 1, -1):
        g = adj[i - lo]
        if g == 0.0:
            continue
        kind = kinds[i]
        if kind == LEAF:
            continue
        ps = parents[i]
        if kind == ADD:
            for p in ps:
                if p >= lo:
                    adj[p - lo] += g
        elif kind == MUL:
            a, b = ps
            if a >= lo:
                adj[a - lo] += g * values[b]
            if b >= lo:
                adj[b - lo] += g * values[a]
        else:
            p = ps[0]
            if p < lo:
                continue
            x = values[p]
            out = values[i]
            if kind == NEG:
                d = -1.0
            elif kind == RECIP:
                d = -out * out
            elif kind == EXP:
                d = out
            elif kind == LN:
                d = 1.0 / x
            elif kind == POW:
                try:
                    d = consts[i] * math.pow(x, consts[i] - 1.0)
                except (ValueError, OverflowError, ZeroDivisionError):
                    raise NonFiniteValue(POW) from None
                if not math.isfinite(d):
                    raise NonFiniteValue(POW, d)
            elif kind == SIGMOID:
                d = out * (1.0 - out)
            elif kind == SOFTPLUS:
                d = stable_sigmoid(x)
            elif kind == MAX_CONST:
                d = 1.0 if x > consts[i] else 0.0
            elif kind == MIN_CONST:
                d = 1.0 if x < consts[i] else 0.0
            else:
                raise ValueError(f"Unknown op kind: {kind}")
            adj[p - lo] += g * d
    return [adj[w.idx - lo] for w in wrt]


def _backward_graph(tape: Tape, output: Var, wrt: Sequence[Var], lo: int) -> list[Var]:
    kinds, parents, consts = tape.kinds, tape.parents, tape.consts
    hi = output.idx
    n = hi - lo + 1

    depends = bytearray(n)
    for w in wrt:
        depends[w.idx - lo] = 1
    for i in range(lo, hi + 1):
        if depends[i - lo] or kinds[i] == LEAF:
            continue
        for p in parents[i]:
            if p >= lo and depends[p - lo]:
                depends[i - lo] = 1
                break

    adj: list[Var | None] = [None] * n
    if depends[n - 1]:
        adj[n - 1] = tape.constant(1.0)

    def accumulate(p: int, contribution: Var):
        current = adj[p - lo]
        adj[p - lo] = contribution if current is None else current + contribution

    for i in range(hi, lo - 1, -1):
        a = adj[i - lo]
        if a is None:
            continue
        kind = kinds[i]
        if kind == LEAF:
            continue
        ps = parents[i]
        if kind == ADD:
            for p in ps:
                if p >= lo and depends[p - lo]:
                    accumulate(p, a)
        elif kind == MUL:
            x_idx, y_idx = ps
            if x_idx >= lo and depends[x_idx - lo]:
                accumulate(x_idx, a * tape.var_at(y_idx))
            if y_idx >= lo and depends[y_idx - lo]:
                accumulate(y_idx, a * tape.var_at(x_idx))
        else:
            p = ps[0]
            if p < lo or not depends[p - lo]:
                continue
            x = tape.var_at(p)
            out = tape.var_at(i)
            if kind == NEG:
                accumulate(p, -a)
            elif kind == RECIP:
                accumulate(p, -((a * out) * out))
            elif kind == EXP:
                accumulate(p, a * out)
            elif kind == LN:
                accumulate(p, a * reciprocal(x))
            elif kind == POW:
                accumulate(p, a * (power(x, consts[i] - 1.0) * consts[i]))
            elif kind == SIGMOID:
                accumulate(p, a * (out - out * out))
            elif kind == SOFTPLUS:
                accumulate(p, a * sigmoid(x))
            elif kind == MAX_CONST:
                if x.value > consts[i]:
                    accumulate(p, a)
            elif kind == MIN_CONST:
                if x.value < consts[i]:
                    accumulate(p, a)
            else:
                raise ValueError(f"Unknown op kind: {kind}")

    return [adj[w.idx - lo] if adj[w.idx - lo] is not None else tape.constant(0.0) for w in wrt]


def gradient_of_gradient(output: Var, inner: Var, outer: Sequence[Var]) -> list[float]:
    """d(d output / d inner) / d outer_i."""
    inner_grad = gradient(output, [inner], create_graph=True)[0]
    return gradient(inner_grad, outer)
