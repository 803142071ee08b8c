"""Stencil intermediate representation.

``classify`` turns restricted-C source into a ``StencilSpec``: tap offsets
(streaming dimension first, i.e. loop order), radius, shape class, the
associativity and diagonal-access flags that drive code generation, and the
per-cell floating-point operation mix.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PatternRejected, UnsupportedOperator, ZeroOps
from .frontend import (Access, BinOp, Call, Name, Neg, Num, eval_const, format_expr,
                       parse, validate_pattern, walk)


@dataclass(frozen=True)
class FlopMap:
    fma: int = 0
    mul: int = 0
    add: int = 0
    other: int = 0

    @property
    def flops_per_cell(self):
        return 2 * self.fma + self.mul + self.add + self.other

    @property
    def instructions(self):
        return self.fma + self.mul + self.add + self.other

    def __add__(self, o):
        return FlopMap(self.fma + o.fma, self.mul + o.mul, self.add + o.add, self.other + o.other)

    def as_dict(self):
        return {"fma": self.fma, "mul": self.mul, "add": self.add, "other": self.other,
                "flops_per_cell": self.flops_per_cell}


def eff_alu(fm):
    """Fraction of peak reachable with this instruction mix (FMA counts double)."""
    if fm.instructions == 0:
        raise ZeroOps("stencil performs no floating-point operations")
    return fm.flops_per_cell / (2 * fm.instructions)


@dataclass(frozen=True)
class Tap:
    offset: tuple
    coefficient: Fraction | None  # None when the update is not a linear combination


@dataclass(frozen=True)
class LinearForm:
    """update = (sum of coef * A[offset]) / divisor, terms in source order."""

    terms: tuple       # ((coef Fraction, offset tuple), ...)
    divisor: Fraction | None


@dataclass(frozen=True)
class StencilSpec:
    name: str
    dims: int
    radius: int
    shape: str                 # "star" | "box" | "general"
    taps: tuple
    update: object = field(repr=False)   # expression AST
    constants: tuple = ()     # ((name, Fraction), ...)
    associative: bool = False
    diagonal_free: bool = False
    linear: LinearForm | None = field(default=None, repr=False)
    flops: FlopMap = FlopMap()
    word_size: int = 4
    array: str = "A"
    time_var: str = "t"
    loop_vars: tuple = ()
    source: str = field(default="", repr=False)

    @property
    def dtype(self):
        return "float" if self.word_size == 4 else "double"

    @property
    def env(self):
        return dict(self.constants)

    def with_flop_map(self, fm):
        return dataclasses.replace(self, flops=fm)

    def with_word_size(self, word_size):
        return dataclasses.replace(self, word_size=word_size)

    def to_dict(self):
        d = {
            "name": self.name,
            "dims": self.dims,
            "radius": self.radius,
            "shape": self.shape,
            "associative": self.associative,
            "diagonal_free": self.diagonal_free,
            "word_size": self.word_size,
            "array": self.array,
            "time_var": self.time_var,
            "loop_vars": list(self.loop_vars),
            "taps": [{"offset": list(t.offset),
                      "coefficient": None if t.coefficient is None else str(t.coefficient)}
                     for t in self.taps],
            "update": format_expr(self.update),
            "constants": {k: str(v) for k, v in self.constants},
            "flops": self.flops.as_dict(),
            "source": self.source,
        }
        d["digest"] = digest(d)
        return d

    @classmethod
    def from_dict(cls, d):
        spec = classify(d["source"], origin=d.get("name", "<input>"), word_size=d["word_size"])
        f = d["flops"]
        spec = spec.with_flop_map(FlopMap(f["fma"], f["mul"], f["add"], f["other"]))
        return dataclasses.replace(spec, name=d["name"])


def digest(d):
    body = {k: v for k, v in d.items() if k != "digest"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ------------------------------------------------------------ classification


def _shape(offsets, dims, rad):
    offs = set(offsets)
    if all(sum(1 for x in o if x) <= 1 for o in offs):
        return "star"
    if len(offs) == (2 * rad + 1) ** dims:
        return "box"
    return "general"


def _is_const(e, env):
    try:
        eval_const(e, env)
        return True
    except (KeyError, ValueError, ZeroDivisionError):
        return False


def _linear_terms(e, env, offs):
    """List of (coef, offset) if ``e`` is a signed sum of taps, else None."""
    if isinstance(e, Access):
        return [(Fraction(1), offs[id(e)])]
    if isinstance(e, Neg):
        inner = _linear_terms(e.operand, env, offs)
        return None if inner is None else [(-c, o) for c, o in inner]
    if isinstance(e, BinOp) and e.op in "+-":
        a = _linear_terms(e.left, env, offs)
        b = _linear_terms(e.right, env, offs)
        if a is None or b is None:
            return None
        if e.op == "-":
            b = [(-c, o) for c, o in b]
        return a + b
    if isinstance(e, BinOp) and e.op == "*":
        for k, other in ((e.left, e.right), (e.right, e.left)):
            if _is_const(k, env) and isinstance(other, Access):
                return [(eval_const(k, env), offs[id(other)])]
    return None


def linear_form(expr, env, offs):
    """Detect ``sum(c_k * A[off_k]) [/ divisor]``; None for anything else."""
    divisor = None
    body = expr
    if isinstance(expr, BinOp) and expr.op == "/" and _is_const(expr.right, env):
        divisor = eval_const(expr.right, env)
        body = expr.left
    terms = _linear_terms(body, env, offs)
    if terms is None:
        return None
    return LinearForm(tuple(terms), divisor)


_FUNCS = {"sqrt"}


def count_flops(expr, env, fast_math=True):
    """Operation mix of one cell update.

    A product feeding an addition is fused into one FMA; operations on
    compile-time constants are folded away; a division by a constant costs
    one MUL under fast-math; reciprocal and sqrt cost one OTHER each.
    """
    if _is_const(expr, env) or isinstance(expr, (Access, Name, Num)):
        return FlopMap()
    if isinstance(expr, Neg):
        return count_flops(expr.operand, env, fast_math)
    if isinstance(expr, Call):
        if expr.func not in _FUNCS or len(expr.args) != 1:
            raise UnsupportedOperator(f"function '{expr.func}' is not supported")
        return FlopMap(other=1) + count_flops(expr.args[0], env, fast_math)
    if not isinstance(expr, BinOp):
        raise UnsupportedOperator(f"unsupported expression {format_expr(expr)}")
    sub = lambda e: count_flops(e, env, fast_math)
    l, r = expr.left, expr.right
    if expr.op in "+-":
        for prod, other in ((r, l), (l, r)):
            if isinstance(prod, BinOp) and prod.op == "*" and not _is_const(prod, env):
                return FlopMap(fma=1) + sub(prod.left) + sub(prod.right) + sub(other)
        return FlopMap(add=1) + sub(l) + sub(r)
    if expr.op == "*":
        return FlopMap(mul=1) + sub(l) + sub(r)
    if expr.op == "/":
        if _is_const(l, env) and eval_const(l, env) == 1:
            return FlopMap(other=1) + sub(r)
        if _is_const(r, env):
            return (FlopMap(mul=1) if fast_math else FlopMap(other=1)) + sub(l)
        # x / y: reciprocal then multiply under fast-math
        return (FlopMap(mul=1, other=1) if fast_math else FlopMap(other=1)) + sub(l) + sub(r)
    raise UnsupportedOperator(f"operator '{expr.op}' is not supported in the update expression")


def classify(src, origin="<input>", word_size=None, fast_math=True):
    """Parse, validate and classify restricted-C source."""
    ast = parse(src, origin)
    pat = validate_pattern(ast)
    env = pat.consts
    offs = {id(a): o for a, o in pat.reads}
    dims = len(pat.spatial_vars)

    seen = {}
    for _, o in pat.reads:
        seen.setdefault(o, None)
    distinct = list(seen)
    rad = max((max(abs(x) for x in o) for o in distinct), default=0)
    if rad == 0:
        raise PatternRejected(1, "the update reads only the centre cell; a stencil needs radius >= 1")

    lin = linear_form(ast.stmt.value, env, offs)
    if lin is not None:
        coef = {}
        for c, o in lin.terms:
            coef[o] = coef.get(o, Fraction(0)) + c
        taps = tuple(Tap(o, coef[o]) for o in distinct)
    else:
        taps = tuple(Tap(o, None) for o in distinct)

    if word_size is None:
        word_size = 8 if pat.dtype == "double" else 4
    name = origin[len("builtin:"):] if origin.startswith("builtin:") else origin
    return StencilSpec(
        name=name,
        dims=dims,
        radius=rad,
        shape=_shape(distinct, dims, rad),
        taps=taps,
        update=ast.stmt.value,
        constants=tuple(env.items()),
        associative=lin is not None,
        diagonal_free=all(not any(o[1:]) for o in distinct if o[0] != 0),
        linear=lin,
        flops=count_flops(ast.stmt.value, env, fast_math),
        word_size=word_size,
        array=pat.array,
        time_var=pat.time_var,
        loop_vars=pat.spatial_vars,
        source=src,
    )


def used_functions(expr):
    return {n.func for n in walk(expr) if isinstance(n, Call)}
