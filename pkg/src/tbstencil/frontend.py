"""Parser for the restricted C stencil grammar.

Accepted input: optional ``const`` scalar definitions and array declarations,
then one perfectly nested loop nest (time loop outermost) whose body is a
single assignment into a double-buffered array::

    const float c0 = 0.25f;
    for (int t = 0; t < T; t++)
      for (int i = 1; i < N - 1; i++)
        for (int j = 1; j < M - 1; j++)
          A[(t+1)%2][i][j] = c0 * (A[t%2][i-1][j] + A[t%2][i+1][j]
                                   + A[t%2][i][j-1] + A[t%2][i][j+1]);

``parse`` builds the AST, ``validate_pattern`` checks the three pattern rules
and extracts the per-access offsets, ``format_source`` prints an AST back.
"""

import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import PatternRejected, StencilSyntaxError, UnsupportedConstruct

# a 729-tap box stencil is a left-folded chain of that many additions, and
# every tree walk here (and dataclass equality) recurses along it
if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)

# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    text: str
    pos: tuple = field(default=(0, 0), compare=False, repr=False)

    @property
    def value(self):
        return Fraction(self.text.rstrip("fF"))

    @property
    def is_float(self):
        t = self.text.lower()
        return "." in t or "e" in t or t.endswith("f")


@dataclass(frozen=True)
class Name:
    id: str
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Access:
    array: str
    index: tuple
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class ConstDef:
    ctype: str
    name: str
    value: object
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class ArrayDecl:
    ctype: str
    name: str
    dims: tuple
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Loop:
    var: str
    decl_type: str | None
    lower: object
    upper: object
    inclusive: bool
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Assign:
    target: Access
    value: object
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class StencilAst:
    decls: tuple
    loops: tuple
    stmt: Assign
    origin: str = field(default="<input>", compare=False)


def walk(expr, subscripts=True):
    """Yield every node of an expression tree, parents first.

    With ``subscripts=False`` the index expressions of accesses are skipped.
    """
    yield expr
    if isinstance(expr, BinOp):
        yield from walk(expr.left, subscripts)
        yield from walk(expr.right, subscripts)
    elif isinstance(expr, Neg):
        yield from walk(expr.operand, subscripts)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from walk(a, subscripts)
    elif isinstance(expr, Access) and subscripts:
        for a in expr.index:
            yield from walk(a, subscripts)


# ------------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<pp>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?[fF]?)
  | (?P<id>[A-Za-z_]\w*)
  | (?P<op>\+\+|--|\+=|-=|\*=|/=|<=|>=|==|!=|&&|\|\||[-+*/%<>=()\[\]{};,!?:&|.])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {"for", "const", "float", "double", "int", "if", "else", "while", "do", "return"}
_TYPES = ("float", "double", "int")


@dataclass
class _Tok:
    kind: str  # num, id, kw, op, eof
    text: str
    line: int
    col: int


def tokenize(src, origin="<input>"):
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise StencilSyntaxError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1, origin)
        kind = m.lastgroup
        text = m.group()
        if kind in ("num", "id", "op"):
            if kind == "id" and text in _KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# ------------------------------------------------------------------ parser


class _Parser:
    def __init__(self, src, origin):
        self.origin = origin
        self.toks = tokenize(src, origin)
        self.i = 0

    # helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None, cls=StencilSyntaxError):
        tok = tok or self.tok
        return cls(msg, tok.line, tok.col, self.origin)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def expect(self, text):
        if not self.at(text):
            got = self.tok.text or "end of input"
            raise self.error(f"expected '{text}' but found '{got}'")
        t = self.tok
        self.i += 1
        return t

    def ident(self):
        if self.tok.kind != "id":
            got = self.tok.text or "end of input"
            raise self.error(f"expected identifier but found '{got}'")
        t = self.tok
        self.i += 1
        return t

    # top level
    def program(self):
        decls = []
        while self.at("const") or (self.tok.kind == "kw" and self.tok.text in _TYPES):
            decls.append(self.declaration())
        if not self.at("for"):
            if self.tok.kind == "eof":
                raise self.error("expected a loop nest")
            if self.tok.kind == "kw" and self.tok.text in ("if", "while", "do", "return"):
                raise self.error(f"'{self.tok.text}' is not supported", cls=UnsupportedConstruct)
            raise self.error(f"expected 'for' but found '{self.tok.text}'")
        loops, stmt = self.loop_nest()
        if self.tok.kind != "eof":
            raise self.error(
                "only one loop nest is supported; found trailing code", cls=UnsupportedConstruct
            )
        return StencilAst(tuple(decls), tuple(loops), stmt, self.origin)

    def declaration(self):
        start = self.tok
        is_const = False
        if self.at("const"):
            is_const = True
            self.i += 1
        if not (self.tok.kind == "kw" and self.tok.text in _TYPES):
            raise self.error("expected a type (float, double or int)")
        ctype = self.tok.text
        self.i += 1
        name = self.ident().text
        if self.at("["):
            if is_const:
                raise self.error("const arrays are not supported", cls=UnsupportedConstruct)
            dims = []
            while self.at("["):
                self.i += 1
                dims.append(self.expr())
                self.expect("]")
            self.expect(";")
            return ArrayDecl(ctype, name, tuple(dims), (start.line, start.col))
        if not is_const:
            raise self.error(
                f"scalar '{name}' must be declared const with a literal value", start, UnsupportedConstruct
            )
        self.expect("=")
        value = self.expr()
        self.expect(";")
        return ConstDef(ctype, name, value, (start.line, start.col))

    def loop_nest(self):
        loops = [self.loop_header()]
        while True:
            if self.at("{"):
                brace = self.expect("{")
                items = []
                while not self.at("}"):
                    if self.tok.kind == "eof":
                        raise self.error("unterminated '{'", brace)
                    items.append(self.item())
                self.expect("}")
                if not items:
                    raise self.error("empty loop body", brace, UnsupportedConstruct)
                if len(items) > 1:
                    if any(isinstance(it, tuple) for it in items):
                        raise self.error("imperfect loop nest: a loop shares its body with other code",
                                         brace, UnsupportedConstruct)
                    raise self.error("multiple statements in the loop body; only one update is supported",
                                     brace, UnsupportedConstruct)
                only = items[0]
                if isinstance(only, tuple):
                    inner_loops, stmt = only
                    return loops + inner_loops, stmt
                return loops, only
            if self.at("for"):
                loops.append(self.loop_header())
                continue
            return loops, self.statement()

    def item(self):
        if self.at("for"):
            return self.loop_nest()
        return self.statement()

    def loop_header(self):
        start = self.expect("for")
        self.expect("(")
        decl_type = None
        if self.tok.kind == "kw" and self.tok.text in _TYPES:
            decl_type = self.tok.text
            self.i += 1
        var = self.ident().text
        self.expect("=")
        lower = self.expr()
        self.expect(";")
        cvar = self.ident()
        if cvar.text != var:
            raise self.error(f"loop condition tests '{cvar.text}' instead of '{var}'", cvar, UnsupportedConstruct)
        if self.at("<"):
            inclusive = False
        elif self.at("<="):
            inclusive = True
        else:
            raise self.error("loop condition must use '<' or '<='", cls=UnsupportedConstruct)
        self.i += 1
        upper = self.expr()
        self.expect(";")
        self.increment(var)
        self.expect(")")
        return Loop(var, decl_type, lower, upper, inclusive, (start.line, start.col))

    def increment(self, var):
        t = self.tok
        bad = UnsupportedConstruct("loop increment must be a unit step", t.line, t.col, self.origin)
        if self.at("++"):
            self.i += 1
            if self.ident().text != var:
                raise bad
            return
        if self.ident().text != var:
            raise bad
        if self.at("++"):
            self.i += 1
        elif self.at("+="):
            self.i += 1
            n = self.tok
            if n.kind != "num" or n.text != "1":
                raise bad
            self.i += 1
        elif self.at("="):
            self.i += 1
            e = self.expr()
            ok = (isinstance(e, BinOp) and e.op == "+" and
                  {type(e.left), type(e.right)} == {Name, Num} and
                  any(isinstance(x, Name) and x.id == var for x in (e.left, e.right)) and
                  any(isinstance(x, Num) and x.text == "1" for x in (e.left, e.right)))
            if not ok:
                raise bad
        else:
            raise bad

    def statement(self):
        start = self.tok
        if self.tok.kind == "kw":
            raise self.error(f"'{self.tok.text}' is not supported inside the loop nest", cls=UnsupportedConstruct)
        name = self.ident()
        if not self.at("["):
            raise self.error("the update must assign to an array element", name, UnsupportedConstruct)
        target = self.access(name)
        if self.tok.text in ("+=", "-=", "*=", "/="):
            raise self.error("compound assignment is not supported", cls=UnsupportedConstruct)
        self.expect("=")
        value = self.expr()
        self.expect(";")
        return Assign(target, value, (start.line, start.col))

    def access(self, name_tok):
        idx = []
        while self.at("["):
            self.i += 1
            idx.append(self.expr())
            self.expect("]")
        return Access(name_tok.text, tuple(idx), (name_tok.line, name_tok.col))

    # expressions, usual C precedence for the subset
    def expr(self):
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            t = self.tok
            self.i += 1
            left = BinOp(t.text, left, self.term(), (t.line, t.col))
        return left

    def term(self):
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/", "%"):
            t = self.tok
            self.i += 1
            left = BinOp(t.text, left, self.unary(), (t.line, t.col))
        return left

    def unary(self):
        t = self.tok
        if self.at("-"):
            self.i += 1
            return Neg(self.unary(), (t.line, t.col))
        if self.at("+"):
            self.i += 1
            return self.unary()
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(t.text, (t.line, t.col))
        if t.kind == "id":
            self.i += 1
            if self.at("["):
                return self.access(t)
            if self.at("("):
                self.i += 1
                args = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.i += 1
                        args.append(self.expr())
                self.expect(")")
                return Call(t.text, tuple(args), (t.line, t.col))
            return Name(t.text, (t.line, t.col))
        if self.at("("):
            if self.peek().kind == "kw" and self.peek().text in _TYPES:
                raise self.error("casts are not supported", cls=UnsupportedConstruct)
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "eof":
            raise self.error("unexpected end of input")
        if t.kind == "op" and t.text in ("?", "&&", "||", "==", "!=", "!", ">", ">=", "&", "|"):
            raise self.error(f"operator '{t.text}' is not supported", cls=UnsupportedConstruct)
        raise self.error(f"unexpected token '{t.text}'")


def parse(src, origin="<input>"):
    """Parse restricted-C text into a ``StencilAst``."""
    return _Parser(src, origin).program()


# --------------------------------------------------------- pretty printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 4


def format_expr(e):
    if isinstance(e, Num):
        return e.text
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Access):
        return e.array + "".join(f"[{format_expr(i)}]" for i in e.index)
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        # "- -x" would lex as the decrement operator
        if _prec(e.operand) < 3 or inner.startswith("-"):
            inner = f"({inner})"
        return "-" + inner
    p = _PREC[e.op]
    left = format_expr(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = format_expr(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def format_source(ast):
    lines = []
    for d in ast.decls:
        if isinstance(d, ConstDef):
            lines.append(f"const {d.ctype} {d.name} = {format_expr(d.value)};")
        else:
            dims = "".join(f"[{format_expr(x)}]" for x in d.dims)
            lines.append(f"{d.ctype} {d.name}{dims};")
    for depth, lp in enumerate(ast.loops):
        ind = "  " * depth
        ty = f"{lp.decl_type} " if lp.decl_type else ""
        cmp = "<=" if lp.inclusive else "<"
        lines.append(f"{ind}for ({ty}{lp.var} = {format_expr(lp.lower)}; "
                     f"{lp.var} {cmp} {format_expr(lp.upper)}; {lp.var}++)")
    ind = "  " * len(ast.loops)
    lines.append(f"{ind}{format_expr(ast.stmt.target)} = {format_expr(ast.stmt.value)};")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------ pattern validation


@dataclass(frozen=True)
class Pattern:
    """What the IR builder needs from a validated nest."""

    array: str
    time_var: str
    spatial_vars: tuple
    reads: tuple          # (Access, offset tuple) in source order
    consts: dict          # name -> Fraction
    const_types: dict     # name -> ctype
    dtype: str | None     # element type from an array declaration
    ast: StencilAst


class _NonAffine(Exception):
    pass


def _affine(e, consts):
    """Return ({symbol: coef}, const) for an affine integer expression."""
    if isinstance(e, Num):
        if e.is_float:
            raise _NonAffine("floating literal in subscript")
        return {}, int(e.text)
    if isinstance(e, Name):
        if e.id in consts:
            v = consts[e.id]
            if v.denominator != 1:
                raise _NonAffine("non-integer constant in subscript")
            return {}, int(v)
        return {e.id: 1}, 0
    if isinstance(e, Neg):
        c, k = _affine(e.operand, consts)
        return {s: -v for s, v in c.items()}, -k
    if isinstance(e, BinOp) and e.op in "+-":
        c1, k1 = _affine(e.left, consts)
        c2, k2 = _affine(e.right, consts)
        sgn = 1 if e.op == "+" else -1
        out = dict(c1)
        for s, v in c2.items():
            out[s] = out.get(s, 0) + sgn * v
        return {s: v for s, v in out.items() if v}, k1 + sgn * k2
    if isinstance(e, BinOp) and e.op == "*":
        c1, k1 = _affine(e.left, consts)
        c2, k2 = _affine(e.right, consts)
        if c1 and c2:
            raise _NonAffine("product of symbols")
        if c1:
            return {s: v * k2 for s, v in c1.items() if v * k2}, k1 * k2
        return {s: v * k1 for s, v in c2.items() if v * k1}, k1 * k2
    raise _NonAffine("non-affine subscript")


def _time_shift(e, tvar):
    """0 for ``t%2``, 1 for ``(t+1)%2``, None otherwise."""
    if not (isinstance(e, BinOp) and e.op == "%" and isinstance(e.right, Num) and e.right.text == "2"):
        return None
    try:
        c, k = _affine(e.left, {})
    except _NonAffine:
        return None
    if c != {tvar: 1} or k not in (0, 1):
        return None
    return k


def eval_const(e, consts):
    """Evaluate a constant expression exactly, or raise KeyError/ValueError."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Name):
        return consts[e.id]
    if isinstance(e, Neg):
        return -eval_const(e.operand, consts)
    if isinstance(e, BinOp):
        a, b = eval_const(e.left, consts), eval_const(e.right, consts)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
    raise ValueError("not a constant expression")


def validate_pattern(ast):
    """Check the three pattern rules and return a ``Pattern``.

    Raises ``PatternRejected`` naming the violated rule.
    """
    consts, ctypes, dtype = {}, {}, None
    for d in ast.decls:
        if isinstance(d, ConstDef):
            try:
                consts[d.name] = eval_const(d.value, consts)
            except (KeyError, ValueError, ZeroDivisionError):
                raise PatternRejected(1, f"constant '{d.name}' is not a compile-time value")
            ctypes[d.name] = d.ctype
        else:
            dtype = d.ctype

    stmt = ast.stmt
    tgt = stmt.target
    if len(ast.loops) < 2:
        raise PatternRejected(2, "need a time loop plus one loop per spatial dimension")

    # the time loop is the variable used in the destination's %2 subscript
    tvar = None
    if tgt.index:
        for lp in ast.loops:
            if _time_shift(tgt.index[0], lp.var) is not None:
                tvar = lp.var
                break
    if tvar is None:
        raise PatternRejected(3, "destination's first subscript must be (t+1)%2 of the time loop")
    if ast.loops[0].var != tvar:
        raise PatternRejected(3, f"time loop '{tvar}' must be the outermost loop")
    if _time_shift(tgt.index[0], tvar) != 1:
        raise PatternRejected(3, "destination must write the (t+1)%2 buffer")

    spatial = tuple(lp.var for lp in ast.loops[1:])
    n = len(spatial)
    if n not in (2, 3):
        raise PatternRejected(2, f"{n} spatial loops; only 2D and 3D stencils are supported")
    loopvars = set(spatial) | {tvar}

    def offsets(acc, role):
        if len(acc.index) != n + 1:
            raise PatternRejected(
                2, f"{role} '{acc.array}' has {len(acc.index)} subscripts; expected {n + 1} "
                   f"(time buffer plus one per spatial loop)")
        out = []
        for k, sub in enumerate(acc.index[1:]):
            try:
                coef, const = _affine(sub, consts)
            except _NonAffine as exc:
                used = {x.id for x in walk(sub) if isinstance(x, Name)}
                if used & loopvars:
                    raise PatternRejected(2, f"subscript {k + 1} of '{acc.array}' is linearized or non-unit ({exc})")
                raise PatternRejected(1, f"subscript {k + 1} of '{acc.array}' is not a static offset")
            free = {s for s in coef if s not in loopvars}
            if free:
                raise PatternRejected(1, f"subscript {k + 1} of '{acc.array}' depends on runtime value "
                                         f"'{sorted(free)[0]}'")
            if coef != {spatial[k]: 1}:
                raise PatternRejected(
                    2, f"subscript {k + 1} of '{acc.array}' must be {spatial[k]} plus a constant")
            out.append(const)
        return tuple(out)

    dest_off = offsets(tgt, "destination")
    if any(dest_off):
        raise PatternRejected(3, "destination must be the centre cell (zero offset)")

    reads = []
    for node in walk(stmt.value, subscripts=False):
        if isinstance(node, Access):
            if node.array != tgt.array:
                raise PatternRejected(1, f"reads array '{node.array}'; only the double-buffered "
                                         f"'{tgt.array}' may be accessed")
            if not node.index or _time_shift(node.index[0], tvar) != 0:
                raise PatternRejected(3, f"read of '{node.array}' must use the t%2 buffer")
            reads.append((node, offsets(node, "read")))
        elif isinstance(node, Name):
            if node.id in loopvars:
                raise PatternRejected(1, f"loop variable '{node.id}' used as a value")
            if node.id not in consts:
                raise PatternRejected(1, f"coefficient '{node.id}' is not a compile-time constant")
    if not reads:
        raise PatternRejected(1, "the update reads no array elements")
    return Pattern(tgt.array, tvar, spatial, tuple(reads), consts, ctypes, dtype, ast)
