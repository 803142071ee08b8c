"""Built-in benchmark stencils and their published tuning results.

Sources are generated as restricted C so they go through the same parser as
user input.  Coefficients are fixed decimal literals (deterministic, small,
positive) so exact-rational runs stay cheap.
"""

import itertools
from dataclasses import dataclass

NAMES = (
    [f"star2d{r}r" for r in range(1, 5)]
    + [f"box2d{r}r" for r in range(1, 5)]
    + ["j2d5pt", "j2d9pt", "j2d9pt-gol", "gradient2d"]
    + [f"star3d{r}r" for r in range(1, 5)]
    + [f"box3d{r}r" for r in range(1, 5)]
    + ["j3d27pt"]
)

# published FLOP/cell totals, used by tests as the reference
FLOPS_PER_CELL = {}
for _r in range(1, 5):
    FLOPS_PER_CELL[f"star2d{_r}r"] = 8 * _r + 1
    FLOPS_PER_CELL[f"box2d{_r}r"] = 2 * (2 * _r + 1) ** 2 - 1
    FLOPS_PER_CELL[f"star3d{_r}r"] = 12 * _r + 1
    FLOPS_PER_CELL[f"box3d{_r}r"] = 2 * (2 * _r + 1) ** 3 - 1
FLOPS_PER_CELL.update({"j2d5pt": 10, "j2d9pt": 18, "j2d9pt-gol": 18, "gradient2d": 19, "j3d27pt": 54})

# gradient2d's total is known but its per-class split depends on how the
# compiler treats the reciprocal square root; this split sums to 19
GRADIENT2D_SPLIT = (7, 0, 4, 1)


def _coef(k, ntaps, suffix):
    # (k mod 7 + 1) / (8 * ntaps), written out as a short decimal
    v = (k % 7 + 1) / (8.0 * ntaps)
    return f"{v:.6g}{suffix}"


def _acc(off, loopvars):
    subs = "".join(f"[{v}{o:+d}]" if o else f"[{v}]" for v, o in zip(loopvars, off))
    return f"A[t%2]{subs}"


def _nest(dims, body, dtype):
    loopvars = ("i", "j", "k")[:dims]
    bounds = ("N", "M", "L")[:dims]
    lines = [f"{dtype} A[2]" + "".join(f"[{b}]" for b in bounds) + ";",
             "for (int t = 0; t < T; t++)"]
    for depth, (v, b) in enumerate(zip(loopvars, bounds)):
        lines.append("  " * (depth + 1) + f"for (int {v} = R; {v} < {b} - R; {v}++)")
    lines.append("  " * (dims + 1) + "A[(t+1)%2]" + "".join(f"[{v}]" for v in loopvars) + " =")
    lines.append("  " * (dims + 2) + body + ";")
    return "\n".join(lines) + "\n"


def _star_offsets(dims, rad):
    offs = [(0,) * dims]
    for d in range(dims):
        for i in itertools.chain(range(-rad, 0), range(1, rad + 1)):
            o = [0] * dims
            o[d] = i
            offs.append(tuple(o))
    return offs


def _box_offsets(dims, rad):
    return list(itertools.product(range(-rad, rad + 1), repeat=dims))


def _linear(offsets, dims, suffix, divisor=None):
    lv = ("i", "j", "k")[:dims]
    terms = [f"{_coef(n, len(offsets), suffix)} * {_acc(o, lv)}" for n, o in enumerate(offsets)]
    body = "\n      + ".join(terms)
    if divisor is not None:
        return f"({body}) / {divisor}"
    return body


def source(name, dtype="float"):
    """Restricted-C source text of a built-in benchmark."""
    sfx = "f" if dtype == "float" else ""
    if name.startswith(("star", "box")):
        dims = int(name[-4])
        rad = int(name[-2])
        offs = _star_offsets(dims, rad) if name.startswith("star") else _box_offsets(dims, rad)
        return _nest(dims, _linear(offs, dims, sfx), dtype)
    if name == "j2d5pt":
        body = (f"(5.1{sfx} * A[t%2][i-1][j] + 12.1{sfx} * A[t%2][i][j-1] + 15.0{sfx} * A[t%2][i][j]"
                f"\n      + 12.2{sfx} * A[t%2][i][j+1] + 5.2{sfx} * A[t%2][i+1][j]) / 118")
        return _nest(2, body, dtype)
    if name == "j2d9pt":
        offs = [(-2, 0), (-1, 0), (0, -2), (0, -1), (0, 0), (0, 1), (0, 2), (1, 0), (2, 0)]
        lits = ["7.1", "5.1", "9.2", "12.1", "15.0", "12.2", "9.1", "5.2", "7.2"]
        lv = ("i", "j")
        terms = [f"{c}{sfx} * {_acc(o, lv)}" for c, o in zip(lits, offs)]
        return _nest(2, "(" + "\n      + ".join(terms) + ") / 118", dtype)
    if name == "j2d9pt-gol":
        lits = ["3.1", "5.1", "3.2", "5.2", "8.0", "5.3", "3.3", "5.4", "3.4"]
        lv = ("i", "j")
        terms = [f"{c}{sfx} * {_acc(o, lv)}" for c, o in zip(lits, _box_offsets(2, 1))]
        return _nest(2, "(" + "\n      + ".join(terms) + ") / 118", dtype)
    if name == "j3d27pt":
        offs = _box_offsets(3, 1)
        lv = ("i", "j", "k")
        terms = [f"{0.5 + 0.25 * (n % 5):.2f}{sfx} * {_acc(o, lv)}" for n, o in enumerate(offs)]
        return _nest(3, "(" + "\n      + ".join(terms) + ") / 159", dtype)
    if name == "gradient2d":
        c = "A[t%2][i][j]"
        nbrs = ["A[t%2][i-1][j]", "A[t%2][i+1][j]", "A[t%2][i][j-1]", "A[t%2][i][j+1]"]
        sq = "\n      + ".join(f"({c} - {n}) * ({c} - {n})" for n in nbrs)
        body = f"0.3{sfx} * {c} + 1.0{sfx} / sqrt(0.0001{sfx}\n      + {sq})"
        return _nest(2, body, dtype)
    raise KeyError(name)


def load(name, dtype="float"):
    """Parse, validate and classify a built-in benchmark."""
    from .ir import FlopMap, classify

    word = 4 if dtype == "float" else 8
    spec = classify(source(name, dtype), origin=f"builtin:{name}", word_size=word)
    if name == "gradient2d":
        spec = spec.with_flop_map(FlopMap(*GRADIENT2D_SPLIT))
    return spec


@dataclass(frozen=True)
class TableRow:
    """One published tuned configuration with its model prediction (GFLOP/s)."""

    b_T: int
    b_S: tuple
    h_SN: int
    regs: int | None
    tuned: float
    model: float


def _parse_table(text):
    rows = {}
    for line in text.strip().splitlines():
        parts = line.split()
        name, cells = parts[0], parts[1:]
        cols = []
        for c in range(4):
            bt, bs, h, regs, tuned, model = cells[6 * c:6 * c + 6]
            cols.append(TableRow(int(bt), tuple(int(x) for x in bs.split("x")), int(h),
                                 None if regs == "-" else int(regs), float(tuned), float(model)))
        rows[name] = dict(zip(("v100-f32", "v100-f64", "p100-f32", "p100-f64"), cols))
    return rows


# columns: V100 float | V100 double | P100 float | P100 double,
# each b_T b_S h_SN regs tuned model
TUNED = _parse_table("""
star2d1r   10 256 256 64 5631 7330     10 256 256 - 3306 4177     13 512 256 - 2507 6091     15 128 1024 - 1588 3118
star2d2r   10 512 256 64 6319 8172     6 512 128 64 3071 4431     10 512 512 - 2576 7698     8 512 512 96 1397 4042
star2d3r   7 512 256 64 7132 8627      6 256 128 96 3221 4707     6 512 512 96 3424 8144     7 256 256 - 1912 3857
star2d4r   5 512 256 - 7244 8954       4 256 128 96 3422 4680     5 512 512 - 3573 8405      5 512 512 - 1956 4397
box2d1r    10 256 256 96 6693 11327    10 256 256 - 2984 5664     10 256 512 64 2823 7804    8 128 128 96 1959 3660
box2d2r    5 256 256 64 9163 12473     3 256 128 64 4686 5858     5 256 512 64 4626 8578     5 256 512 - 2673 4289
box2d3r    2 256 128 96 10227 12391    2 256 128 64 5507 6196     2 256 128 96 5598 8584     2 128 128 96 3652 4244
box2d4r    4 512 256 96 10772 13241    1 256 128 96 5770 6576     4 512 512 96 6546 9174     1 128 128 96 3921 4556
j2d5pt     10 256 256 64 6160 8144     10 256 256 96 1258 4642    13 512 256 - 2708 6768     15 128 1024 - 621 3465
j2d9pt     5 256 256 - 6398 8370       5 256 256 64 2770 4259     10 512 256 64 2635 6244    6 512 128 64 1093 2976
j2d9pt-gol 10 256 256 - 6865 10994     10 256 256 - 1394 5497     10 256 512 64 2883 7575    10 256 512 - 770 3787
gradient2d 10 256 256 96 7965 12660    8 256 128 64 2343 5806     10 256 512 64 3369 8723    8 128 128 96 1234 4091
star3d1r   4 32x32 128 96 2887 3498    4 64x16 128 32 1393 1647   5 32x32 128 96 1055 2682   3 32x32 128 32 805 1015
star3d2r   3 32x32 128 32 2910 4268    2 32x32 128 64 1413 1847   2 32x32 128 96 1545 2512   2 32x32 128 32 859 1268
star3d3r   2 32x32 128 32 3118 4518    2 32x32 256 96 1591 2193   2 32x32 128 32 1523 3117   2 32x32 256 - 966 1528
star3d4r   2 32x32 256 32 2808 4063    1 32x32 128 96 1684 2087   1 64x16 128 - 1656 2824    1 32x32 256 64 1135 1354
box3d1r    3 32x32 256 32 6284 12811   3 32x16 128 - 2888 5552    3 32x32 256 64 3168 7590   3 32x32 128 - 1671 4015
box3d2r    1 32x16 128 96 8666 13640   1 32x16 128 96 5024 6820   1 32x16 128 64 5528 9482   1 32x16 128 96 3189 4741
box3d3r    1 64x16 128 96 9351 13931   1 32x16 128 - 2993 7599    1 32x16 128 96 6401 9749   1 32x16 128 - 1934 4874
box3d4r    1 64x16 256 - 9707 15248    1 64x16 256 - 4635 7624    1 32x16 128 - 3056 9928    1 16x16 256 - 794 4891
j3d27pt    3 32x32 256 32 6251 12617   3 32x16 128 64 1957 5468   3 32x32 256 96 3183 7476   3 32x32 128 64 1112 3954
""")
