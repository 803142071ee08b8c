"""Reference executors.

``run_naive`` applies the update to the whole interior once per time-step.
``run_blocked`` interprets the generated program: for every launch of the
host plan and every thread block it walks the ``KernelSchedule`` step by
step, with per-block register and shared-memory arrays and the same guards
the kernel text uses.  Agreement of the two is the correctness oracle for
geometry, schedule and launch plan together.

Three arithmetic modes: ``f32`` and ``f64`` mirror deployment precision,
``exact`` uses rationals so reordered partial sums must match bit for bit.
"""

import operator
import random
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import prod

import numpy as np

from . import exact as ex
from ._jit import TALLY_FIELDS, linear_sweep
from .codegen import KernelSchedule, access_offset
from .errors import GeometryMismatch, UnsupportedOperator
from .frontend import Access, BinOp, Call, Name, Neg, Num
from .geometry import check_config, plan_launches

MODES = ("f32", "f64", "exact")
_DTYPES = {"f32": np.float32, "f64": np.float64}
# value of cells that must never be read; a leak shows up as a mismatch
_POISON_EXACT = Fraction(10**40 + 7, 3)


@dataclass
class Grid:
    """Interior of extent I_S plus a constant ring of width ``rad``."""

    values: object   # ndarray (float modes) or RationalArray (exact)
    rad: int
    mode: str

    @property
    def shape(self):
        return tuple(s - 2 * self.rad for s in self.values.shape)

    def copy(self):
        return Grid(self.values.copy(), self.rad, self.mode)

    def interior(self):
        r = self.rad
        return self.values[tuple(slice(r, s - r) for s in self.values.shape)]

    def ring_mask(self):
        m = np.ones(self.values.shape, bool)
        r = self.rad
        m[tuple(slice(r, s - r) for s in self.values.shape)] = False
        return m

    def as_float(self):
        if self.mode == "exact":
            return np.array([float(x) for x in self.values.to_fractions().flat]).reshape(self.values.shape)
        return np.asarray(self.values, dtype=np.float64)


def make_grid(I_S, rad, mode="f64", seed=0):
    """Random cells k/16, k in 1..64, identical across modes for a given seed."""
    if mode not in MODES:
        raise ValueError(f"unknown mode '{mode}'")
    rng = np.random.default_rng(seed)
    shape = tuple(i + 2 * rad for i in I_S)
    k = rng.integers(1, 65, size=shape)
    if mode == "exact":
        return Grid(ex.RationalArray(k.astype(object), 16), rad, mode)
    return Grid((k / 16).astype(_DTYPES[mode]), rad, mode)


def _check_grid(spec, grid):
    if grid.values.ndim != spec.dims:
        raise GeometryMismatch(f"grid has {grid.values.ndim} dimensions, stencil has {spec.dims}")
    if grid.rad != spec.radius:
        raise GeometryMismatch(f"grid ring is {grid.rad} wide, stencil radius is {spec.radius}")


# ------------------------------------------------------------ arithmetic


class _Arith:
    def __init__(self, mode):
        self.mode = mode
        self.exact = mode == "exact"
        self.dt = None if self.exact else _DTYPES[mode]

    def const(self, v):
        return Fraction(v) if self.exact else self.dt(float(v))

    def where(self, mask, a, b):
        if self.exact:
            return ex.where(mask, a, b)
        return np.where(mask, a, b)

    def full(self, shape, v):
        if self.exact:
            return ex.RationalArray.full(shape, v)
        return np.full(shape, v, dtype=self.dt)

    def poison(self, shape):
        return self.full(shape, _POISON_EXACT if self.exact else np.nan)

    def pad(self, a, width):
        if self.exact:
            return ex.pad(a, width, _POISON_EXACT)
        return np.pad(a, width, constant_values=np.nan)

    def tidy(self, a):
        return a.normalized() if self.exact else a

    def embed(self, base, box, value):
        """Copy of ``base`` with the sub-box replaced by ``value``."""
        out = base.copy()
        out[box] = value
        return out


_BINOPS = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}


def compile_expr(spec, mode):
    """Update expression as ``f(get)``, where ``get(offset)`` yields the neighbour values."""
    ar = _Arith(mode)
    env = spec.env
    lin = spec.linear
    if ar.exact and lin is not None:
        # a linear update is one weighted sum; evaluation order is irrelevant here
        coefs = [c for c, _ in lin.terms]
        offs = [o for _, o in lin.terms]
        div = lin.divisor

        def linear(get):
            v = ex.lincomb(coefs, [get(o) for o in offs])
            return v if div is None else v / div

        return linear

    def build(e):
        if isinstance(e, Num):
            c = ar.const(e.value)
            return lambda get: c
        if isinstance(e, Name):
            c = ar.const(env[e.id])
            return lambda get: c
        if isinstance(e, Access):
            off = access_offset(e, env)
            return lambda get: get(off)
        if isinstance(e, Neg):
            f = build(e.operand)
            return lambda get: -f(get)
        if isinstance(e, Call):
            if e.func != "sqrt" or len(e.args) != 1:
                raise UnsupportedOperator(f"function '{e.func}' is not supported")
            if ar.exact:
                raise UnsupportedOperator("sqrt has no exact rational evaluation; use f32 or f64")
            f = build(e.args[0])
            return lambda get: np.sqrt(f(get))
        if isinstance(e, BinOp) and e.op in _BINOPS:
            op, fl, fr = _BINOPS[e.op], build(e.left), build(e.right)
            return lambda get: op(fl(get), fr(get))
        raise UnsupportedOperator(f"cannot evaluate {type(e).__name__}")

    return build(spec.update)


# ------------------------------------------------------------ naive


def _naive_step(spec, src, dst, fn, ar, use_jit):
    rad = spec.radius
    n = [s - 2 * rad for s in src.shape]
    inner = tuple(slice(rad, rad + m) for m in n)
    if not ar.exact and spec.linear is not None:
        lin = spec.linear
        offs = [o for _, o in lin.terms]
        coefs = [float(c) for c, _ in lin.terms]
        linear_sweep(src, dst, offs, coefs, 1 if lin.divisor is None else float(lin.divisor), rad, use_jit)
        return

    def get(o):
        return src[tuple(slice(rad + x, rad + x + m) for x, m in zip(o, n))]

    dst[inner] = ar.tidy(fn(get))


def run_naive(spec, grid, I_T, use_jit=None):
    """I_T double-buffered sweeps over the interior; the ring is never written."""
    _check_grid(spec, grid)
    ar = _Arith(grid.mode)
    fn = compile_expr(spec, grid.mode)
    a, b = grid.values.copy(), grid.values.copy()
    with np.errstate(all="ignore"):
        for _ in range(I_T):
            _naive_step(spec, a, b, fn, ar, use_jit)
            a, b = b, a
    return Grid(a, grid.rad, grid.mode)


# ------------------------------------------------------------ blocked


@dataclass
class ScheduleTrace:
    """Per-instance tallies of an executed schedule, in census field order."""

    counts: Counter
    launches: list

    def as_tuple(self):
        return tuple(self.counts[f] for f in TALLY_FIELDS)

    def as_dict(self):
        return {f: self.counts[f] for f in TALLY_FIELDS}


class _Block:
    """One thread block of one launch: coordinates, masks and storage."""

    def __init__(self, spec, cfg, I_S, d, ks, ar):
        rad = spec.radius
        self.rad = rad
        self.shape = tuple(cfg.b_S)
        c = [b - 2 * d * rad for b in cfg.b_S]
        axes = [k * ci - d * rad + np.arange(b) for k, ci, b in zip(ks, c, cfg.b_S)]
        self.axes = axes
        X = np.meshgrid(*axes, indexing="ij")
        Ib = I_S[1:]
        self.in_array = np.logical_and.reduce([(x >= -rad) & (x < I + rad) for x, I in zip(X, Ib)])
        self.interior = np.logical_and.reduce([(x >= 0) & (x < I) for x, I in zip(X, Ib)])
        self.owned = self.interior & np.logical_and.reduce(
            [(x >= k * ci) & (x < k * ci + ci) for x, k, ci in zip(X, ks, c)])
        self.comp = {}
        self.cbox = {}   # bounding box of comp[T]; threads outside it only copy their centre
        for T in range(1, d + 1):
            e = (d - T) * rad
            self.comp[T] = self.interior & np.logical_and.reduce(
                [(x >= k * ci - e) & (x < k * ci + ci + e) for x, k, ci in zip(X, ks, c)])
            box = []
            for a, k, ci, I in zip(axes, ks, c, Ib):
                hit = np.flatnonzero((a >= max(0, k * ci - e)) & (a < min(I, k * ci + ci + e)))
                box.append(slice(int(hit[0]), int(hit[-1]) + 1) if hit.size else None)
            self.cbox[T] = None if None in box else tuple(box)
        # gather indices into the padded global arrays, clipped; masked by in_array
        self.gidx = np.ix_(*[np.clip(a + rad, 0, I + 2 * rad - 1) for a, I in zip(axes, Ib)])
        # the owned threads form a box: per-axis local and global (padded) indices
        own_ax = [np.flatnonzero((a >= k * ci) & (a < min(I, k * ci + ci)))
                  for a, k, ci, I in zip(axes, ks, c, Ib)]
        self.own_local = np.ix_(*own_ax)
        self.own_global = np.ix_(*[a[o] + rad for a, o in zip(axes, own_ax)])
        self.n_owned = int(self.owned.sum())

    def shifted(self, buf_padded, ob, box):
        r = self.rad
        return buf_padded[tuple(slice(r + o + w.start, r + o + w.stop) for o, w in zip(ob, box))]


def _partial_sum(ar, terms, own, sm, blk, box):
    """Contribution of one staged sub-plane to one target, terms in source order."""
    vals = [own[box] if not any(ob) else blk.shifted(sm, ob, box) for _, ob in terms]
    if not vals:
        return own[box] * 0
    if ar.exact:
        return ex.lincomb([cf for cf, _ in terms], vals)
    part = terms[0][0] * vals[0]
    for (cf, _), v in zip(terms[1:], vals[1:]):
        part = part + cf * v
    return part


def _tally_instance(counts, blk, T, comp=None, own_plane=False, ring_plane=False):
    n_thr = blk.in_array.size
    n_arr = int(blk.in_array.sum())
    counts["th_sm_write"] += n_thr
    counts["out_of_bound"] += n_thr - n_arr
    if T == 0:
        counts["th_gm_read"] += n_arr
        if ring_plane:
            counts["boundary"] += n_arr
            return
        n_int = int(blk.interior.sum())
        n_own = blk.n_owned if own_plane else 0
        counts["boundary"] += n_arr - n_int
        counts["valid"] += n_own
        counts["redundant"] += n_int - n_own
        return
    n_int = int(blk.interior.sum())
    n_comp = int(comp.sum())
    n_own = blk.n_owned if own_plane else 0
    counts["boundary"] += n_arr - n_int
    counts["halo"] += n_int - n_comp
    counts["th_comp"] += n_comp
    counts["th_sm_read"] += n_comp
    counts["valid"] += n_own
    counts["redundant"] += n_comp - n_own


def _run_stream_block(spec, sch, blk, src, dst, I0, s0, s1, fn, ar, counts):
    rad, d, W = spec.radius, sch.d, sch.W
    p0 = s0 - d * rad
    lo = lambda T: max(-rad, s0 - (d - T) * rad)
    hi = lambda T: min(I0 + rad, s1 + (d - T) * rad)
    shp = blk.shape
    reg = {(T, m): ar.poison(shp) for T in range(d + 1) for m in range(W)}
    general = sch.strategy == "general"
    lin = spec.linear
    if sch.strategy == "associative":
        groups = {j: [(ar.const(cf), o[1:]) for cf, o in lin.terms if o[0] == rad - j] for j in range(W)}
        div = None if lin.divisor is None else ar.const(lin.divisor)
    for s in range(sch.n_steps(s1 - s0)):
        for op in sch.ops(s):
            if op.kind == "LOAD":
                p = p0 + s
                if not lo(0) <= p < hi(0):
                    continue
                plane = src[(p + rad,) + blk.gidx]
                reg[0, op.dst] = ar.where(blk.in_array, plane, reg[0, op.dst])
                if counts is not None:
                    _tally_instance(counts, blk, 0, own_plane=s0 <= p < s1, ring_plane=not 0 <= p < I0)
            elif op.kind == "STORE":
                q = p0 + s - d * rad
                if s0 <= q < s1 and blk.n_owned:
                    dst[(q + rad,) + blk.own_global] = reg[d, op.srcs[0]][blk.own_local]
                    if counts is not None:
                        counts["th_gm_write"] += blk.n_owned
            elif sch.strategy == "associative":
                T = op.T
                r = p0 + s - (T - 1) * rad
                if not lo(T - 1) <= r < hi(T - 1):
                    continue
                own = reg[T - 1, op.srcs[0]]
                sm = ar.pad(own, rad)  # this parity's shared buffer, poison outside the block
                for j in reversed(range(W)):
                    q = r - rad + j
                    if not lo(T) <= q < hi(T):
                        continue
                    cq = blk.comp[T] if 0 <= q < I0 else np.zeros(shp, bool)
                    box = blk.cbox[T] if 0 <= q < I0 else None
                    slot = op.accs[j]
                    # threads outside comp keep their own value from the first and centre
                    # partial onwards, and an untouched accumulator otherwise
                    base = own if j in (W - 1, rad) else reg[T, slot]
                    if box is not None:
                        cb = cq[box]
                        part = _partial_sum(ar, groups[j], own, sm, blk, box)
                        if j == W - 1:
                            acc = ar.where(cb, part, own[box])
                        else:
                            prev = reg[T, slot][box]
                            acc = ar.where(cb, prev + part, prev)
                        if j == rad:
                            acc = ar.where(cb, acc, own[box])
                        if j == 0 and div is not None:
                            acc = ar.where(cb, acc / div, acc)
                        reg[T, slot] = ar.tidy(ar.embed(base, box, acc))
                    else:
                        reg[T, slot] = base
                    if j == 0 and counts is not None and 0 <= q < I0:
                        _tally_instance(counts, blk, T, comp=cq, own_plane=s0 <= q < s1)
            else:
                T = op.T
                q = p0 + s - T * rad
                if not lo(T) <= q < hi(T):
                    continue
                win = [reg[T - 1, m] for m in op.srcs]
                center = win[rad]
                if general:
                    sm = [ar.pad(w, rad) for w in win]
                else:
                    sm = ar.pad(center, rad)

                box = blk.cbox[T]

                def get(o, win=win, sm=sm, box=box):
                    if not any(o[1:]):
                        return win[rad + o[0]][box]
                    if general:
                        return blk.shifted(sm[rad + o[0]], o[1:], box)
                    return blk.shifted(sm, o[1:], box)

                interior_plane = 0 <= q < I0
                if interior_plane:
                    cq = blk.comp[T]
                    if box is None:
                        reg[T, op.dst] = center
                    else:
                        # threads in the box compute, halo results are then overwritten
                        value = ar.where(cq[box], fn(get), center[box])
                        reg[T, op.dst] = ar.tidy(ar.embed(center, box, value))
                    if counts is not None:
                        _tally_instance(counts, blk, T, comp=cq, own_plane=s0 <= q < s1)
                else:
                    reg[T, op.dst] = center


def run_blocked(spec, cfg, grid, I_T, block_seed=None, trace=False):
    """Execute the generated program's launches; returns the result Grid (and trace)."""
    _check_grid(spec, grid)
    I_S = grid.shape
    check_config(spec, cfg)  # no thread cap here: the oracle may use oversized blocks
    if len(I_S) != spec.dims:
        raise GeometryMismatch(f"grid has {len(I_S)} dimensions, stencil has {spec.dims}")
    ar = _Arith(grid.mode)
    fn = compile_expr(spec, grid.mode)
    bufs = [grid.values.copy(), grid.values.copy()]
    counts = Counter() if trace else None
    plan = plan_launches(I_T, cfg.b_T)
    rng = random.Random(block_seed)
    rad = spec.radius
    with np.errstate(all="ignore"):
        for k, d in enumerate(plan):
            src, dst = bufs[k % 2], bufs[(k + 1) % 2]
            sch = KernelSchedule(spec, d)
            c = [b - 2 * d * rad for b in cfg.b_S]
            nb = [-(-I // ci) for I, ci in zip(I_S[1:], c)]
            jobs = [(ks, j) for ks in np.ndindex(*nb) for j in range(-(-I_S[0] // cfg.h_SN))]
            if block_seed is not None:
                rng.shuffle(jobs)
            blocks = {}
            for ks, j in jobs:
                blk = blocks.get(ks)
                if blk is None:
                    blk = blocks[ks] = _Block(spec, cfg, I_S, d, ks, ar)
                s0 = j * cfg.h_SN
                s1 = min(I_S[0], s0 + cfg.h_SN)
                _run_stream_block(spec, sch, blk, src, dst, I_S[0], s0, s1, fn, ar, counts)
            if ar.exact:
                bufs[(k + 1) % 2] = dst.normalized()
    out = Grid(bufs[len(plan) % 2], grid.rad, grid.mode)
    if trace:
        return out, ScheduleTrace(counts, list(plan))
    return out


def run_trace(spec, cfg, grid, I_T):
    """Tallies of the executed schedule (same instance semantics as the census)."""
    return run_blocked(spec, cfg, grid, I_T, trace=True)[1]


# ------------------------------------------------------------ comparison


@dataclass(frozen=True)
class Comparison:
    equal: bool
    max_rel_err: float
    first_mismatch: tuple | None   # (coordinate in padded grid, expected, got)


def compare(expected, got, rtol=0.0):
    """Cellwise comparison; exact mode demands identity, float modes ``rtol``."""
    if expected.values.shape != got.values.shape:
        raise GeometryMismatch("grids differ in shape")
    if expected.mode == "exact":
        eq = expected.values.equals(got.values)
        bad = np.argwhere(~eq)
        if bad.size:
            idx = tuple(int(x) for x in bad[0])
            return Comparison(False, float("inf"), (idx, str(expected.values.to_fractions()[idx]),
                                                    str(got.values.to_fractions()[idx])))
        return Comparison(True, 0.0, None)
    a = np.asarray(expected.values, np.float64)
    b = np.asarray(got.values, np.float64)
    scale = np.maximum(np.abs(a), np.finfo(np.float64).tiny)
    with np.errstate(all="ignore"):
        rel = np.where(a == b, 0.0, np.abs(a - b) / scale)
    rel = np.where(np.isnan(rel), np.inf, rel)
    bad = np.argwhere(rel > rtol)
    worst = float(rel.max()) if rel.size else 0.0
    if bad.size:
        idx = tuple(int(x) for x in bad[0])
        return Comparison(False, worst, (idx, float(a[idx]), float(b[idx])))
    return Comparison(True, worst, None)


DEFAULT_RTOL = {"exact": 0.0, "f64": 1e-12, "f32": 1e-5}
