"""Analytic performance model.

Counts every thread instance of every launch (out-of-bound, boundary, stale
halo, redundant and valid work), turns the counts into compute, global- and
shared-memory traffic, and takes the slowest of the three against the device
peaks, corrected for the partially filled last wave of thread blocks.

Instance semantics (one instance = one thread handling one sub-plane at one
time-step T of a launch of degree d):

* T = 0 loads every plane of the stream block extended by d*rad on each side
  (clipped to the grid ring).  In-array threads read global memory; every
  thread, in-array or not, stores to shared memory.
* T >= 1 handles interior planes of the stream block extended by (d-T)*rad.
  Only interior threads inside the shrinking valid region compute; they read
  shared memory.  Every thread stores one value to shared memory.
* At T = d the compute region of each interior plane of the stream block is
  written to global memory.
"""

from collections import Counter
from dataclasses import asdict, dataclass
from fractions import Fraction
from math import ceil, floor, prod

import numpy as np

from ._jit import TALLY_FIELDS
from .geometry import derive, plan_launches
from .ir import eff_alu


@dataclass(frozen=True)
class ThreadCensus:
    th_comp: int = 0
    th_sm_read: int = 0
    th_sm_write: int = 0
    th_gm_read: int = 0
    th_gm_write: int = 0
    out_of_bound: int = 0
    boundary: int = 0
    halo: int = 0
    redundant: int = 0
    valid: int = 0

    def __add__(self, o):
        return ThreadCensus(*(a + b for a, b in zip(self.as_tuple(), o.as_tuple())))

    def scaled(self, k):
        return ThreadCensus(*(k * a for a in self.as_tuple()))

    def as_tuple(self):
        return tuple(getattr(self, f) for f in TALLY_FIELDS)

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_array(cls, arr):
        return cls(*(int(x) for x in arr))


def _overlap(lo, hi, a, b):
    return np.maximum(0, np.minimum(hi, b) - np.maximum(lo, a))


def _dim_sums(I, b, d, rad):
    """Per blocked dimension, sums over blocks of the thread-class widths."""
    c = b - 2 * d * rad
    k = np.arange(-(-I // c))
    lo = k * c - d * rad
    hi = lo + b
    out = {
        "tot": int(k.size * b),
        "inarr": int(_overlap(lo, hi, -rad, I + rad).sum()),
        "inter": int(_overlap(lo, hi, 0, I).sum()),
        "own": int(_overlap(k * c, k * c + c, 0, I).sum()),
    }
    for T in range(1, d + 1):
        e = (d - T) * rad
        out[T] = int(_overlap(k * c - e, k * c + c + e, 0, I).sum())
    return out


def _stream_sums(IN, h, d, rad):
    s0 = np.arange(-(-IN // h)) * h
    s1 = np.minimum(IN, s0 + h)
    e = d * rad
    out = {
        "pos0": int((np.minimum(IN + rad, s1 + e) - np.maximum(-rad, s0 - e)).sum()),
        "pos0_int": int(_overlap(s0 - e, s1 + e, 0, IN).sum()),
        "own": IN,
    }
    for T in range(1, d + 1):
        e = (d - T) * rad
        out[T] = int(_overlap(s0 - e, s1 + e, 0, IN).sum())
    return out


def launch_census(dims, I_S, b_S, rad, h, d):
    """Closed-form tallies for one launch of temporal degree d."""
    per_dim = [_dim_sums(I_S[1 + i], b_S[i], d, rad) for i in range(dims - 1)]
    g = lambda key: prod(x[key] for x in per_dim)
    st = _stream_sums(I_S[0], h, d, rad)
    tot, inarr, inter, own = g("tot"), g("inarr"), g("inter"), g("own")
    own_cells = own * st["own"]

    n = Counter()
    # T = 0: loads
    p0, p0i = st["pos0"], st["pos0_int"]
    n["th_sm_write"] += tot * p0
    n["th_gm_read"] += inarr * p0
    n["out_of_bound"] += (tot - inarr) * p0
    n["boundary"] += inarr * p0 - inter * p0i
    n["valid"] += own_cells
    n["redundant"] += inter * p0i - own_cells
    # T >= 1: updates
    for T in range(1, d + 1):
        pos = st[T]
        comp = g(T) * pos
        n["th_sm_write"] += tot * pos
        n["th_comp"] += comp
        n["th_sm_read"] += comp
        n["out_of_bound"] += (tot - inarr) * pos
        n["boundary"] += (inarr - inter) * pos
        n["halo"] += (inter - g(T)) * pos
        n["valid"] += own_cells
        n["redundant"] += comp - own_cells
    n["th_gm_write"] += own_cells
    return ThreadCensus(**n)


def census(spec, cfg, grid):
    """Thread census summed over every launch of the host plan."""
    derive(spec, cfg, grid)  # validates the config
    total = ThreadCensus()
    for d, count in Counter(plan_launches(grid.I_T, cfg.b_T)).items():
        one = launch_census(spec.dims, grid.I_S, cfg.b_S, spec.radius, cfg.h_SN, d)
        total = total + one.scaled(count)
    return total


def census_bruteforce(spec, cfg, grid, use_jit=None):
    """Same tallies by enumerating every instance (test oracle)."""
    from ._jit import census_bruteforce as _bf

    derive(spec, cfg, grid)
    return ThreadCensus.from_array(_bf(grid.I_S, cfg.b_S, spec.radius, cfg.h_SN,
                                       plan_launches(grid.I_T, cfg.b_T), use_jit))


def smem_reads_per_thread(spec):
    """Shared-memory loads per computing thread and cell.

    One per distinct in-plane neighbour position; the thread's own column is
    held in registers.  Gives 2r / 2r / 4r / (2r+1)^2-1 for 2D star / 2D box /
    3D star / 3D box.
    """
    cols = {t.offset[1:] for t in spec.taps}
    zero = (0,) * (spec.dims - 1)
    return len(cols) - (1 if zero in cols else 0)


@dataclass(frozen=True)
class Traffic:
    total_comp: float   # FLOP
    total_gm: float     # bytes
    total_sm: float     # bytes


def traffic(spec, cens):
    w = spec.word_size
    return Traffic(
        total_comp=cens.th_comp * spec.flops.flops_per_cell,
        total_gm=(cens.th_gm_read + cens.th_gm_write) * w,
        total_sm=(cens.th_sm_read * smem_reads_per_thread(spec) + cens.th_sm_write) * w,
    )


def eff_sm(geom, dev, mode="nsm"):
    """Utilisation of the final wave of thread blocks.

    ``mode="nsm"`` counts a wave as every SM full of blocks; ``"printed"``
    counts it as one SM's worth.  Returns 1 when the waves divide evenly.
    Fewer blocks than one wave occupy only that fraction of the device.
    """
    if geom.n_thr > dev.max_threads_per_SM:
        raise ValueError(f"{geom.n_thr} threads per block > {dev.max_threads_per_SM} per SM")
    per_wave = dev.max_threads_per_SM // geom.n_thr
    if mode == "nsm":
        per_wave *= dev.n_SM
    elif mode != "printed":
        raise ValueError(f"unknown eff_sm mode '{mode}'")
    waves = Fraction(geom.n_tb_prime, per_wave)
    if waves.denominator == 1:
        return 1.0
    if waves < 1:
        return float(waves)
    return floor(waves) / ceil(waves)


def dtype_key(spec):
    return "f32" if spec.word_size == 4 else "f64"


@dataclass(frozen=True)
class Prediction:
    time_comp: float
    time_gm: float
    time_sm: float
    eff_alu: float
    eff_sm: float
    time_model: float
    gflops_model: float
    bottleneck: str
    census: ThreadCensus
    traffic: Traffic

    def as_dict(self):
        d = asdict(self)
        d["census"] = self.census.as_dict()
        d["traffic"] = asdict(self.traffic)
        return d


def predict(spec, cfg, grid, dev, eff_sm_mode="nsm"):
    geom = derive(spec, cfg, grid)
    cens = census(spec, cfg, grid)
    tr = traffic(spec, cens)
    key = dtype_key(spec)
    ea = eff_alu(spec.flops)
    t_comp = tr.total_comp / (dev.peak_comp[key] * 1e9 * ea)
    t_gm = tr.total_gm / (dev.peak_gm[key] * 1e9)
    t_sm = tr.total_sm / (dev.peak_sm[key] * 1e9)
    es = eff_sm(geom, dev, eff_sm_mode)
    worst = max(t_comp, t_gm, t_sm)
    t_model = worst / es
    useful = prod(grid.I_S) * spec.flops.flops_per_cell * grid.I_T
    gflops = useful / t_model / 1e9 if t_model > 0 else 0.0
    bottleneck = {t_comp: "compute", t_gm: "global-memory", t_sm: "shared-memory"}[worst]
    return Prediction(t_comp, t_gm, t_sm, ea, es, t_model, gflops, bottleneck, cens, tr)
