"""Thread-block geometry for combined spatial/temporal blocking.

Spatial dimensions are in loop order; dimension 0 is streamed, the others
are blocked.  A block of ``b_S`` threads per blocked dimension advances
``b_T`` time-steps per launch, so its result shrinks by ``rad`` cells on
each side per step and only the central ``b_S - 2*b_T*rad`` cells (the
compute region) are written back.
"""

from dataclasses import dataclass
from math import ceil, prod

from .errors import BlockTooLarge, ExceedsDeviceLimits, GeometryMismatch, InfeasibleConfig

MAX_THREADS_PER_BLOCK = 1024


@dataclass(frozen=True)
class BlockingConfig:
    b_T: int
    b_S: tuple
    h_SN: int
    reg_cap: int | None = None

    def to_dict(self):
        return {"b_T": self.b_T, "b_S": list(self.b_S), "h_SN": self.h_SN, "reg_cap": self.reg_cap}

    @classmethod
    def from_dict(cls, d):
        bs = d["b_S"]
        bs = (int(bs),) if isinstance(bs, (int, float)) else tuple(int(x) for x in bs)
        cap = d.get("reg_cap")
        return cls(int(d["b_T"]), bs, int(d["h_SN"]), None if cap is None else int(cap))

    def label(self):
        bs = "x".join(str(x) for x in self.b_S)
        cap = "-" if self.reg_cap is None else str(self.reg_cap)
        return f"bT={self.b_T} bS={bs} h={self.h_SN} regs={cap}"


@dataclass(frozen=True)
class GridShape:
    I_S: tuple   # interior extent per spatial dim, loop order
    I_T: int


@dataclass(frozen=True)
class Geometry:
    n_thr: int
    n_tb: int
    n_tb_prime: int
    compute_region: tuple
    stream_overlap_subplanes: int
    smem_footprint: int
    reg_estimate: int
    b_S: tuple
    b_T: int
    rad: int

    def valid_region(self, T):
        return tuple(b - 2 * T * self.rad for b in self.b_S)


def reg_estimate(word_size, b_T, rad):
    """Registers per thread: b_T register windows of 2*rad+1 plus fixed overhead."""
    if word_size == 4:
        return b_T * (2 * rad + 1) + b_T + 20
    return 2 * b_T * (2 * rad + 1) + b_T + 30


def smem_footprint(spec, n_thr):
    """Bytes of double-buffered shared memory one block declares."""
    if spec.diagonal_free or spec.associative:
        return 2 * n_thr * spec.word_size
    return 2 * n_thr * (1 + 2 * spec.radius) * spec.word_size


def check_config(spec, cfg):
    if len(cfg.b_S) != spec.dims - 1:
        raise GeometryMismatch(f"b_S has {len(cfg.b_S)} entries; a {spec.dims}D stencil "
                               f"blocks {spec.dims - 1} dimension(s)")
    if cfg.b_T < 1:
        raise InfeasibleConfig(f"b_T = {cfg.b_T} < 1")
    if cfg.h_SN < 1:
        raise InfeasibleConfig(f"h_SN = {cfg.h_SN} < 1")
    rad = spec.radius
    for i, b in enumerate(cfg.b_S):
        c = b - 2 * cfg.b_T * rad
        if c < 1:
            raise InfeasibleConfig(
                f"compute region empty: b_S[{i}] - 2*b_T*rad = {b} - 2*{cfg.b_T}*{rad} = {c} < 1")


def derive(spec, cfg, grid):
    """All derived block quantities for one (stencil, config, grid)."""
    check_config(spec, cfg)
    if len(grid.I_S) != spec.dims:
        raise GeometryMismatch(f"grid has {len(grid.I_S)} dimensions, stencil has {spec.dims}")
    rad = spec.radius
    comp = tuple(b - 2 * cfg.b_T * rad for b in cfg.b_S)
    n_thr = prod(cfg.b_S)
    if n_thr > MAX_THREADS_PER_BLOCK:
        raise BlockTooLarge(f"{n_thr} threads per block > {MAX_THREADS_PER_BLOCK}")
    n_tb = prod(ceil(I / c) for I, c in zip(grid.I_S[1:], comp))
    n_tb_prime = ceil(grid.I_S[0] / cfg.h_SN) * n_tb
    return Geometry(
        n_thr=n_thr,
        n_tb=n_tb,
        n_tb_prime=n_tb_prime,
        compute_region=comp,
        stream_overlap_subplanes=cfg.b_T * (cfg.b_T + 1) * rad,
        smem_footprint=smem_footprint(spec, n_thr),
        reg_estimate=reg_estimate(spec.word_size, cfg.b_T, rad),
        b_S=tuple(cfg.b_S),
        b_T=cfg.b_T,
        rad=rad,
    )


def device_limit_violations(spec, cfg, dev):
    """Reasons one block of this config cannot be resident on an SM (empty if it fits)."""
    check_config(spec, cfg)
    n_thr = prod(cfg.b_S)
    regs = reg_estimate(spec.word_size, cfg.b_T, spec.radius)
    smem = smem_footprint(spec, n_thr)
    out = []
    if n_thr > dev.max_threads_per_block:
        out.append(f"{n_thr} threads per block > {dev.max_threads_per_block}")
    if regs > dev.max_regs_per_thread:
        out.append(f"estimated {regs} registers per thread > {dev.max_regs_per_thread}")
    if regs * n_thr > dev.regs_per_SM:
        out.append(f"estimated {regs} registers x {n_thr} threads = {regs * n_thr} > {dev.regs_per_SM} per SM")
    if smem > dev.smem_per_SM:
        out.append(f"{smem} bytes of shared memory per block > {dev.smem_per_SM} per SM")
    return out


def check_device_limits(spec, cfg, dev):
    """Raise ExceedsDeviceLimits when one block cannot be resident on an SM."""
    reasons = device_limit_violations(spec, cfg, dev)
    if reasons:
        raise ExceedsDeviceLimits("; ".join(reasons))


def needs_adjustment(I_T, b_T):
    """True when plain b_T-step launches cannot be used as is."""
    return I_T % b_T != 0 or (I_T // b_T) % 2 != b_T % 2


def plan_launches(I_T, b_T):
    """Temporal degrees of the kernel launches that advance I_T steps.

    Each launch reads one global buffer and writes the other, so the number
    of launches must have the parity of I_T for the result to land in the
    same buffer as a plain time loop.  Full b_T launches are used as long as
    the remainder can be split into that many smaller launches.
    """
    if I_T < 0 or b_T < 1:
        raise ValueError("need I_T >= 0 and b_T >= 1")
    if I_T == 0:
        return []
    full, rem = divmod(I_T, b_T)
    if not needs_adjustment(I_T, b_T):
        return [b_T] * full
    while True:
        m = -(-rem // b_T)
        while m <= rem and (full + m) % 2 != I_T % 2:
            m += 1
        if m <= rem and (full + m) % 2 == I_T % 2:
            break
        full -= 1
        rem += b_T
    if m == 0:
        return [b_T] * full
    base, extra = divmod(rem, m)
    return [b_T] * full + [base + 1] * extra + [base] * (m - extra)
