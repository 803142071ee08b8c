"""Model-driven configuration search.

Every point of a small Cartesian space (b_T x b_S x h_SN) is checked for
feasibility and device limits, predicted with the performance model, and
the best few are reported.  No kernel is ever run.
"""

from dataclasses import dataclass, field
from itertools import product
from math import prod

from .errors import EmptySpace, ExceedsDeviceLimits, InfeasibleConfig
from .geometry import BlockingConfig, check_config, check_device_limits, reg_estimate
from .perfmodel import predict

REG_CAPS = (None, 32, 64, 96)


@dataclass(frozen=True)
class SearchSpace:
    b_T_range: tuple                 # inclusive (lo, hi)
    b_S_choices: tuple               # tuples, one entry per blocked dim
    h_SN_choices: tuple
    reg_caps: tuple = field(default=REG_CAPS)

    def points(self):
        lo, hi = self.b_T_range
        for b_T, b_S, h in product(range(lo, hi + 1), self.b_S_choices, self.h_SN_choices):
            yield b_T, tuple(b_S), h

    def size(self):
        lo, hi = self.b_T_range
        return (hi - lo + 1) * len(self.b_S_choices) * len(self.h_SN_choices)

    def to_dict(self):
        return {"b_T_range": list(self.b_T_range), "b_S_choices": [list(b) for b in self.b_S_choices],
                "h_SN_choices": list(self.h_SN_choices), "reg_caps": list(self.reg_caps)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["b_T_range"]), tuple(tuple(b) if isinstance(b, (list, tuple)) else (b,)
                                                for b in d["b_S_choices"]),
                   tuple(d["h_SN_choices"]), tuple(d.get("reg_caps", REG_CAPS)))


def default_space(dims):
    if dims == 2:
        return SearchSpace((1, 16), ((128,), (256,), (512,)), (256, 512, 1024))
    if dims == 3:
        return SearchSpace((1, 8), ((16, 16), (32, 16), (32, 32), (64, 16)), (128, 256))
    raise ValueError(f"no default search space for {dims}D")


def pick_reg_cap(estimate, caps):
    """Smallest listed cap that holds the estimate; None when none does."""
    fitting = [c for c in caps if c is not None and c >= estimate]
    return min(fitting) if fitting else None


def enumerate_configs(space, spec, dev):
    """Feasible configs of the space that fit on the device."""
    if space.size() == 0:
        raise EmptySpace("search space has no points")
    out = []
    for b_T, b_S, h in space.points():
        cfg = BlockingConfig(b_T, b_S, h)
        try:
            check_config(spec, cfg)
            check_device_limits(spec, cfg, dev)
        except (InfeasibleConfig, ExceedsDeviceLimits):
            continue
        cap = pick_reg_cap(reg_estimate(spec.word_size, b_T, spec.radius), space.reg_caps)
        out.append(BlockingConfig(b_T, b_S, h, cap))
    if not out:
        raise EmptySpace(f"all {space.size()} configurations are infeasible for {spec.name} on {dev.name}")
    return out


@dataclass(frozen=True)
class RankedConfig:
    rank: int
    cfg: BlockingConfig
    estimate: object    # perfmodel.Prediction

    def as_dict(self):
        e = self.estimate
        return {"rank": self.rank, "config": self.cfg.to_dict(), "gflops_model": e.gflops_model,
                "time_model": e.time_model, "bottleneck": e.bottleneck, "eff_sm": e.eff_sm}


def _order_key(item):
    cfg, est = item
    return (-est.gflops_model, cfg.b_T, prod(cfg.b_S), cfg.h_SN)


def rank(configs, spec, grid, dev, k=5, eff_sm_mode="nsm"):
    scored = [(cfg, predict(spec, cfg, grid, dev, eff_sm_mode)) for cfg in configs]
    scored.sort(key=_order_key)
    return [RankedConfig(i + 1, cfg, est) for i, (cfg, est) in enumerate(scored[:k])]


def tune(spec, grid, dev, space=None, k=5, eff_sm_mode="nsm"):
    space = space or default_space(spec.dims)
    return rank(enumerate_configs(space, spec, dev), spec, grid, dev, k, eff_sm_mode)


def leaderboard(ranked):
    lines = [f"{'rank':>4}  {'b_T':>3}  {'b_S':>7}  {'h_SN':>5}  {'regs':>4}  {'GFLOP/s':>9}  bottleneck"]
    for r in ranked:
        c = r.cfg
        lines.append(f"{r.rank:>4}  {c.b_T:>3}  {'x'.join(map(str, c.b_S)):>7}  {c.h_SN:>5}  "
                     f"{c.reg_cap if c.reg_cap is not None else '-':>4}  "
                     f"{r.estimate.gflops_model:>9.1f}  {r.estimate.bottleneck}")
    return "\n".join(lines)


def run_script(ranked, source, device, dtype):
    """Shell commands that build and time the ranked configs on a real GPU."""
    lines = ["#!/bin/sh", "# build and time each ranked configuration; needs nvcc and a GPU", "set -e"]
    for r in ranked:
        cfg = r.cfg.to_dict()
        cfg_txt = str(cfg).replace("'", '"').replace("None", "null")
        out = f"tuned_rank{r.rank}"
        lines.append(f"python3 -m tbstencil generate {source} --config '{cfg_txt}' --dtype {dtype} "
                     f"--device {device} --out {out}")
        cap = f" -maxrregcount={r.cfg.reg_cap}" if r.cfg.reg_cap else ""
        lines.append(f"nvcc -O3 -use_fast_math{cap} -c {out}/*_host.cu -o {out}/host.o")
    return "\n".join(lines) + "\n"
