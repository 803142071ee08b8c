import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbstencil import benchmarks
from tbstencil.autotune import (REG_CAPS, SearchSpace, default_space, enumerate_configs, leaderboard,
                                pick_reg_cap, rank, run_script, tune)
from tbstencil.devices import P100, V100
from tbstencil.errors import EmptySpace
from tbstencil.geometry import GridShape, check_config, check_device_limits, reg_estimate

GRID2 = GridShape((16384, 16384), 1000)
GRID3 = GridShape((512, 512, 512), 1000)


def test_default_space_sizes():
    assert default_space(2).size() == 144 == len(list(default_space(2).points()))
    assert default_space(3).size() == 64 == len(list(default_space(3).points()))
    with pytest.raises(ValueError):
        default_space(4)


def test_wide_stencil_prunes_deep_blocking():
    spec = benchmarks.load("star2d4r")
    space = SearchSpace((1, 16), ((128,),), (256,))
    kept = {c.b_T for c in enumerate_configs(space, spec, V100)}
    # 128 - 2*b_T*4 must stay positive
    assert kept == set(range(1, 16))
    assert 16 not in kept


@pytest.mark.parametrize("name", ["star2d1r", "box2d2r", "j3d27pt", "star3d4r", "gradient2d"])
@pytest.mark.parametrize("dtype", ["float", "double"])
def test_survivors_fit_the_device(name, dtype):
    spec = benchmarks.load(name, dtype)
    for dev in (V100, P100):
        for cfg in enumerate_configs(default_space(spec.dims), spec, dev):
            check_config(spec, cfg)
            check_device_limits(spec, cfg, dev)


def test_top_k():
    spec = benchmarks.load("star2d1r")
    top = tune(spec, GRID2, V100, k=5)
    assert [r.rank for r in top] == [1, 2, 3, 4, 5]
    g = [r.estimate.gflops_model for r in top]
    assert g == sorted(g, reverse=True)
    assert top[0].cfg.b_T >= 8


def test_k_larger_than_survivors():
    spec = benchmarks.load("star2d1r")
    space = SearchSpace((1, 2), ((256,),), (512,))
    assert len(tune(spec, GRID2, V100, space, k=10)) == 2


def test_tie_break_prefers_shallow_small_blocks():
    spec = benchmarks.load("star2d1r")
    # two identical points: both orderings must produce the same list
    cfgs = enumerate_configs(SearchSpace((2, 3), ((256,), (128,)), (512, 256)), spec, V100)
    a = rank(cfgs, spec, GRID2, V100, k=len(cfgs))
    b = rank(list(reversed(cfgs)), spec, GRID2, V100, k=len(cfgs))
    assert [r.cfg for r in a] == [r.cfg for r in b]
    for x, y in zip(a, a[1:]):
        if x.estimate.gflops_model == y.estimate.gflops_model:
            assert (x.cfg.b_T, x.cfg.b_S, x.cfg.h_SN) <= (y.cfg.b_T, y.cfg.b_S, y.cfg.h_SN)


def test_deterministic():
    spec = benchmarks.load("box3d1r")
    assert [r.as_dict() for r in tune(spec, GRID3, V100)] == [r.as_dict() for r in tune(spec, GRID3, V100)]


def test_box3d1r_prefers_shallow_blocking():
    assert tune(benchmarks.load("box3d1r"), GRID3, V100)[0].cfg.b_T <= 4


def test_empty_spaces():
    spec = benchmarks.load("star2d4r")
    with pytest.raises(EmptySpace):
        enumerate_configs(SearchSpace((1, 4), (), (256,)), spec, V100)
    with pytest.raises(EmptySpace, match="infeasible"):
        enumerate_configs(SearchSpace((16, 16), ((128,),), (256,)), spec, V100)


@given(st.integers(1, 300))
def test_reg_cap_choice(est):
    cap = pick_reg_cap(est, REG_CAPS)
    if est > 96:
        assert cap is None
    else:
        assert cap >= est and all(c is None or c < est or c >= cap for c in REG_CAPS)


def test_configs_carry_reg_cap():
    spec = benchmarks.load("j2d5pt")
    for cfg in enumerate_configs(SearchSpace((1, 8), ((256,),), (512,)), spec, V100):
        assert cfg.reg_cap == pick_reg_cap(reg_estimate(4, cfg.b_T, 1), REG_CAPS)


@settings(max_examples=25)
@given(st.sampled_from(benchmarks.NAMES), st.sampled_from(["float", "double"]))
def test_tune_never_returns_unfit(name, dtype):
    spec = benchmarks.load(name, dtype)
    grid = GRID2 if spec.dims == 2 else GRID3
    for r in tune(spec, grid, V100, k=3):
        check_device_limits(spec, r.cfg, V100)


def test_space_round_trip_and_reports():
    sp = default_space(3)
    assert SearchSpace.from_dict(sp.to_dict()) == sp
    top = tune(benchmarks.load("star2d1r"), GRID2, V100, k=2)
    assert leaderboard(top).splitlines()[0].split()[:3] == ["rank", "b_T", "b_S"]
    script = run_script(top, "builtin:star2d1r", "v100", "float")
    assert script.startswith("#!/bin/sh") and script.count("nvcc") == 3
