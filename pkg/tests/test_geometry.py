from math import ceil

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tbstencil import benchmarks
from tbstencil.devices import P100, V100
from tbstencil.errors import BlockTooLarge, ExceedsDeviceLimits, GeometryMismatch, InfeasibleConfig
from tbstencil.geometry import (BlockingConfig, GridShape, check_config, check_device_limits, derive,
                                device_limit_violations, needs_adjustment, plan_launches, reg_estimate,
                                smem_footprint)

STAR2D1R = benchmarks.load("star2d1r")


def test_star2d1r_published_config():
    g = derive(STAR2D1R, BlockingConfig(10, (256,), 256), GridShape((16384, 16384), 1000))
    assert g.n_thr == 256
    assert g.compute_region == (236,)
    assert g.n_tb == 70
    assert g.n_tb_prime == 64 * 70 == 4480
    assert g.stream_overlap_subplanes == 2 * sum(range(1, 11)) == 110
    assert g.valid_region(0) == (256,) and g.valid_region(10) == (236,)


def test_small_config():
    g = derive(STAR2D1R, BlockingConfig(1, (8,), 4), GridShape((4, 12), 1))
    assert g.compute_region == (6,) and g.n_tb == 2


def test_infeasible():
    spec = benchmarks.load("star2d2r")
    with pytest.raises(InfeasibleConfig) as ei:
        check_config(spec, BlockingConfig(4, (16,), 16))
    assert "16 - 2*4*2 = 0" in str(ei.value)


def test_block_too_large():
    with pytest.raises(BlockTooLarge):
        derive(benchmarks.load("star3d1r"), BlockingConfig(1, (64, 32), 64), GridShape((64,) * 3, 1))


def test_dimension_mismatch():
    with pytest.raises(GeometryMismatch):
        check_config(STAR2D1R, BlockingConfig(1, (16, 16), 16))
    with pytest.raises(GeometryMismatch):
        derive(STAR2D1R, BlockingConfig(1, (16,), 16), GridShape((8, 8, 8), 1))


def test_config_dict_round_trip():
    c = BlockingConfig(3, (32, 16), 128, 64)
    assert BlockingConfig.from_dict(c.to_dict()) == c
    assert BlockingConfig.from_dict({"b_T": 2, "b_S": 256, "h_SN": 128}).b_S == (256,)


# shared-memory footprint rows
def test_smem_table_rows():
    assert smem_footprint(benchmarks.load("star3d1r"), 32 * 32) == 8192
    assert smem_footprint(benchmarks.load("box2d1r"), 256) == 2048
    # diagonal-free non-linear update: first row
    assert smem_footprint(benchmarks.load("gradient2d", "double"), 256) == 4096


def test_smem_general_row():
    src = """float A[2][N][M];
for (int t = 0; t < T; t++)
  for (int i = 1; i < N - 1; i++)
    for (int j = 1; j < M - 1; j++)
      A[(t+1)%2][i][j] = A[t%2][i-1][j-1] * A[t%2][i+1][j+1] + A[t%2][i][j];
"""
    from tbstencil.ir import classify

    s = classify(src, word_size=8)
    assert not s.associative and not s.diagonal_free
    assert smem_footprint(s, 256) == 2 * 256 * 3 * 8 == 12288


def test_reg_estimate_examples():
    assert reg_estimate(4, 4, 1) == 36
    assert reg_estimate(8, 4, 1) == 58
    assert reg_estimate(4, 1, 1) == 24
    assert reg_estimate(4, 16, 4) == 180
    assert reg_estimate(8, 16, 4) == 334


def test_device_limits():
    s4 = benchmarks.load("star2d4r")
    assert device_limit_violations(s4, BlockingConfig(16, (256,), 256), V100) == []
    s8 = benchmarks.load("star2d4r", "double")
    with pytest.raises(ExceedsDeviceLimits) as ei:
        check_device_limits(s8, BlockingConfig(16, (256,), 256), V100)
    assert "334" in str(ei.value)
    # 1024 threads at 86 registers do not fit 65536 per SM
    j = benchmarks.load("j2d5pt", "double")
    assert reg_estimate(8, 8, 1) == 86
    assert device_limit_violations(j, BlockingConfig(8, (1024,), 256), V100)
    assert device_limit_violations(j, BlockingConfig(4, (1024,), 256), V100) == []


def test_smem_limit():
    box = benchmarks.load("box3d4r", "double")
    # associative: 2 * 1024 * 8 = 16 KB fits; a general stencil would not on P100
    assert device_limit_violations(box, BlockingConfig(1, (32, 32), 128), P100) == []


@given(st.integers(1, 16), st.integers(1, 4))
def test_overlap_closed_form(b_T, rad):
    lit = 2 * sum(rad * (b_T - T) for T in range(b_T))
    g = derive(STAR2D1R if rad == 1 else benchmarks.load(f"star2d{rad}r"),
               BlockingConfig(b_T, (2 * b_T * rad + 1,), 8), GridShape((8, 8), 1))
    assert g.stream_overlap_subplanes == lit == b_T * (b_T + 1) * rad


@given(st.integers(1, 6), st.integers(1, 2), st.integers(1, 40), st.integers(1, 30))
def test_coverage_and_valid_region(b_T, rad, extra, I):
    b = 2 * b_T * rad + extra
    spec = benchmarks.load(f"star2d{rad}r")
    g = derive(spec, BlockingConfig(b_T, (b,), 4), GridShape((4, I), 1))
    c = g.compute_region[0]
    assert g.n_tb * c >= I > (g.n_tb - 1) * c      # covered, no spare block
    starts = [k * c for k in range(g.n_tb)]
    assert all(b1 - a1 == c for a1, b1 in zip(starts, starts[1:]))  # disjoint, adjacent
    for T in range(b_T):
        assert g.valid_region(T + 1)[0] == g.valid_region(T)[0] - 2 * rad


# launch plan
@pytest.mark.parametrize("I_T,b_T,plan", [
    (1000, 4, [4] * 250),
    (7, 4, [4, 2, 1]),
    (4, 4, [2, 2]),
    (2, 4, [1, 1]),
    (3, 4, [3]),
    (12, 4, [4, 4, 2, 2]),
    (7, 3, [3, 3, 1]),
    (8, 3, [3, 3, 1, 1]),
    (0, 5, []),
])
def test_plan_examples(I_T, b_T, plan):
    assert plan_launches(I_T, b_T) == plan


def test_trigger():
    assert not needs_adjustment(1000, 4)
    assert needs_adjustment(7, 4)
    assert needs_adjustment(4, 4)          # one launch, wrong parity
    assert needs_adjustment(6, 3)          # quotient 2 vs b_T parity 1
    assert plan_launches(6, 3) == [3, 3]   # ...but the plain plan already has the right parity


@given(st.integers(0, 200), st.integers(1, 16))
def test_plan_invariants(I_T, b_T):
    p = plan_launches(I_T, b_T)
    assert sum(p) == I_T
    assert len(p) % 2 == I_T % 2
    assert all(1 <= d <= b_T for d in p)
    assert p == sorted(p, reverse=True)
    if not needs_adjustment(I_T, b_T):
        assert p == [b_T] * (I_T // b_T)


@given(st.integers(1, 200), st.integers(1, 16))
def test_plan_uses_ceiling_launches_or_one_more(I_T, b_T):
    p = plan_launches(I_T, b_T)
    assert len(p) in (ceil(I_T / b_T), ceil(I_T / b_T) + 1)
