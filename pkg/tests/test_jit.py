import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbstencil import _jit, benchmarks
from tbstencil import simulator as sim

needs_numba = pytest.mark.skipif(not _jit.JIT_AVAILABLE, reason="numba not installed")


@needs_numba
@settings(max_examples=40)
@given(st.sampled_from([2, 3]), st.integers(1, 2), st.integers(1, 4), st.data())
def test_census_variants_agree(dims, rad, d, data):
    I_S = tuple(data.draw(st.integers(1, 14)) for _ in range(dims))
    b_S = tuple(2 * d * rad + data.draw(st.integers(1, 5)) for _ in range(dims - 1))
    h = data.draw(st.integers(1, 16))
    degrees = data.draw(st.lists(st.integers(1, d), min_size=0, max_size=3))
    a = _jit.census_bruteforce(I_S, b_S, rad, h, degrees, use_jit=True)
    b = _jit.census_bruteforce(I_S, b_S, rad, h, degrees, use_jit=False)
    assert (np.asarray(a) == np.asarray(b)).all()


@needs_numba
@pytest.mark.parametrize("name", ["j2d5pt", "box2d2r", "star2d4r", "star3d2r", "j3d27pt"])
@pytest.mark.parametrize("dtype", ["float", "double"])
def test_sweep_variants_bit_identical(name, dtype):
    spec = benchmarks.load(name, dtype)
    mode = "f32" if dtype == "float" else "f64"
    I_S = (20, 17) if spec.dims == 2 else (9, 8, 7)
    g = sim.make_grid(I_S, spec.radius, mode, 5)
    a = sim.run_naive(spec, g, 3, use_jit=True)
    b = sim.run_naive(spec, g, 3, use_jit=False)
    assert np.array_equal(a.values, b.values)


def test_env_flag_disables_jit():
    code = "from tbstencil import _jit; print(_jit.JIT_ENABLED)"
    env = dict(os.environ, TBSTENCIL_NO_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
