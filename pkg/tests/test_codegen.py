import json
import re
import shutil
import subprocess

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kernel_checks import GCC, GXX, gxx_syntax_check, phases, register_names, shared_bytes, step_counts, \
    vector_accesses
from tbstencil import benchmarks, classify
from tbstencil.codegen import (KernelSchedule, base_name, generate, kernel_name, render_kernel, render_plan_c,
                               strategy, write_generated)
from tbstencil.errors import InfeasibleConfig
from tbstencil.geometry import BlockingConfig, plan_launches, smem_footprint

J2D5PT = benchmarks.load("j2d5pt")
CFG4 = BlockingConfig(4, (256,), 256)


def test_j2d5pt_structure():
    k = render_kernel(J2D5PT, CFG4, 4)
    head, inner, tail = phases(k)
    assert head and tail and inner
    assert all(step_counts(ln) == (1, 4, 1) for ln in inner)
    assert len(register_names(k)) == 15
    assert shared_bytes(k) == smem_footprint(J2D5PT, 256) == 2048
    assert vector_accesses(k) == []
    assert "STORE(" not in head


def test_snapshot_stable():
    assert generate(J2D5PT, CFG4) == generate(J2D5PT, CFG4)
    assert generate(J2D5PT, CFG4) == generate(benchmarks.load("j2d5pt"), BlockingConfig(4, (256,), 256))


def test_register_count_small():
    k = render_kernel(benchmarks.load("star2d1r"), BlockingConfig(2, (128,), 128), 2)
    assert len(register_names(k)) == 9


def test_single_step_blocking():
    k = render_kernel(J2D5PT, BlockingConfig(1, (64,), 64), 1)
    _, inner, _ = phases(k)
    assert all(step_counts(ln) == (1, 1, 1) for ln in inner)


@pytest.mark.parametrize("name,dtype,b_T,b_S", [
    ("star3d2r", "float", 3, (32, 32)), ("box2d3r", "double", 5, (256,)),
    ("j3d27pt", "double", 2, (16, 16)), ("gradient2d", "float", 6, (128,)),
])
def test_structure_generalises(name, dtype, b_T, b_S):
    spec = benchmarks.load(name, dtype)
    k = render_kernel(spec, BlockingConfig(b_T, b_S, 64), b_T)
    _, inner, _ = phases(k)
    assert len(inner) == KernelSchedule(spec, b_T).period
    assert all(step_counts(ln) == (1, b_T, 1) for ln in inner)
    assert len(register_names(k)) == (b_T + 1) * (2 * spec.radius + 1)
    from math import prod
    assert shared_bytes(k) == smem_footprint(spec, prod(b_S))
    assert vector_accesses(k) == []


GENERAL_SRC = """float A[2][N][M];
for (int t = 0; t < T; t++)
  for (int i = 1; i < N - 1; i++)
    for (int j = 1; j < M - 1; j++)
      A[(t+1)%2][i][j] = A[t%2][i-1][j-1] * A[t%2][i+1][j+1] + 0.5f * A[t%2][i][j];
"""


def test_general_stencils_buffer_whole_window():
    spec = classify(GENERAL_SRC, "gen.c")
    assert strategy(spec) == "general"
    k = render_kernel(spec, BlockingConfig(2, (128,), 128), 2)
    assert "sm_buf[2][3][128]" in k


def test_all_variants_present():
    code = generate(J2D5PT, CFG4)
    assert code.degrees == (4, 3, 2, 1)
    for d in code.degrees:
        assert f"void {kernel_name(J2D5PT, d)}(" in code.kernel
        assert f"case {d}: {kernel_name(J2D5PT, d)}<<<" in code.host
    assert code.kernel.count("sm_load(const") == 1


def test_generate_rejects_infeasible():
    with pytest.raises(InfeasibleConfig):
        generate(benchmarks.load("star2d4r"), BlockingConfig(16, (128,), 128))


def _plan_driver(tmp_path, b_T):
    block = re.search(r"/\* BEGIN_PLAN \*/.*?/\* END_PLAN \*/", render_plan_c(b_T), re.S).group(0)
    src = tmp_path / f"plan{b_T}.c"
    src.write_text(block + """
#include <stdio.h>
int main(void) {
  int deg[256], I_T, n, i;
  for (I_T = 0; I_T <= 60; I_T++) {
    n = tb_plan(I_T, deg);
    for (i = 0; i < n; i++) printf("%d ", deg[i]);
    printf("\\n");
  }
  return 0;
}
""")
    exe = tmp_path / f"plan{b_T}"
    subprocess.run([GCC, "-std=c99", "-Wall", "-Werror", "-o", str(exe), str(src)], check=True)
    return subprocess.run([str(exe)], capture_output=True, text=True, check=True).stdout.splitlines()


@pytest.mark.skipif(GCC is None, reason="gcc not installed")
@pytest.mark.parametrize("b_T", range(1, 13))
def test_emitted_plan_matches_reference(tmp_path, b_T):
    lines = _plan_driver(tmp_path, b_T)
    for I_T, ln in enumerate(lines):
        assert [int(x) for x in ln.split()] == plan_launches(I_T, b_T), (I_T, b_T)


@pytest.mark.skipif(GXX is None, reason="g++ not installed")
@pytest.mark.parametrize("dtype", ["float", "double"])
def test_kernels_compile_as_cxx(tmp_path, dtype):
    # every benchmark in one translation unit, each in its own namespace
    parts = []
    for name in benchmarks.NAMES:
        spec = benchmarks.load(name, dtype)
        cfg = BlockingConfig(2, (64,) if spec.dims == 2 else (32, 32), 32)
        parts.append(f"namespace ns_{base_name(spec)} {{\n{generate(spec, cfg).kernel}}}\n")
    r = gxx_syntax_check("".join(parts), tmp_path)
    assert r.returncode == 0, r.stderr[:4000]


def test_written_files(tmp_path):
    paths = write_generated(J2D5PT, CFG4, tmp_path, {"subcommand": "generate"})
    assert sorted(paths) == ["host", "kernel", "manifest"]
    man = json.loads((tmp_path / f"{base_name(J2D5PT)}_manifest.json").read_text())
    assert man["kernel_variants"] == [kernel_name(J2D5PT, d) for d in (4, 3, 2, 1)]
    assert man["smem_bytes"] == 2048
    assert (tmp_path / "j2d5pt_host.cu").read_text().startswith('#include "j2d5pt_kernel.cu"')
    assert "manifest" not in write_generated(J2D5PT, CFG4, tmp_path / "plain")


@pytest.mark.skipif(shutil.which("nvcc") is None, reason="nvcc not installed")
def test_nvcc_compiles(tmp_path):
    paths = write_generated(J2D5PT, CFG4, tmp_path)
    subprocess.run(["nvcc", "-c", "-o", str(tmp_path / "h.o"), paths["host"]], check=True)


@given(st.sampled_from(benchmarks.NAMES), st.integers(1, 5), st.integers(0, 40))
def test_schedule_shape(name, d, extra):
    spec = benchmarks.load(name)
    ks = KernelSchedule(spec, d)
    W = 2 * spec.radius + 1
    assert ks.head == 2 * d * spec.radius
    assert ks.period == (W if d % 2 == 0 else 2 * W)
    s = ks.head + extra
    kinds = [op.kind for op in ks.ops(s)]
    assert kinds == ["LOAD"] + ["CALC"] * d + ["STORE"]
    # steps one period apart issue identical slot and parity patterns
    a = [(o.kind, o.T, o.dst, o.srcs, o.accs, o.parity) for o in ks.ops(s)]
    b = [(o.kind, o.T, o.dst, o.srcs, o.accs, o.parity) for o in ks.ops(s + ks.period)]
    assert a == b
