"""CUDA kernel and host code generation.

A launch of temporal degree ``d`` is a pipeline over the sub-planes of one
stream block.  Step ``s`` loads plane ``p0 + s`` (T = 0) and lets every
time-step T handle the plane ``T*rad`` behind its predecessor, so all d
updates of a plane happen while it is resident.  The step's operations are
one LOAD, one CALC per T = 1..d and one STORE of the T = d result.

Each T keeps its last 2*rad+1 sub-planes in registers ``reg_T_M`` with the
slot ``M`` fixed by plane index modulo 2*rad+1, so no values are shifted
between registers; instead the macro arguments rotate.  Shared memory is
double-buffered and the buffer parity of each CALC is a compile-time
constant.

``KernelSchedule`` is the single description of that sequence: the text
renderer emits it, and ``simulator.run_blocked`` executes it.
"""

import json
import os
from dataclasses import dataclass
from math import prod

from .frontend import Access, BinOp, Call, Name, Neg, Num, _affine
from .geometry import check_config, plan_launches, smem_footprint

STRATEGIES = ("diagonal_free", "associative", "general")


def strategy(spec):
    """How upper/lower sub-planes reach a thread.

    diagonal_free: only the thread's own column is read off-plane, so those
    values come straight from registers and one plane is staged in shared
    memory.  associative: each loaded plane is staged once and added into
    the 2*rad+1 partial sums it contributes to.  general: all 2*rad+1 input
    planes are staged.
    """
    if spec.diagonal_free:
        return "diagonal_free"
    if spec.associative:
        return "associative"
    return "general"


@dataclass(frozen=True)
class Op:
    kind: str           # LOAD | CALC | STORE
    T: int
    dst: int | None     # register slot written (reg_T_dst)
    srcs: tuple = ()    # register slots read from reg_{T-1} (or reg_T for STORE)
    accs: tuple = ()    # associative: reg_T slots of the 2*rad+1 partial sums
    parity: int | None = None


class KernelSchedule:
    """Static operation sequence of a degree-``d`` launch."""

    def __init__(self, spec, d):
        self.spec = spec
        self.d = d
        self.rad = spec.radius
        self.W = 2 * self.rad + 1
        self.strategy = strategy(spec)
        # step at which T = d first reaches the stream block's own planes
        self.head = 2 * d * self.rad
        # register slots repeat every W steps; buffer parity every 2 steps when d is odd
        self.period = self.W if d % 2 == 0 else 2 * self.W

    def slot(self, k):
        return k % self.W

    def parity(self, s, T):
        return (s * self.d + T - 1) % 2

    def first_step(self, T):
        """Earliest step at which T can have work (unclipped stream block)."""
        if T == 0:
            return 0
        if self.strategy == "associative":
            return 2 * (T - 1) * self.rad
        return 2 * T * self.rad

    def ops(self, s):
        rad, d = self.rad, self.d
        out = [Op("LOAD", 0, self.slot(s))]
        for T in range(1, d + 1):
            if s < self.first_step(T):
                continue
            base = s - T * rad
            if self.strategy == "associative":
                out.append(Op("CALC", T, self.slot(base), srcs=(self.slot(base + rad),),
                              accs=tuple(self.slot(base + j) for j in range(self.W)),
                              parity=self.parity(s, T)))
            else:
                out.append(Op("CALC", T, self.slot(base),
                              srcs=tuple(self.slot(base - rad + j) for j in range(self.W)),
                              parity=self.parity(s, T)))
        if s >= self.head:
            out.append(Op("STORE", d, None, srcs=(self.slot(s - d * rad),)))
        return out

    def n_steps(self, stream_len):
        return stream_len + self.head


# ------------------------------------------------------------------ text


def _ctype(spec):
    return "float" if spec.word_size == 4 else "double"


def _lit(value, spec):
    s = repr(float(value))
    return s + "f" if spec.word_size == 4 else s


class _Names:
    """Identifiers that depend on the stencil's rank."""

    def __init__(self, spec, cfg):
        self.nd = spec.dims
        self.b = cfg.b_S

    def shared_index(self, ob):
        # linear offset of an in-plane neighbour inside the block's sub-plane
        if self.nd == 2:
            return ob[0]
        return ob[0] * self.b[1] + ob[1]

    def tid_expr(self, ob):
        k = self.shared_index(ob)
        if k == 0:
            return "tid"
        return f"tid {'+' if k > 0 else '-'} {abs(k)}"


def _render_expr(e, access):
    """C text of the update expression with accesses replaced by ``access``."""
    if isinstance(e, Num):
        return e.text
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Access):
        return access(e)
    if isinstance(e, Neg):
        return f"(-{_render_expr(e.operand, access)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(_render_expr(a, access) for a in e.args)})"
    return f"({_render_expr(e.left, access)} {e.op} {_render_expr(e.right, access)})"


def access_offset(acc, env):
    """Spatial offset of a neighbour read, in loop order."""
    return tuple(_affine(sub, env)[1] for sub in acc.index[1:])


def base_name(spec):
    return "".join(ch if ch.isalnum() else "_" for ch in spec.name)


def kernel_name(spec, d):
    return f"{base_name(spec)}_kernel_bt{d}"


def render_preamble(spec):
    """Scalar shared-memory accessors; every shared access goes through them."""
    ct = _ctype(spec)
    return (f"/* generated stencil kernels for {spec.name} */\n"
            f"__device__ __forceinline__ {ct} sm_load(const {ct} *buf, int idx) {{ return buf[idx]; }}\n"
            f"__device__ __forceinline__ void sm_store({ct} *buf, int idx, {ct} v) {{ buf[idx] = v; }}\n")


def render_kernel(spec, cfg, d):
    """CUDA source of the degree-``d`` kernel for this config."""
    check_config(spec, cfg)
    sch = KernelSchedule(spec, d)
    rad, W, nd = spec.radius, sch.W, spec.dims
    ct = _ctype(spec)
    nm = _Names(spec, cfg)
    n_thr = prod(cfg.b_S)
    strat = sch.strategy
    L = []
    emit = L.append
    bs_txt = "x".join(str(b) for b in cfg.b_S)
    emit(f"/* {spec.name}: {d} time-steps per launch, b_S = {bs_txt}, h_SN = {cfg.h_SN}, {ct}, "
         f"{strat.replace('_', '-')} schedule */")
    emit(f"#define RAD {rad}")
    emit(f"#define BT {d}")
    for i, b in enumerate(cfg.b_S):
        emit(f"#define BS{i + 1} {b}")
        emit(f"#define CR{i + 1} (BS{i + 1} - 2 * BT * RAD)")
    emit(f"#define HSN {cfg.h_SN}")
    for name, val in spec.constants:
        emit(f"#define {name} ({_lit(val, spec)})")
    emit("")
    dims_args = ", ".join(f"int I{i}" for i in range(nd))
    emit(f"__global__ void {kernel_name(spec, d)}(const {ct} *__restrict__ src, "
         f"{ct} *__restrict__ dst, {dims_args})")
    emit("{")
    if nd == 2:
        emit("  const int tid = threadIdx.x;")
        emit("  const int k1 = blockIdx.x;")
        emit("  const int x1 = k1 * CR1 - BT * RAD + (int)threadIdx.x;")
        emit("  const int s0 = blockIdx.y * HSN;")
    else:
        emit("  const int tid = threadIdx.y * BS2 + threadIdx.x;")
        emit("  const int k1 = blockIdx.y, k2 = blockIdx.x;")
        emit("  const int x1 = k1 * CR1 - BT * RAD + (int)threadIdx.y;")
        emit("  const int x2 = k2 * CR2 - BT * RAD + (int)threadIdx.x;")
        emit("  const int s0 = blockIdx.z * HSN;")
    emit("  const int s1 = min(I0, s0 + HSN);")
    emit("  const int p0 = s0 - BT * RAD;")
    emit(f"  const int nsteps = (s1 - s0) + {sch.head};")
    xs = [f"x{i}" for i in range(1, nd)]
    emit("  const bool in_array = " + " && ".join(f"{x} >= -RAD && {x} < I{i} + RAD"
                                                  for i, x in enumerate(xs, 1)) + ";")
    emit("  const bool interior = " + " && ".join(f"{x} >= 0 && {x} < I{i}"
                                                  for i, x in enumerate(xs, 1)) + ";")
    emit("  const bool owned = interior && " + " && ".join(
        f"{x} >= k{i} * CR{i} && {x} < k{i} * CR{i} + CR{i}" for i, x in enumerate(xs, 1)) + ";")
    for T in range(1, d + 1):
        e = d - T
        emit(f"  const bool comp{T} = interior && " + " && ".join(
            f"{x} >= k{i} * CR{i} - {e} * RAD && {x} < k{i} * CR{i} + CR{i} + {e} * RAD"
            for i, x in enumerate(xs, 1)) + ";")
    if nd == 2:
        emit("  const int E1 = I1 + 2 * RAD;")
        emit("#define GIDX(p) (((p) + RAD) * E1 + x1 + RAD)")
    else:
        emit("  const int E1 = I1 + 2 * RAD, E2 = I2 + 2 * RAD;")
        emit("#define GIDX(p) ((((p) + RAD) * E1 + x1 + RAD) * E2 + x2 + RAD)")
    if strat == "general":
        emit(f"  __shared__ {ct} sm_buf[2][{W}][{n_thr}];")
    else:
        emit(f"  __shared__ {ct} sm_buf[2][{n_thr}];")
    for T in range(d + 1):
        emit("  " + ct + " " + ", ".join(f"reg_{T}_{m}" for m in range(W)) + ";")
    emit("  int h;")
    emit("")
    emit("#define LO(T) max(-RAD, s0 - (BT - (T)) * RAD)")
    emit("#define HI(T) min(I0 + RAD, s1 + (BT - (T)) * RAD)")
    emit("#define LOAD(s, out) do { const int p = p0 + (s); "
         "if (p >= LO(0) && p < HI(0) && in_array) out = src[GIDX(p)]; } while (0)")

    def access_diag(acc):
        o = access_offset(acc, spec.env)
        if any(o[1:]):
            return f"sm_load(buf, {nm.tid_expr(o[1:])})"
        return f"(w{rad + o[0]})"

    def access_general(acc):
        o = access_offset(acc, spec.env)
        if not any(o[1:]):
            return f"(w{rad + o[0]})"
        return f"sm_load(buf[{rad + o[0]}], {nm.tid_expr(o[1:])})"

    cont = " \\"
    if strat in ("diagonal_free", "general"):
        wargs = ", ".join(f"w{j}" for j in range(W))
        fn = access_diag if strat == "diagonal_free" else access_general
        emit(f"#define EXPR(buf, {wargs}) {_render_expr(spec.update, fn)}")
        emit(f"#define CALC(T, comp, s, par, out, {wargs}) do {{{cont}")
        emit(f"    const int q = p0 + (s) - (T) * RAD;{cont}")
        emit(f"    const bool live = q >= LO(T) && q < HI(T);{cont}")
        if strat == "diagonal_free":
            emit(f"    if (live) sm_store(sm_buf[par], tid, w{rad});{cont}")
        else:
            for j in range(W):
                emit(f"    if (live) sm_store(sm_buf[par][{j}], tid, w{j});{cont}")
        emit(f"    __syncthreads();{cont}")
        emit(f"    if (live) {{{cont}")
        emit(f"      if (q >= 0 && q < I0 && comp) out = EXPR(sm_buf[par], {wargs});{cont}")
        emit(f"      else out = w{rad};{cont}")
        emit("    } } while (0)")
        for T in range(1, d + 1):
            emit(f"#define CALC{T}(s, par, out, {wargs}) CALC({T}, comp{T}, s, par, out, {wargs})")
    else:
        lin = spec.linear
        aargs = ", ".join(f"a{j}" for j in range(W))
        for j in range(W):
            os_ = rad - j  # stream offset of the loaded plane relative to target r - rad + j
            terms = []
            for c, o in lin.terms:
                if o[0] != os_:
                    continue
                src = "own" if not any(o[1:]) else f"sm_load(buf, {nm.tid_expr(o[1:])})"
                terms.append(f"{_lit(c, spec)} * {src}")
            body = " + ".join(terms) if terms else _lit(0, spec)
            emit(f"#define PART{j}(buf, own) ({body})")
        emit(f"#define CALC(T, comp, s, par, own, {aargs}) do {{{cont}")
        emit(f"    const int r = p0 + (s) - ((T) - 1) * RAD;{cont}")
        emit(f"    const bool live = r >= LO((T) - 1) && r < HI((T) - 1);{cont}")
        emit(f"    if (live) sm_store(sm_buf[par], tid, own);{cont}")
        emit(f"    __syncthreads();{cont}")
        emit(f"    if (live) {{{cont}")
        for j in reversed(range(W)):
            emit(f"      {{ const int q = r - RAD + {j};{cont}")
            emit(f"        if (q >= LO(T) && q < HI(T)) {{{cont}")
            emit(f"          const bool cq = comp && q >= 0 && q < I0;{cont}")
            if j == W - 1:
                emit(f"          a{j} = cq ? PART{j}(sm_buf[par], own) : own;{cont}")
            else:
                emit(f"          if (cq) a{j} += PART{j}(sm_buf[par], own);{cont}")
            if j == rad:
                emit(f"          if (!cq) a{j} = own;{cont}")
            if j == 0 and lin.divisor is not None:
                emit(f"          if (cq) a{j} = a{j} / {_lit(lin.divisor, spec)};{cont}")
            emit(f"        }} }}{cont}")
        emit("    } } while (0)")
        for T in range(1, d + 1):
            emit(f"#define CALC{T}(s, par, own, {aargs}) CALC({T}, comp{T}, s, par, own, {aargs})")
    emit("#define STORE(s, v) do { const int q = p0 + (s) - BT * RAD; "
         "if (q >= s0 && q < s1 && owned) dst[GIDX(q)] = v; } while (0)")
    emit("")

    def step_text(s, svar):
        parts = []
        for op in sch.ops(s):
            if op.kind == "LOAD":
                parts.append(f"LOAD({svar}, reg_0_{op.dst});")
            elif op.kind == "STORE":
                parts.append(f"STORE({svar}, reg_{d}_{op.srcs[0]});")
            elif strat == "associative":
                accs = ", ".join(f"reg_{op.T}_{a}" for a in op.accs)
                parts.append(f"CALC{op.T}({svar}, {op.parity}, reg_{op.T - 1}_{op.srcs[0]}, {accs});")
            else:
                ws = ", ".join(f"reg_{op.T - 1}_{w}" for w in op.srcs)
                parts.append(f"CALC{op.T}({svar}, {op.parity}, reg_{op.T}_{op.dst}, {ws});")
        return " ".join(parts)

    def calc_parities(steps):
        return [op.parity for s in steps for op in sch.ops(s) if op.kind == "CALC"]

    emit("  /* head: fill the pipeline */")
    last = None
    for s in range(sch.head):
        pars = calc_parities([s])
        if pars and last is not None and pars[0] == last:
            emit("  __syncthreads();")
        emit(f"  {step_text(s, str(s))}")
        if pars:
            last = pars[-1]
    body = list(range(sch.head, sch.head + sch.period))
    body_pars = calc_parities(body)
    emit("  /* inner: one step per sub-plane, registers rotate through the macro arguments */")
    if last is not None and body_pars and body_pars[0] == last:
        emit("  __syncthreads();")
    emit(f"  for (h = {sch.head}; h + {sch.period} <= nsteps; h += {sch.period}) {{")
    for k, s in enumerate(body):
        emit(f"    {step_text(s, f'h + {k}' if k else 'h')}")
    emit("  }")
    emit("  /* tail: remaining steps of a partial period */")
    for k, s in enumerate(body[:-1]):
        emit(f"  if (h + {k} < nsteps) {{ {step_text(s, f'h + {k}' if k else 'h')} }}")
    emit("}")
    for macro in ("LO", "HI", "LOAD", "CALC", "STORE", "GIDX", "EXPR", "RAD", "BT", "HSN"):
        emit(f"#undef {macro}")
    for i in range(1, nd):
        emit(f"#undef BS{i}")
        emit(f"#undef CR{i}")
    for name, _ in spec.constants:
        emit(f"#undef {name}")
    for T in range(1, d + 1):
        emit(f"#undef CALC{T}")
    if strat == "associative":
        for j in range(W):
            emit(f"#undef PART{j}")
    return "\n".join(L) + "\n"


def render_plan_c(b_T):
    """Self-contained C function computing the launch degrees for I_T steps."""
    return f"""/* BEGIN_PLAN */
static int tb_plan(int I_T, int *deg)
{{
  const int bt = {b_T};
  int n = 0, full, rem, m, i;
  if (I_T <= 0) return 0;
  full = I_T / bt;
  rem = I_T % bt;
  if (rem == 0 && full % 2 == bt % 2) {{
    for (i = 0; i < full; i++) deg[n++] = bt;
    return n;
  }}
  /* final-block adjustment: total I_T steps, launch count of I_T's parity */
  for (;;) {{
    m = (rem + bt - 1) / bt;
    while (m <= rem && (full + m) % 2 != I_T % 2) m++;
    if (m <= rem) break;
    full--;
    rem += bt;
  }}
  for (i = 0; i < full; i++) deg[n++] = bt;
  for (i = 0; i < m; i++) deg[n++] = rem / m + (i < rem % m ? 1 : 0);
  return n;
}}
/* END_PLAN */
"""


def render_host(spec, cfg):
    """Host driver: launch plan plus the kernel launches."""
    check_config(spec, cfg)
    ct = _ctype(spec)
    nd = spec.dims
    dims_args = ", ".join(f"int I{i}" for i in range(nd))
    dims_pass = ", ".join(f"I{i}" for i in range(nd))
    L = [f"/* host driver for {spec.name}; buffers hold the interior plus a ring of {spec.radius} */",
         "#include <stdlib.h>", ""]
    L.append(render_plan_c(cfg.b_T))
    L.append(f"void run_{base_name(spec)}({ct} *buf0, {ct} *buf1, {dims_args}, int I_T)")
    L.append("{")
    L.append(f"  {ct} *bufs[2] = {{buf0, buf1}};")
    L.append(f"  int *deg = (int *)malloc(sizeof(int) * (I_T / {cfg.b_T} + {cfg.b_T} + 2));")
    L.append("  const int n = tb_plan(I_T, deg);")
    if nd == 2:
        L.append(f"  dim3 threads({cfg.b_S[0]});")
    else:
        L.append(f"  dim3 threads({cfg.b_S[1]}, {cfg.b_S[0]});")
    L.append("  for (int k = 0; k < n; k++) {")
    L.append("    const int d = deg[k];")
    L.append(f"    const int nsb = (I0 + {cfg.h_SN} - 1) / {cfg.h_SN};")
    for i, b in enumerate(cfg.b_S, 1):
        L.append(f"    const int nb{i} = (I{i} + {b} - 2 * d * {spec.radius} - 1) / ({b} - 2 * d * {spec.radius});")
    if nd == 2:
        L.append("    dim3 blocks(nb1, nsb);")
    else:
        L.append("    dim3 blocks(nb2, nb1, nsb);")
    L.append("    switch (d) {")
    for d in range(cfg.b_T, 0, -1):
        L.append(f"    case {d}: {kernel_name(spec, d)}<<<blocks, threads>>>"
                 f"(bufs[k % 2], bufs[(k + 1) % 2], {dims_pass}); break;")
    L.append("    }")
    L.append("  }")
    L.append("  /* the result is in bufs[n % 2], and n has the parity of I_T */")
    L.append("  free(deg);")
    L.append("}")
    return "\n".join(L) + "\n"


@dataclass(frozen=True)
class GeneratedCode:
    kernel: str      # every degree variant 1..b_T
    host: str
    degrees: tuple   # variants included
    smem_bytes: int


def generate(spec, cfg):
    check_config(spec, cfg)
    variants = tuple(range(cfg.b_T, 0, -1))
    kern = "\n".join([render_preamble(spec)] + [render_kernel(spec, cfg, d) for d in variants])
    return GeneratedCode(kern, render_host(spec, cfg), variants, smem_footprint(spec, prod(cfg.b_S)))


def write_generated(spec, cfg, outdir, manifest=None):
    """Write kernel, host and manifest files; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    code = generate(spec, cfg)
    base = base_name(spec)
    paths = {
        "kernel": os.path.join(outdir, f"{base}_kernel.cu"),
        "host": os.path.join(outdir, f"{base}_host.cu"),
    }
    with open(paths["kernel"], "w") as fh:
        fh.write(code.kernel)
    with open(paths["host"], "w") as fh:
        fh.write(f'#include "{base}_kernel.cu"\n' + code.host)
    if manifest is not None:
        paths["manifest"] = os.path.join(outdir, f"{base}_manifest.json")
        manifest = dict(manifest)
        manifest["outputs"] = [paths["kernel"], paths["host"], paths["manifest"]]
        manifest["kernel_variants"] = [kernel_name(spec, d) for d in code.degrees]
        manifest["smem_bytes"] = code.smem_bytes
        with open(paths["manifest"], "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return paths


def example_plan(I_T, b_T):
    """Reference launch plan the emitted tb_plan must reproduce."""
    return plan_launches(I_T, b_T)
