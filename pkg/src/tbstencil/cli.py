"""Command line: analyze, predict, tune, generate, verify.

Global flags may appear before or after the subcommand.  Exit status is 0
on success, 1 for a domain error (bad source, infeasible config, failed
verification), 2 for a usage error.
"""

import argparse
import dataclasses
import datetime
import json
import os
import sys
from importlib import metadata

from . import autotune, benchmarks, codegen, simulator
from .devices import get_device
from .errors import ConfigError, TbStencilError
from .geometry import BlockingConfig, GridShape, derive
from .ir import FlopMap, classify
from .perfmodel import dtype_key, predict, smem_reads_per_thread


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "0+unknown"


# ------------------------------------------------------------ inputs


def load_spec(source, dtype=None, flop_split=None):
    """Spec from a file path, ``builtin:name`` or a bare built-in name."""
    ctype = {"f32": "float", "f64": "double", None: None}[dtype]
    if os.path.exists(source):
        with open(source) as fh:
            text = fh.read()
        word = None if ctype is None else (4 if ctype == "float" else 8)
        spec = classify(text, origin=source, word_size=word)
        stem = os.path.splitext(os.path.basename(source))[0]
        spec = dataclasses.replace(spec, name=stem)
    else:
        name = source[len("builtin:"):] if source.startswith("builtin:") else source
        if name not in benchmarks.NAMES:
            raise ConfigError(f"{source}: no such file (built-in stencils: {', '.join(benchmarks.NAMES)})")
        spec = benchmarks.load(name, ctype or "float")
    if flop_split:
        try:
            parts = [int(x) for x in flop_split.split(",")]
            fm = FlopMap(*parts)
        except (ValueError, TypeError):
            raise ConfigError(f"--flop-split wants FMA,MUL,ADD,OTHER, got '{flop_split}'") from None
        spec = spec.with_flop_map(fm)
    return spec


def parse_config(text):
    if text is None:
        return None
    try:
        if os.path.exists(text):
            with open(text) as fh:
                d = json.load(fh)
        else:
            d = json.loads(text)
        if isinstance(d, list):  # a tune result: take the top entry
            d = d[0]
        if "config" in d:
            d = d["config"]
        return BlockingConfig.from_dict(d)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad --config: {exc}") from None


def parse_grid(text, dims):
    if text is None:
        return (16384, 16384) if dims == 2 else (512, 512, 512)
    try:
        ext = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad --grid '{text}', expected e.g. 64x64 or 24x24x24") from None
    if len(ext) != dims or min(ext) < 1:
        raise ConfigError(f"--grid '{text}' does not describe a {dims}D interior")
    return ext


def _default_config(spec, dev_name):
    row = benchmarks.TUNED.get(spec.name, {}).get(f"{dev_name}-{dtype_key(spec)}")
    if row is None:
        return None
    return BlockingConfig(row.b_T, row.b_S, row.h_SN, row.regs)


# ------------------------------------------------------------ output


def manifest(args, spec, configs=(), outputs=()):
    m = {
        "subcommand": args.cmd,
        "inputs": [args.source],
        "spec_digest": spec.to_dict()["digest"],
        "configs": [c.to_dict() for c in configs if c is not None],
        "device": _g(args, "device"),
        "outputs": list(outputs),
        "version": _version(),
    }
    if not _g(args, "no_timestamp"):
        m["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return m


def _emit(args, doc, text):
    if _g(args, "json"):
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text)


def _spec_summary(spec):
    d = spec.to_dict()
    return {k: d[k] for k in ("name", "dims", "radius", "shape", "associative", "diagonal_free",
                              "word_size", "flops", "digest")} | {
        "flops_per_cell": spec.flops.flops_per_cell,
        "smem_reads_per_thread": smem_reads_per_thread(spec),
        "taps": len(spec.taps),
        "update": d["update"],
    }


# ------------------------------------------------------------ commands


def cmd_analyze(args):
    spec = _spec(args)
    cfg = parse_config(_g(args, "config"))
    doc = {"spec": _spec_summary(spec)}
    lines = [f"{spec.name}: {spec.dims}D {spec.shape}, radius {spec.radius}, {len(spec.taps)} taps, "
             f"{spec.flops.flops_per_cell} FLOP/cell {spec.flops.as_dict()}",
             f"associative: {spec.associative}, diagonal-free: {spec.diagonal_free}, "
             f"schedule: {codegen.strategy(spec)}"]
    if cfg is not None:
        grid = GridShape(parse_grid(_g(args, "grid"), spec.dims), _g(args, "steps", 1000))
        geom = derive(spec, cfg, grid)
        doc["geometry"] = {
            "n_thr": geom.n_thr, "n_tb": geom.n_tb, "n_tb_prime": geom.n_tb_prime,
            "compute_region": list(geom.compute_region),
            "stream_overlap_subplanes": geom.stream_overlap_subplanes,
            "smem_footprint": geom.smem_footprint, "reg_estimate": geom.reg_estimate,
        }
        lines.append(f"{cfg.label()}: {geom.n_thr} threads, compute region "
                     f"{'x'.join(map(str, geom.compute_region))}, {geom.n_tb_prime} blocks, "
                     f"smem {geom.smem_footprint} B, ~{geom.reg_estimate} regs")
    doc["manifest"] = manifest(args, spec, [cfg])
    _emit(args, doc, "\n".join(lines))
    return 0


def cmd_predict(args):
    spec = _spec(args)
    dev = get_device(_g(args, "device"))
    cfg = parse_config(_g(args, "config")) or _default_config(spec, dev.name.lower())
    if cfg is None:
        raise ConfigError("predict needs --config (no published configuration for this stencil)")
    grid = GridShape(parse_grid(_g(args, "grid"), spec.dims), _g(args, "steps", 1000))
    pred = predict(spec, cfg, grid, dev, _g(args, "eff_sm_mode", "nsm"))
    doc = {"spec": _spec_summary(spec), "config": cfg.to_dict(), "grid": list(grid.I_S),
           "steps": grid.I_T, "prediction": pred.as_dict(), "manifest": manifest(args, spec, [cfg])}
    t = pred
    text = "\n".join([
        f"{spec.name} on {dev.name} ({dtype_key(spec)}), {cfg.label()}, grid "
        f"{'x'.join(map(str, grid.I_S))}, {grid.I_T} steps",
        f"  compute {t.time_comp:.4g} s  global {t.time_gm:.4g} s  shared {t.time_sm:.4g} s",
        f"  eff_ALU {t.eff_alu:.3f}  eff_SM {t.eff_sm:.3f}  bottleneck {t.bottleneck}",
        f"  time {t.time_model:.4g} s  ->  {t.gflops_model:.1f} GFLOP/s",
    ])
    _emit(args, doc, text)
    return 0


def cmd_tune(args):
    spec = _spec(args)
    dev = get_device(_g(args, "device"))
    grid = GridShape(parse_grid(_g(args, "grid"), spec.dims), _g(args, "steps", 1000))
    ranked = autotune.tune(spec, grid, dev, k=args.top, eff_sm_mode=_g(args, "eff_sm_mode", "nsm"))
    outputs = []
    if args.script:
        with open(args.script, "w") as fh:
            fh.write(autotune.run_script(ranked, args.source, _g(args, "device"), dtype_key(spec)))
        outputs.append(args.script)
    doc = {"ranked": [r.as_dict() for r in ranked],
           "manifest": manifest(args, spec, [r.cfg for r in ranked], outputs)}
    _emit(args, doc, autotune.leaderboard(ranked))
    return 0


def cmd_generate(args):
    spec = _spec(args)
    cfg = parse_config(_g(args, "config")) or _default_config(spec, str(_g(args, "device")).lower())
    if cfg is None:
        raise ConfigError("generate needs --config")
    man = manifest(args, spec, [cfg])
    paths = codegen.write_generated(spec, cfg, args.out, man)
    if args.nvcc_check:
        _nvcc_check(paths["host"])
    man["outputs"] = [paths["kernel"], paths["host"], paths["manifest"]]
    _emit(args, {"manifest": man}, "\n".join(f"wrote {p}" for p in man["outputs"]))
    return 0


def _nvcc_check(path):
    import shutil
    import subprocess

    nvcc = shutil.which("nvcc")
    if nvcc is None:
        print("nvcc not found; skipping compile check", file=sys.stderr)
        return
    r = subprocess.run([nvcc, "-c", "-o", os.devnull, path], capture_output=True, text=True)
    if r.returncode:
        raise TbStencilError(f"nvcc failed on {path}:\n{r.stderr}")


def cmd_verify(args):
    spec = _spec(args)
    cfg = parse_config(_g(args, "config"))
    if cfg is None:
        raise ConfigError("verify needs --config")
    mode = args.mode or ("f64" if "sqrt" in spec.source else "exact")
    grid_ext = parse_grid(_g(args, "grid") or ("32x32" if spec.dims == 2 else "12x12x12"), spec.dims)
    steps = _g(args, "steps", None)
    steps = cfg.b_T + 1 if steps is None else steps
    seed = _g(args, "seed", 0)
    g = simulator.make_grid(grid_ext, spec.radius, mode, seed)
    ref = simulator.run_naive(spec, g, steps)
    got = simulator.run_blocked(spec, cfg, g, steps, block_seed=seed)
    cmp = simulator.compare(ref, got, simulator.DEFAULT_RTOL[mode])
    doc = {"equal": cmp.equal, "mode": mode, "grid": list(grid_ext), "steps": steps,
           "max_rel_err": cmp.max_rel_err, "config": cfg.to_dict(),
           "first_mismatch": None if cmp.first_mismatch is None else
           {"coordinate": list(cmp.first_mismatch[0]), "expected": cmp.first_mismatch[1],
            "got": cmp.first_mismatch[2]},
           "manifest": manifest(args, spec, [cfg])}
    if cmp.equal:
        text = (f"OK: blocked schedule matches the naive sweep ({mode}, grid "
                f"{'x'.join(map(str, grid_ext))}, {steps} steps, max rel err {cmp.max_rel_err:.3g})")
    else:
        idx, e, v = cmp.first_mismatch
        text = f"MISMATCH at padded cell {idx}: expected {e}, got {v} ({mode})"
    _emit(args, doc, text)
    return 0 if cmp.equal else 1


# ------------------------------------------------------------ parser


_GLOBAL_DEFAULTS = {"device": "v100", "dtype": None, "grid": None, "json": False, "seed": 0,
                    "no_timestamp": False, "config": None, "flop_split": None, "eff_sm_mode": "nsm"}


def _g(args, name, default=None):
    v = getattr(args, name, None)
    if v is None:
        return _GLOBAL_DEFAULTS.get(name, default) if name in _GLOBAL_DEFAULTS else default
    return v


def _spec(args):
    return load_spec(args.source, _g(args, "dtype"), _g(args, "flop_split"))


def _globals_parser():
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--device", default=S, help="v100, p100 or a JSON profile path (default v100)")
    p.add_argument("--dtype", choices=("f32", "f64"), default=S)
    p.add_argument("--grid", default=S, help="interior extent, e.g. 16384x16384 or 512x512x512")
    p.add_argument("--steps", type=int, default=S, help="time-steps I_T")
    p.add_argument("--json", action="store_true", default=S, help="machine-readable output")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--no-timestamp", action="store_true", default=S)
    p.add_argument("--config", default=S, help="blocking config as JSON text or file")
    p.add_argument("--flop-split", default=S, help="override FLOP mix as FMA,MUL,ADD,OTHER")
    p.add_argument("--eff-sm-mode", choices=("nsm", "printed"), default=S)
    return p


def build_parser():
    glob = _globals_parser()
    p = argparse.ArgumentParser(prog="tbstencil", parents=[glob],
                                description="Temporal blocking analysis and code generation for stencils")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, parents=[glob], help=help_)
        sp.add_argument("source", nargs="?", help="stencil C file, builtin:NAME or NAME")
        sp.add_argument("--spec", dest="spec_path", help="same as the positional source")
        return sp

    add("analyze", "classify a stencil and optionally derive block geometry")
    add("predict", "model performance of one configuration")
    sp = add("tune", "rank the default search space by predicted performance")
    sp.add_argument("--top", type=int, default=5)
    sp.add_argument("--dim", type=int, choices=(2, 3), help="expected dimensionality (checked)")
    sp.add_argument("--script", help="also write a shell script to build the ranked configs")
    sp = add("generate", "emit CUDA kernel and host sources")
    sp.add_argument("--out", default="generated")
    sp.add_argument("--nvcc-check", action="store_true", help="compile the output if nvcc exists")
    sp = add("verify", "check the blocked schedule against the naive sweep")
    sp.add_argument("--mode", choices=simulator.MODES)
    return p


_COMMANDS = {"analyze": cmd_analyze, "predict": cmd_predict, "tune": cmd_tune,
             "generate": cmd_generate, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.spec_path:
        args.source = args.spec_path
    if not args.source:
        parser.error(f"{args.cmd}: a stencil source is required")
    try:
        if args.cmd == "tune" and args.dim is not None:
            spec = _spec(args)
            if spec.dims != args.dim:
                raise ConfigError(f"--dim {args.dim} but {args.source} is {spec.dims}D")
        return _COMMANDS[args.cmd](args)
    except TbStencilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return 1
