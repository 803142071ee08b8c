"""Hot loops with a numba path and a pure-numpy fallback.

Set ``TBSTENCIL_NO_JIT=1`` (or run without numba installed) to use the
numpy implementations.  Both variants are always importable so the
benchmark script and tests can compare them directly.
"""

import os

import numpy as np

try:
    import numba

    JIT_AVAILABLE = True
except ImportError:  # pragma: no cover
    JIT_AVAILABLE = False

JIT_ENABLED = JIT_AVAILABLE and os.environ.get("TBSTENCIL_NO_JIT", "").lower() not in ("1", "true", "yes")


def njit(fn):
    if JIT_AVAILABLE:
        return numba.njit(cache=True)(fn)
    return fn


# census tally layout shared with perfmodel.ThreadCensus
TALLY_FIELDS = ("th_comp", "th_sm_read", "th_sm_write", "th_gm_read", "th_gm_write",
                "out_of_bound", "boundary", "halo", "redundant", "valid")


def _blocked_params(I_S, b_S, rad):
    # pad 2D problems with a neutral second blocked dimension (one cell, one
    # thread, no halo) so one kernel handles both ranks
    Ib = np.ones(2, np.int64)
    bb = np.ones(2, np.int64)
    rb = np.zeros(2, np.int64)
    for i in range(len(b_S)):
        Ib[i] = I_S[1 + i]
        bb[i] = b_S[i]
        rb[i] = rad
    return Ib, bb, rb


@njit
def _census_loops(IN, Ib, bb, rb, rad, h, degrees):
    out = np.zeros(10, np.int64)
    nsb = (IN + h - 1) // h
    for d in degrees:
        c0 = bb[0] - 2 * d * rb[0]
        c1 = bb[1] - 2 * d * rb[1]
        nb0 = (Ib[0] + c0 - 1) // c0
        nb1 = (Ib[1] + c1 - 1) // c1
        for k0 in range(nb0):
            for k1 in range(nb1):
                for j in range(nsb):
                    s0 = j * h
                    s1 = min(IN, s0 + h)
                    for T in range(d + 1):
                        e = (d - T) * rad
                        if T == 0:
                            plo = max(-rad, s0 - e)
                            phi = min(IN + rad, s1 + e)
                        else:
                            plo = max(0, s0 - e)
                            phi = min(IN, s1 + e)
                        ev0 = (d - T) * rb[0]
                        ev1 = (d - T) * rb[1]
                        for p in range(plo, phi):
                            ring_plane = p < 0 or p >= IN
                            own_plane = p >= s0 and p < s1
                            for t0 in range(bb[0]):
                                x0 = k0 * c0 - d * rb[0] + t0
                                for t1 in range(bb[1]):
                                    x1 = k1 * c1 - d * rb[1] + t1
                                    out[2] += 1
                                    in_arr = (x0 >= -rb[0] and x0 < Ib[0] + rb[0]
                                              and x1 >= -rb[1] and x1 < Ib[1] + rb[1])
                                    inter = x0 >= 0 and x0 < Ib[0] and x1 >= 0 and x1 < Ib[1]
                                    owned = (x0 >= k0 * c0 and x0 < k0 * c0 + c0
                                             and x1 >= k1 * c1 and x1 < k1 * c1 + c1)
                                    if not in_arr:
                                        out[5] += 1
                                        continue
                                    if T == 0:
                                        out[3] += 1
                                        if ring_plane or not inter:
                                            out[6] += 1
                                        elif owned and own_plane:
                                            out[9] += 1
                                        else:
                                            out[8] += 1
                                        continue
                                    if not inter:
                                        out[6] += 1
                                        continue
                                    valid = (x0 >= k0 * c0 - ev0 and x0 < k0 * c0 + c0 + ev0
                                             and x1 >= k1 * c1 - ev1 and x1 < k1 * c1 + c1 + ev1)
                                    if not valid:
                                        out[7] += 1
                                        continue
                                    out[0] += 1
                                    out[1] += 1
                                    if owned and own_plane:
                                        out[9] += 1
                                        if T == d:
                                            out[4] += 1
                                    else:
                                        out[8] += 1
    return out


def _census_numpy(IN, Ib, bb, rb, rad, h, degrees):
    out = np.zeros(10, np.int64)
    nsb = -(-IN // h)
    t0, t1 = np.meshgrid(np.arange(bb[0]), np.arange(bb[1]), indexing="ij")
    n_thr = t0.size
    for d in degrees:
        c0 = bb[0] - 2 * d * rb[0]
        c1 = bb[1] - 2 * d * rb[1]
        for k0 in range(-(-Ib[0] // c0)):
            for k1 in range(-(-Ib[1] // c1)):
                x0 = k0 * c0 - d * rb[0] + t0
                x1 = k1 * c1 - d * rb[1] + t1
                in_arr = (x0 >= -rb[0]) & (x0 < Ib[0] + rb[0]) & (x1 >= -rb[1]) & (x1 < Ib[1] + rb[1])
                inter = (x0 >= 0) & (x0 < Ib[0]) & (x1 >= 0) & (x1 < Ib[1])
                owned = inter & (x0 >= k0 * c0) & (x0 < k0 * c0 + c0) & (x1 >= k1 * c1) & (x1 < k1 * c1 + c1)
                n_arr = int(in_arr.sum())
                n_int = int(inter.sum())
                n_own = int(owned.sum())
                for j in range(nsb):
                    s0 = j * h
                    s1 = min(IN, s0 + h)
                    for T in range(d + 1):
                        e = (d - T) * rad
                        p = np.arange(max(-rad if T == 0 else 0, s0 - e),
                                      min(IN + rad if T == 0 else IN, s1 + e))
                        npos = p.size
                        n_ring = int(((p < 0) | (p >= IN)).sum())
                        n_ownp = int(((p >= s0) & (p < s1)).sum())
                        out[2] += n_thr * npos
                        out[5] += (n_thr - n_arr) * npos
                        if T == 0:
                            out[3] += n_arr * npos
                            out[6] += n_arr * n_ring + (n_arr - n_int) * (npos - n_ring)
                            out[9] += n_own * n_ownp
                            out[8] += n_int * (npos - n_ring) - n_own * n_ownp
                            continue
                        ev0 = (d - T) * rb[0]
                        ev1 = (d - T) * rb[1]
                        valid = (inter & (x0 >= k0 * c0 - ev0) & (x0 < k0 * c0 + c0 + ev0)
                                 & (x1 >= k1 * c1 - ev1) & (x1 < k1 * c1 + c1 + ev1))
                        n_val = int(valid.sum())
                        out[6] += (n_arr - n_int) * npos
                        out[7] += (n_int - n_val) * npos
                        out[0] += n_val * npos
                        out[1] += n_val * npos
                        out[9] += n_own * n_ownp
                        out[8] += n_val * npos - n_own * n_ownp
                        if T == d:
                            out[4] += n_own * n_ownp
    return out


def census_bruteforce(I_S, b_S, rad, h, degrees, use_jit=None):
    """Tally every (launch, block, stream block, T, plane, thread) instance."""
    Ib, bb, rb = _blocked_params(I_S, b_S, rad)
    deg = np.asarray(list(degrees), np.int64)
    if use_jit is None:
        use_jit = JIT_ENABLED
    fn = _census_loops if use_jit else _census_numpy
    return fn(np.int64(I_S[0]), Ib, bb, rb, np.int64(rad), np.int64(h), deg)


@njit
def _sweep2d_loops(src, dst, offs, coefs, divisor, rad):
    n0 = src.shape[0] - 2 * rad
    n1 = src.shape[1] - 2 * rad
    for i in range(n0):
        for j in range(n1):
            acc = coefs[0] * src[i + rad + offs[0, 0], j + rad + offs[0, 1]]
            for k in range(1, offs.shape[0]):
                acc = acc + coefs[k] * src[i + rad + offs[k, 0], j + rad + offs[k, 1]]
            dst[i + rad, j + rad] = acc / divisor


@njit
def _sweep3d_loops(src, dst, offs, coefs, divisor, rad):
    n0 = src.shape[0] - 2 * rad
    n1 = src.shape[1] - 2 * rad
    n2 = src.shape[2] - 2 * rad
    for i in range(n0):
        for j in range(n1):
            for l in range(n2):
                acc = coefs[0] * src[i + rad + offs[0, 0], j + rad + offs[0, 1], l + rad + offs[0, 2]]
                for k in range(1, offs.shape[0]):
                    acc = acc + coefs[k] * src[i + rad + offs[k, 0], j + rad + offs[k, 1],
                                               l + rad + offs[k, 2]]
                dst[i + rad, j + rad, l + rad] = acc / divisor


def _sweep_numpy(src, dst, offs, coefs, divisor, rad):
    n = [s - 2 * rad for s in src.shape]

    def window(o):
        return src[tuple(slice(rad + x, rad + x + m) for x, m in zip(o, n))]

    acc = coefs[0] * window(offs[0])
    for k in range(1, len(offs)):
        acc = acc + coefs[k] * window(offs[k])
    dst[tuple(slice(rad, rad + m) for m in n)] = acc / divisor


def linear_sweep(src, dst, offs, coefs, divisor, rad, use_jit=None):
    """One time-step of ``sum(c_k * A[x + off_k]) / divisor`` over the interior.

    Terms are accumulated in the given order in both variants, so the
    results agree bit for bit.
    """
    if use_jit is None:
        use_jit = JIT_ENABLED
    offs = np.ascontiguousarray(offs, dtype=np.int64)
    coefs = np.ascontiguousarray(coefs, dtype=src.dtype)
    divisor = src.dtype.type(divisor)
    if not use_jit:
        _sweep_numpy(src, dst, offs, coefs, divisor, rad)
    elif src.ndim == 2:
        _sweep2d_loops(src, dst, offs, coefs, divisor, rad)
    else:
        _sweep3d_loops(src, dst, offs, coefs, divisor, rad)
