"""Compiled inner loops for coordinate descent on the penalty objective.

All kernels release the GIL. The ``*_atomic`` variants may run concurrently on
shared ``x`` and ``r``: coordinate writes go through compare-and-swap, residual
deltas through atomic add, and multi-coordinate blocks are guarded by a
per-block spin lock.
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.core.extending import intrinsic


@intrinsic
def _atomic_add(typingctx, arr, idx, val):
    sig = types.float64(arr, types.intp, types.float64)

    def codegen(context, builder, sig, args):
        arr, idx, val = args
        aryty = sig.args[0]
        ary = context.make_array(aryty)(context, builder, arr)
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [idx])
        return builder.atomic_rmw("fadd", ptr, val, "seq_cst")

    return sig, codegen


@intrinsic
def _atomic_cas_f64(typingctx, arr, idx, old, new):
    sig = types.boolean(arr, types.intp, types.float64, types.float64)

    def codegen(context, builder, sig, args):
        arr, idx, old, new = args
        aryty = sig.args[0]
        ary = context.make_array(aryty)(context, builder, arr)
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [idx])
        i64 = ir.IntType(64)
        iptr = builder.bitcast(ptr, i64.as_pointer())
        res = builder.cmpxchg(
            iptr, builder.bitcast(old, i64), builder.bitcast(new, i64), "seq_cst", "seq_cst"
        )
        return builder.extract_value(res, 1)

    return sig, codegen


@intrinsic
def _atomic_cas_i64(typingctx, arr, idx, old, new):
    sig = types.boolean(arr, types.intp, types.int64, types.int64)

    def codegen(context, builder, sig, args):
        arr, idx, old, new = args
        aryty = sig.args[0]
        ary = context.make_array(aryty)(context, builder, arr)
        ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [idx])
        res = builder.cmpxchg(ptr, old, new, "seq_cst", "seq_cst")
        return builder.extract_value(res, 1)

    return sig, codegen


@njit(nogil=True, cache=True)
def atomic_add_many(arr, idx, vals):
    """Test hook: ``arr[idx[k]] += vals[k]`` with atomic adds."""
    for k in range(idx.size):
        _atomic_add(arr, idx[k], vals[k])


@njit(nogil=True, cache=True)
def _partial(i, indptr, indices, data, cbar, xbar, beta, x_i, r):
    s = 0.0
    for p in range(indptr[i], indptr[i + 1]):
        s += data[p] * r[indices[p]]
    return cbar[i] + beta * s + (x_i - xbar[i]) / beta


@njit(nogil=True, cache=True)
def _clamp(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit(nogil=True, cache=True)
def project_simplex_inplace(y, k):
    """Project ``y[:k]`` onto the probability simplex in place."""
    u = np.sort(y[:k])[::-1]
    css = 0.0
    tau = 0.0
    for j in range(k):
        css += u[j]
        t = (css - 1.0) / (j + 1.0)
        if u[j] - t > 0.0:
            tau = t
    for j in range(k):
        v = y[j] - tau
        y[j] = v if v > 0.0 else 0.0


@njit(nogil=True, cache=True)
def coord_sweep(seq, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r):
    """Serial coordinate steps for every index in ``seq``."""
    for t in range(seq.size):
        i = seq[t]
        g = _partial(i, indptr, indices, data, cbar, xbar, beta, x[i], r)
        new = _clamp(x[i] - step * g, lo[i], hi[i])
        dx = new - x[i]
        if dx != 0.0:
            x[i] = new
            for p in range(indptr[i], indptr[i + 1]):
                r[indices[p]] += data[p] * dx


@njit(nogil=True, cache=True)
def coord_sweep_atomic(seq, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r):
    """Concurrent-safe coordinate steps (lock-free, compare-and-swap on x)."""
    for t in range(seq.size):
        i = seq[t]
        while True:
            old = x[i]
            g = _partial(i, indptr, indices, data, cbar, xbar, beta, old, r)
            new = _clamp(old - step * g, lo[i], hi[i])
            dx = new - old
            if dx == 0.0:
                break
            if _atomic_cas_f64(x, i, old, new):
                for p in range(indptr[i], indptr[i + 1]):
                    _atomic_add(r, indices[p], data[p] * dx)
                break


@njit(nogil=True, cache=True)
def _block_targets(u, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf):
    a = unit_ptr[u]
    k = unit_ptr[u + 1] - a
    for q in range(k):
        j = unit_idx[a + q]
        g = _partial(j, indptr, indices, data, cbar, xbar, beta, x[j], r)
        buf[q] = x[j] - step * g
    if unit_simplex[u]:
        project_simplex_inplace(buf, k)
    else:
        for q in range(k):
            j = unit_idx[a + q]
            buf[q] = _clamp(buf[q], lo[j], hi[j])
    return k


@njit(nogil=True, cache=True)
def unit_sweep(seq, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf):
    """Serial steps over units (single coordinates or blocks)."""
    for t in range(seq.size):
        u = seq[t]
        a = unit_ptr[u]
        k = _block_targets(u, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf)
        for q in range(k):
            j = unit_idx[a + q]
            dx = buf[q] - x[j]
            if dx != 0.0:
                x[j] = buf[q]
                for p in range(indptr[j], indptr[j + 1]):
                    r[indices[p]] += data[p] * dx


@njit(nogil=True, cache=True)
def unit_sweep_atomic(seq, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf, locks):
    """Concurrent-safe unit steps; each unit is held under its spin lock while updated."""
    for t in range(seq.size):
        u = seq[t]
        while not _atomic_cas_i64(locks, u, 0, 1):
            pass
        a = unit_ptr[u]
        k = _block_targets(u, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf)
        for q in range(k):
            j = unit_idx[a + q]
            dx = buf[q] - x[j]
            if dx != 0.0:
                x[j] = buf[q]
                for p in range(indptr[j], indptr[j + 1]):
                    _atomic_add(r, indices[p], data[p] * dx)
        _atomic_cas_i64(locks, u, 1, 0)


@njit(nogil=True, cache=True)
def gradient_mapping_sq(unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, l_max, x, r, buf):
    """Squared norm of ``L (x - P(x - grad/L))`` summed over all units."""
    step = 1.0 / l_max
    total = 0.0
    for u in range(unit_ptr.size - 1):
        a = unit_ptr[u]
        k = _block_targets(u, unit_ptr, unit_idx, unit_simplex, indptr, indices, data, cbar, xbar, lo, hi, beta, step, x, r, buf)
        for q in range(k):
            d = l_max * (x[unit_idx[a + q]] - buf[q])
            total += d * d
    return total
