"""Atomic primitives for numba kernels.

numba exposes no CPU atomics, so these intrinsics emit the LLVM instructions
directly. Both operate on elements of 1-d C-contiguous arrays; monotonic
ordering is enough because the algorithms using them never rely on the
ordering of *other* memory around the atomic (claim flags and work counters
only).
"""

from numba import types
from numba.extending import intrinsic


@intrinsic
def cas_i32(typingctx, arr_t, idx_t, expected_t, new_t):
    """Atomically compare-and-swap arr[idx]; returns the value seen before.

    The swap happened iff the return value equals `expected`.
    """
    if not (isinstance(arr_t, types.Array) and arr_t.dtype == types.int32
            and arr_t.ndim == 1):
        return None
    sig = types.int32(arr_t, types.intp, types.int32, types.int32)

    def codegen(context, builder, signature, args):
        arr_v, idx_v, exp_v, new_v = args
        ary = context.make_array(signature.args[0])(context, builder, arr_v)
        ptr = builder.gep(ary.data, [idx_v])
        pair = builder.cmpxchg(ptr, exp_v, new_v, ordering="monotonic")
        return builder.extract_value(pair, 0)

    return sig, codegen


@intrinsic
def fetch_add_i64(typingctx, arr_t, idx_t, val_t):
    """Atomically add val to arr[idx]; returns the value seen before."""
    if not (isinstance(arr_t, types.Array) and arr_t.dtype == types.int64
            and arr_t.ndim == 1):
        return None
    sig = types.int64(arr_t, types.intp, types.int64)

    def codegen(context, builder, signature, args):
        arr_v, idx_v, val_v = args
        ary = context.make_array(signature.args[0])(context, builder, arr_v)
        ptr = builder.gep(ary.data, [idx_v])
        return builder.atomic_rmw("add", ptr, val_v, ordering="monotonic")

    return sig, codegen
