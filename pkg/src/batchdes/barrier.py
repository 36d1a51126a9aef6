"""Value barrier for handler code.

``opaque(x)`` returns ``x``.  Under numba it lowers to an empty inline-asm
statement that the optimizer cannot see through, so arithmetic chains are
not folded across it.  The asm has no side effects and is marked
``readnone nounwind willreturn``, so a computation whose result is never
used is still deleted.  This keeps the cost of a surviving loop proportional
to its trip count while leaving dead loops removable.
"""
from numba import types
from numba.extending import intrinsic, overload
from llvmlite import ir


def opaque(x):
    return x


def _mark_pure(call):
    try:
        call.attributes._known = call.attributes._known | {"willreturn"}
        call.attributes.add("willreturn")
    except (AttributeError, ValueError):
        # without willreturn the barrier still blocks folding but pins the loop
        pass
    return call


@intrinsic
def _opaque_int(typingctx, x):
    sig = x(x)

    def codegen(context, builder, signature, args):
        ty = context.get_value_type(signature.return_type)
        asm = ir.InlineAsm(ir.FunctionType(ty, [ty]), "", "=r,0", side_effect=False)
        return _mark_pure(builder.call(asm, [args[0]], attrs=("readnone", "nounwind")))

    return sig, codegen


@overload(opaque)
def _opaque_overload(x):
    if isinstance(x, types.Integer):
        return lambda x: _opaque_int(x)
