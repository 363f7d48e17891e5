"""Backend selection for the estimator hot loops.

The compiled extension is used when it imports; otherwise the numpy
reference implementation. MLE loops above ``COMPILED_MLE_MAX_DIM`` always
take the numpy path. Set ``READOUTBENCH_BACKEND=python`` to force the
fallback.
"""
import os

from . import _pykernels
from ._pykernels import ZeroProbability

_compiled = None
if os.environ.get("READOUTBENCH_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]

# the compiled MLE loops use plain loops for matrix products and fall behind
# BLAS from dim 8 on (see benchmarks/bench_kernels.py); the chain does not
COMPILED_MLE_MAX_DIM = 4


def _mle_impl(dim: int):
    return _impl if dim <= COMPILED_MLE_MAX_DIM else _pykernels


def qst_mle_loop(rho0, effects, counts, dilution, max_iterations, tol):
    return _mle_impl(rho0.shape[0]).qst_mle_loop(rho0, effects, counts, dilution,
                                                 max_iterations, tol)


def qdt_mle_loop(m0, rhos, counts, max_iterations, tol):
    return _mle_impl(m0.shape[1]).qdt_mle_loop(m0, rhos, counts, max_iterations, tol)


bme_chain = _impl.bme_chain

__all__ = ["BACKEND", "BACKENDS", "COMPILED_MLE_MAX_DIM", "ZeroProbability", "qdt_mle_loop",
           "qst_mle_loop", "bme_chain"]
