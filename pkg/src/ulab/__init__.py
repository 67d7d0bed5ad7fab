"""Computational toolkit for higher-order Fourier analysis over F_p^n."""

from ulab.core import (
    GroupParams,
    GroupElem,
    GroupFn,
    PolyPhase,
    Subspace,
    barconv,
    conv,
    correlation,
    dft,
    idft,
    poly_phase_fn,
)

__version__ = "0.1.0"

__all__ = [
    "GroupParams",
    "GroupElem",
    "GroupFn",
    "PolyPhase",
    "Subspace",
    "barconv",
    "conv",
    "correlation",
    "dft",
    "idft",
    "poly_phase_fn",
    "__version__",
]
