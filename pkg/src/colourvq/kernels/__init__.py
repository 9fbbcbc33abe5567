"""Hot kernels with a compiled core and a pure-numpy fallback.

The compiled extension is picked at import when it was built; otherwise the
numpy versions are used. :func:`use_backend` switches explicitly, which the
benchmarks and the backend-agreement tests rely on.
"""

import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
    log.debug("compiled kernels unavailable; using numpy fallback")

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    previous = active_backend()
    _active = _BACKENDS[name]
    return previous


def ciede2000(lab1, lab2):
    return _active.ciede2000(lab1, lab2)


def nearest_code(z, codebook, lesioned):
    return _active.nearest_code(z, codebook, lesioned)
