"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
implementations in ``_pykernels`` take over.  Both expose the same functions.
Selection is programmatic only (:func:`set_backend`, :func:`use_backend`).
"""
from __future__ import annotations

import contextlib

from adaptint import _pykernels

try:
    from adaptint import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None else "python"


def available() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available()}")
    _active = name


@contextlib.contextmanager
def use_backend(name: str):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def kernels():
    return _BACKENDS[_active]
