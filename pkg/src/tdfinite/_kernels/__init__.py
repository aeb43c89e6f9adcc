"""Hot loops, compiled when available.

The compiled module ``_ctd`` is preferred; the pure-Python ``_pykernels`` is
used when it is missing or when ``TDFINITE_BACKEND=python`` is set.  Both
expose ``markov_walk``, ``iid_draw`` and ``td_chunk`` with identical semantics.
"""
import importlib
import os
from types import ModuleType

BACKENDS = ("cython", "python")


def load_backend(name: str) -> ModuleType:
    if name == "cython":
        return importlib.import_module("._ctd", __name__)
    if name == "python":
        return importlib.import_module("._pykernels", __name__)
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("TDFINITE_BACKEND", "auto").strip().lower()
    if wanted in ("", "auto"):
        try:
            return "cython", load_backend("cython")
        except ImportError:
            return "python", load_backend("python")
    return wanted, load_backend(wanted)


backend, _impl = _select()
markov_walk = _impl.markov_walk
iid_draw = _impl.iid_draw
td_chunk = _impl.td_chunk
