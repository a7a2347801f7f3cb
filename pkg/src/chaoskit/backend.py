"""Selection of the simulation kernel backend.

The compiled extension is preferred when present; the numpy fallback is
semantically identical.  Set ``CHAOSKIT_BACKEND`` to ``cython`` or
``python`` to force a choice (``cython`` raises if the extension is
missing), or leave it at ``auto``.
"""

from __future__ import annotations

import os

from . import _stepper_py


def _load():
    choice = os.environ.get("CHAOSKIT_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "cython", "python"):
        raise ValueError(f"CHAOSKIT_BACKEND must be auto|cython|python, got {choice!r}")
    if choice == "python":
        return _stepper_py
    try:
        from . import _stepper  # type: ignore[attr-defined]

        return _stepper
    except ImportError:
        if choice == "cython":
            raise ImportError(
                "CHAOSKIT_BACKEND=cython but the compiled stepper is not built; "
                "run 'pip install -e . --no-build-isolation'"
            )
        return _stepper_py


kernels = _load()


def active_backend() -> str:
    """Name of the backend in use: 'cython' or 'python'."""
    return kernels.BACKEND_NAME


def get_backend(name: str):
    """Fetch a specific backend module by name (for tests and benchmarks)."""
    if name == "python":
        return _stepper_py
    if name == "cython":
        from . import _stepper  # type: ignore[attr-defined]

        return _stepper
    raise ValueError(f"unknown backend {name!r}")
