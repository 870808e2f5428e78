"""Selects the compiled kernels when built, unless ``HIERVC_PURE_PYTHON`` is set."""
import logging
import os

log = logging.getLogger(__name__)

FORCE_PURE = os.environ.get("HIERVC_PURE_PYTHON", "") not in ("", "0")

kernels = None
if not FORCE_PURE:
    try:
        from . import _ckernels as kernels
    except ImportError as exc:  # pragma: no cover - depends on the build
        log.debug("compiled tensor kernels unavailable: %s", exc)

BACKEND = "cython" if kernels is not None else "numpy"


def set_compiled(enabled: bool) -> None:
    """Toggle the compiled kernels at runtime (used by benchmarks and parity tests)."""
    global kernels, BACKEND
    if enabled:
        from . import _ckernels
        kernels = _ckernels
    else:
        kernels = None
    BACKEND = "cython" if kernels is not None else "numpy"
