"""Arithmetic core selection.

Two interchangeable kernels implement the same API: ``_speedcore`` (compiled
extension, Montgomery limb arithmetic) and ``purecore`` (plain Python
integers). The compiled one is preferred when importable; set
``VEILKEY_BACKEND=pure`` or ``VEILKEY_BACKEND=compiled`` to force a choice.
"""

import os

from . import params  # noqa: F401  (re-exported for convenience)
from . import purecore

_FORCED = os.environ.get("VEILKEY_BACKEND", "").strip().lower()


def _load_compiled():
    from . import _speedcore  # noqa: PLC0415

    return _speedcore


if _FORCED == "pure":
    core = purecore
elif _FORCED == "compiled":
    core = _load_compiled()
elif _FORCED == "":
    try:
        core = _load_compiled()
    except ImportError:
        core = purecore
else:
    raise RuntimeError(f"unknown VEILKEY_BACKEND value: {_FORCED!r}")

BACKEND_NAME = core.BACKEND_NAME


def available_cores():
    """Return the importable cores keyed by name (for tests and benchmarks)."""
    cores = {"pure": purecore}
    try:
        cores["compiled"] = _load_compiled()
    except ImportError:
        pass
    return cores
