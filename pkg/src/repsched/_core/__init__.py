"""Decide-kernel selection: compiled extension when available, pure fallback.

Set REPSCHED_KERNEL=pure or =compiled to force one side (the benchmark and
the cross-check tests do).
"""

import os

_choice = os.environ.get("REPSCHED_KERNEL", "auto")
if _choice not in ("auto", "compiled", "pure"):
    raise RuntimeError(f"REPSCHED_KERNEL must be auto|compiled|pure, got {_choice!r}")

kernel = None
if _choice in ("auto", "compiled"):
    try:
        from . import kernel_c as kernel
    except ImportError:
        if _choice == "compiled":
            raise
if kernel is None:
    from . import kernel_py as kernel

KERNEL_NAME = "compiled" if kernel.__name__.endswith("kernel_c") else "pure"

SAT = kernel.SAT
UNSAT = kernel.UNSAT
TIMEOUT = kernel.TIMEOUT
decide = kernel.decide
