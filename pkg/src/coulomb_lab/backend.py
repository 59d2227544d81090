"""Backend selection: compiled extension core with pure-numpy fallback.

The compiled module ``coulomb_lab._core`` is preferred when importable;
otherwise the numpy twin ``coulomb_lab._purepy`` is used.  Set
``COULOMB_LAB_BACKEND`` to ``cython`` or ``python`` to force a choice
(forcing ``cython`` without a built extension raises at import).
"""

from __future__ import annotations

import logging
import os

from . import _purepy

logger = logging.getLogger("coulomb_lab")

_FORCED = os.environ.get("COULOMB_LAB_BACKEND", "auto").lower()

if _FORCED not in ("auto", "cython", "python"):
    raise ImportError(f"COULOMB_LAB_BACKEND must be auto|cython|python, got {_FORCED!r}")

if _FORCED == "python":
    impl = _purepy
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        if _FORCED == "cython":
            raise ImportError(
                "COULOMB_LAB_BACKEND=cython but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            ) from None
        impl = _purepy
        logger.warning("compiled core not available, using the pure-numpy backend")

BACKEND_NAME: str = impl.BACKEND_NAME

sde_path = impl.sde_path
besq_em_batch = impl.besq_em_batch
besq_em_path = impl.besq_em_path
signed_force_fields = impl.signed_force_fields


def available_backends() -> dict[str, object]:
    """Importable backends by name (used by parity tests and the benchmark)."""
    found: dict[str, object] = {"python": _purepy}
    try:
        from . import _core

        found["cython"] = _core
    except ImportError:
        pass
    return found
