"""Kernel backend selection.

The compiled extension is preferred; the pure-Python fallback is used when
the extension is unavailable or when PINLAB_FORCE_FALLBACK is set.  Both
expose the same functions with identical semantics.
"""

import os

from . import fallback

if os.environ.get("PINLAB_FORCE_FALLBACK"):
    _impl = fallback
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = fallback

BACKEND = _impl.BACKEND
LAM_CLAMP = fallback.LAM_CLAMP
LAM_TANH = fallback.LAM_TANH

backend_name = _impl.backend_name
strength_grid = _impl.strength_grid
lam_value = _impl.lam_value
kmc_run = _impl.kmc_run
bump_profile = _impl.bump_profile
pde_run = _impl.pde_run
mstat_runmax = _impl.mstat_runmax


def get_backend(name=None):
    """Return a specific backend module ("compiled" | "fallback" | None=active)."""
    if name is None:
        return _impl
    if name == "fallback":
        return fallback
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
