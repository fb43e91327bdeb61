"""Hot-loop kernels with backend selection at import.

The compiled extension is preferred; the pure-Python fallback is used when
the extension is unavailable or when GRIDFUSE_PURE_PYTHON=1 is set. Both
backends implement the same arithmetic and produce identical results.
"""

import os

if os.environ.get("GRIDFUSE_PURE_PYTHON") == "1":
    from . import _py as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _py as _impl

BACKEND = _impl.BACKEND
MATCH_BETP = _impl.MATCH_BETP
MATCH_PPL = _impl.MATCH_PPL
RULE_DEMPSTER = _impl.RULE_DEMPSTER
RULE_YAGER = _impl.RULE_YAGER

traverse = _impl.traverse
apply_logodds = _impl.apply_logodds
apply_belief = _impl.apply_belief

MATCH_CODES = {"betp": MATCH_BETP, "ppl": MATCH_PPL}
RULE_CODES = {"dempster": RULE_DEMPSTER, "yager": RULE_YAGER}
