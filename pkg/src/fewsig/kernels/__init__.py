"""LSTM kernel backend selection.

The compiled Cython kernel is used when the extension built; otherwise the
numpy reference implementation takes over. Set ``FEWSIG_KERNEL=reference``
to force the fallback (e.g. for the benchmark or parity tests).
``BACKEND`` records which one is active.
"""

import os

from . import reference

BACKEND = "reference"
lstm_forward = reference.lstm_forward
lstm_backward = reference.lstm_backward

if os.environ.get("FEWSIG_KERNEL", "").lower() not in ("reference", "numpy"):
    try:
        from . import _lstm as _compiled

        lstm_forward = _compiled.lstm_forward
        lstm_backward = _compiled.lstm_backward
        BACKEND = "compiled"
    except ImportError:
        pass
