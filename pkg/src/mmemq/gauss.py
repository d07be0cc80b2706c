# Gaussian tail helper shared by the cost model and the misdetection bounds.
from __future__ import annotations

import numpy as np
from scipy.special import erfc

_SQRT2 = float(np.sqrt(2.0))


def q_function(x):
    """Upper Gaussian tail Q(x) = 0.5 * erfc(x / sqrt(2)).

    Accepts scalars or arrays; +-inf map to 0 and 1 exactly.
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)
