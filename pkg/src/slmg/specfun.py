"""Real-argument Bessel and Hankel functions of orders 0 and 1.

Thin vectorised wrappers around the Cephes routines shipped with
``scipy.special``, with the domain checks the kernels rely on.
"""

import numpy as np
from scipy import special

from slmg.errors import DomainError

EULER_GAMMA = 0.5772156649015329


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} requires x > 0")
    return x


def bessel_j0(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_j0 requires x >= 0")
    return special.j0(x)


def bessel_j1(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_j1 requires x >= 0")
    return special.j1(x)


def bessel_y0(x):
    return special.y0(_positive(x, "bessel_y0"))


def bessel_y1(x):
    return special.y1(_positive(x, "bessel_y1"))


def hankel0(z):
    """H_0^(1)(z) = J_0(z) + i Y_0(z) for real z > 0."""
    z = _positive(z, "hankel0")
    return special.j0(z) + 1j * special.y0(z)


def hankel1(z):
    """H_1^(1)(z) = J_1(z) + i Y_1(z) for real z > 0."""
    z = _positive(z, "hankel1")
    return special.j1(z) + 1j * special.y1(z)
