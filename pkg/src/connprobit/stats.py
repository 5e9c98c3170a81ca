"""Standard normal primitives used by the likelihood and the simulator.

All functions accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_SQRT_HALF = np.sqrt(0.5)

# below this point log(Phi(z)) is evaluated from the scaled complementary
# error function, which stays finite however deep the tail goes
TAIL_SWITCH = -5.0


def _out(values, like):
    return float(values) if np.ndim(like) == 0 else values


def norm_cdf(z):
    z = np.asarray(z, dtype=float)
    return _out(special.ndtr(z), z)


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _out(np.exp(-0.5 * z * z - _LOG_SQRT_2PI), z)


def log_norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return _out(-0.5 * z * z - _LOG_SQRT_2PI, z)


def log_norm_cdf(z):
    """Natural log of the standard normal cdf.

    Three branches:

    * ``z < -5``: ``log(erfcx(-z/sqrt(2)) / 2) - z**2 / 2``. ``erfcx`` is the
      scaled complementary error function, so nothing underflows even for
      ``z = -1e5``.
    * ``-5 <= z <= 0``: ``log(Phi(z))`` directly, where ``Phi`` carries full
      relative precision.
    * ``z > 0``: ``log1p(-Phi(-z))`` so that values near zero keep their
      relative precision.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    tail = z < TAIL_SWITCH
    right = z > 0.0
    mid = ~(tail | right)
    zt = z[tail]
    out[tail] = np.log(0.5 * special.erfcx(-zt * _SQRT_HALF)) - 0.5 * zt * zt
    out[mid] = np.log(special.ndtr(z[mid]))
    out[right] = np.log1p(-special.ndtr(-z[right]))
    return _out(out, z)


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` on the open unit interval."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("norm_quantile requires 0 < p < 1")
    return _out(special.ndtri(p), p)


def mills_ratio(z):
    """``phi(z) / Phi(z)``, finite for every finite ``z``."""
    z = np.asarray(z, dtype=float)
    return _out(np.exp(log_norm_pdf(z) - log_norm_cdf(z)), z)
