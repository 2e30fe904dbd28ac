"""Stieltjes transform of a discrete spectrum and its derivatives.

Everything here is a direct O(p) sum over atoms; callers that need many
evaluation points pass an array and let numpy broadcast.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .spectrum import Spectrum

__all__ = ["AtomCollisionError", "m_v", "m_v_derivative"]

_GUARD = 1e-14


class AtomCollisionError(ValueError):
    """Evaluation point indistinguishable from a spectrum atom."""


def _check_distance(spec: Spectrum, zeta: np.ndarray) -> None:
    dist = np.abs(spec.values[:, None] - np.ravel(zeta)[None, :]).min(axis=0)
    tol = _GUARD * np.maximum(1.0, np.abs(np.ravel(zeta)))
    if np.any(dist < tol):
        raise AtomCollisionError("evaluation point collides with a spectrum atom")


def m_v(spec: Spectrum, zeta):
    """Average resolvent trace (1/p) sum_i 1/(d_i - zeta) of the bare spectrum.

    Herglotz on the upper half plane: Im m_v > 0 when Im zeta > 0.  Accepts
    a scalar or ndarray of evaluation points away from the atoms.
    """
    z = np.asarray(zeta, dtype=complex)
    _check_distance(spec, z)
    out = np.mean(1.0 / (spec.values[:, None] - z.reshape(1, -1)), axis=0)
    return complex(out[0]) if z.ndim == 0 else out.reshape(z.shape)


def m_v_derivative(spec: Spectrum, zeta, order: int):
    """k-th derivative of m_v, k in {1, 2, 3}: (k!/p) sum_i (d_i - zeta)^-(k+1)."""
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2, or 3, got {order}")
    z = np.asarray(zeta, dtype=complex)
    _check_distance(spec, z)
    out = factorial(order) * np.mean(
        (spec.values[:, None] - z.reshape(1, -1)) ** (-(order + 1)), axis=0
    )
    return complex(out[0]) if z.ndim == 0 else out.reshape(z.shape)
