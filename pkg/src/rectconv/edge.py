"""Right spectral edge of the noise-convolved density.

The edge is the image of the unique critical point of the inverse
subordination map on the real axis to the right of the top signal
eigenvalue.  Everything here works in real arithmetic on that ray.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .spectrum import ModelParams, Spectrum

__all__ = [
    "EdgeData",
    "EdgeBracketError",
    "find_right_edge",
    "edge_velocity",
    "sqrt_coefficient",
    "bbp_threshold",
    "outlier_location",
    "edge_report_json",
]

_BRACKET_LIMIT = 1e6
_BRACKET_FLOOR = 1e-14


class EdgeBracketError(RuntimeError):
    """No sign change of the edge equation on the admissible ray."""


@dataclass(frozen=True)
class EdgeData:
    """Right-edge data: location, critical point, and local expansion.

    velocity and sqrt_coeff are NaN at t = 0, where the measure is atomic
    and has no square-root edge.
    """

    lambda_plus: float
    zeta_plus: float
    xi_plus: float
    velocity: float
    sqrt_coeff: float
    phi_second: float


def _real_sums(d: np.ndarray, zeta, orders=(0,)):
    """Real m_v and derivatives on the ray zeta > max(d)."""
    z = np.asarray(zeta, dtype=float)
    diff = d[:, None] - z.reshape(1, -1)  # strictly negative
    out = []
    for k in orders:
        if k == 0:
            out.append(np.mean(1.0 / diff, axis=0))
        else:
            fact = 1.0 if k == 1 else (2.0 if k == 2 else 6.0)
            out.append(fact * np.mean(diff ** (-(k + 1)), axis=0))
    return [o.reshape(z.shape) if z.ndim else float(o[0]) for o in out]


def _phi_real(spec: Spectrum, params: ModelParams, zeta):
    c, t = params.c_n, params.t
    (mv,) = _real_sums(spec.values, zeta, (0,))
    g = 1.0 - c * t * np.asarray(mv)
    z = np.asarray(zeta, dtype=float)
    out = z * g * g + (1.0 - c) * t * g
    return float(out) if out.ndim == 0 else out


def _phi_prime_real(spec: Spectrum, params: ModelParams, zeta):
    c, t = params.c_n, params.t
    mv, mv1 = _real_sums(spec.values, zeta, (0, 1))
    g = 1.0 - c * t * np.asarray(mv)
    g1 = -c * t * np.asarray(mv1)
    z = np.asarray(zeta, dtype=float)
    out = g * g + 2.0 * z * g * g1 + (1.0 - c) * t * g1
    return float(out) if out.ndim == 0 else out


def _phi_second_real(spec: Spectrum, params: ModelParams, zeta):
    c, t = params.c_n, params.t
    mv, mv1, mv2 = _real_sums(spec.values, zeta, (0, 1, 2))
    g = 1.0 - c * t * mv
    g1 = -c * t * mv1
    g2 = -c * t * mv2
    return 4.0 * g * g1 + 2.0 * zeta * g1 * g1 + 2.0 * zeta * g * g2 + (1.0 - c) * t * g2


def find_right_edge(spec: Spectrum, params: ModelParams) -> EdgeData:
    """Locate the right edge for t > 0 (t = 0 short-circuits to the top atom).

    Brackets the critical-point equation on (d_1, d_1 + 1e6] starting at
    offset 1e-8 * max(1, d_1), shrinking toward d_1 if the equation is
    already positive there, and refines with a bracketed root solve to
    relative precision 1e-12.
    """
    d1 = spec.top
    t = params.t
    if t == 0.0:
        return EdgeData(
            lambda_plus=d1,
            zeta_plus=d1,
            xi_plus=0.0,
            velocity=float("nan"),
            sqrt_coeff=float("nan"),
            phi_second=0.0,
        )

    scale = max(1.0, d1)
    eps = 1e-8 * scale
    while _phi_prime_real(spec, params, d1 + eps) >= 0.0:
        eps /= 100.0
        if eps < _BRACKET_FLOOR * scale:
            raise EdgeBracketError(
                f"edge equation has no sign change above d1 + {_BRACKET_FLOOR * scale:.3e}"
            )
    lo = d1 + eps
    width = eps
    while _phi_prime_real(spec, params, d1 + width) < 0.0:
        lo = d1 + width
        width *= 2.0
        if width > _BRACKET_LIMIT:
            raise EdgeBracketError("edge equation stays negative out to d1 + 1e6")
    hi = d1 + width

    zeta_plus = brentq(
        lambda x: _phi_prime_real(spec, params, x),
        lo,
        hi,
        rtol=1e-12,
        xtol=1e-15 * scale,
    )
    lambda_plus = _phi_real(spec, params, zeta_plus)
    phi_second = float(_phi_second_real(spec, params, zeta_plus))
    if not (lambda_plus > d1 and phi_second > 0.0):
        raise EdgeBracketError(
            f"degenerate edge solve: lambda={lambda_plus}, phi''={phi_second}"
        )
    edge = EdgeData(
        lambda_plus=float(lambda_plus),
        zeta_plus=float(zeta_plus),
        xi_plus=float(zeta_plus - d1),
        velocity=0.0,
        sqrt_coeff=0.0,
        phi_second=phi_second,
    )
    return EdgeData(
        lambda_plus=edge.lambda_plus,
        zeta_plus=edge.zeta_plus,
        xi_plus=edge.xi_plus,
        velocity=edge_velocity(spec, params, edge),
        sqrt_coeff=sqrt_coefficient(spec, params, edge),
        phi_second=phi_second,
    )


def edge_velocity(spec: Spectrum, params: ModelParams, edge: EdgeData) -> float:
    """dlambda_+/dt expressed through bare-spectrum data at the critical point."""
    c, t = params.c_n, params.t
    if t == 0.0:
        return float("nan")
    zp, lp = edge.zeta_plus, edge.lambda_plus
    (mv,) = _real_sums(spec.values, zp, (0,))
    root = np.sqrt(t * t * (1.0 - c) ** 2 + 4.0 * zp * lp)
    return float(
        ((1.0 - c) / (2.0 * zp) - c * mv) * root - (1.0 - c) ** 2 * t / (2.0 * zp)
    )


def sqrt_coefficient(spec: Spectrum, params: ModelParams, edge: EdgeData) -> float:
    """Prefactor A in rho(E) ~ A * sqrt(lambda_+ - E) just inside the edge.

    Writing S = sqrt(t^2(1-c)^2 + 4 zeta z), the imaginary part of the
    inverted subordination relation gives Im m = Im zeta / (c t S), and
    Im zeta = sqrt(2 kappa / Phi'') by the quadratic expansion of Phi at
    its critical point; A collects the constants.
    """
    c, t = params.c_n, params.t
    if t == 0.0:
        return float("nan")
    zp, lp = edge.zeta_plus, edge.lambda_plus
    phi2 = edge.phi_second
    denom = (4.0 * lp * zp + (1.0 - c) ** 2 * t * t) * c * c * t * t * phi2
    if not denom > 0:
        raise ValueError(f"nonpositive edge-expansion denominator {denom}")
    return float(np.sqrt(2.0 / denom) / np.pi)


def bbp_threshold(spec: Spectrum, params: ModelParams, edge: EdgeData) -> float:
    """Critical signal strength: atoms above it detach from the bulk."""
    return edge.zeta_plus


def outlier_location(spec: Spectrum, params: ModelParams, edge: EdgeData, d: float) -> float:
    """Asymptotic position of the outlier produced by a supercritical atom d."""
    thr = bbp_threshold(spec, params, edge)
    if not d > thr:
        raise ValueError(f"atom {d} is not above the detachment threshold {thr}")
    if params.t == 0.0:
        return float(d)
    return float(_phi_real(spec, params, d))


def edge_report_json(edge: EdgeData, spec: Spectrum, params: ModelParams) -> str:
    def _clean(x: float):
        return float(x) if np.isfinite(x) else None

    return json.dumps(
        {
            "lambda_plus": _clean(edge.lambda_plus),
            "zeta_plus": _clean(edge.zeta_plus),
            "xi_plus": _clean(edge.xi_plus),
            "velocity": _clean(edge.velocity),
            "sqrt_coeff": _clean(edge.sqrt_coeff),
            "bbp_threshold": _clean(bbp_threshold(spec, params, edge)),
        }
    )
